//! Largest unitary eigenvalue of a pure state's amplitude tensor, i.e. its
//! maximal overlap with product states.
//!
//! The symmetric embedding `𝒮` of an order-`m` tensor is never formed. Its
//! action on a stacked vector `x = (x⁽¹⁾; …; x⁽ᵐ⁾)` is assembled from
//! block-skipped contractions of the original tensor, weighted by `(m−1)!`,
//! which gives `𝒮xᵐ = m!·f(x)` for the multilinear form `f`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qstate::PureState;

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 2000;
pub const DEFAULT_RESTARTS: usize = 20;
pub const DEFAULT_EPSILON: f64 = 1e-4;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct OrderMTensor {
    mode_dims: Vec<usize>,
    entries: Vec<Complex64>,
}

impl OrderMTensor {
    /// Row-major entries; the first mode varies slowest.
    pub fn new(mode_dims: Vec<usize>, entries: Vec<Complex64>) -> Result<Self> {
        if mode_dims.is_empty() || mode_dims.contains(&0) {
            return Err(Error::invalid("mode dimensions must be positive and non-empty"));
        }
        let n: usize = mode_dims.iter().product();
        if entries.len() != n {
            return Err(Error::invalid(format!(
                "modes {mode_dims:?} need {n} entries, got {}",
                entries.len()
            )));
        }
        Ok(OrderMTensor { mode_dims, entries })
    }

    pub fn from_pure_state(psi: &PureState) -> Self {
        OrderMTensor { mode_dims: vec![2; psi.n_qubits()], entries: psi.amplitudes().to_vec() }
    }

    pub fn mode_dims(&self) -> &[usize] {
        &self.mode_dims
    }

    pub fn order(&self) -> usize {
        self.mode_dims.len()
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn check_blocks(&self, blocks: &[Vec<Complex64>]) -> Result<()> {
        let ok = blocks.len() == self.order()
            && blocks.iter().zip(&self.mode_dims).all(|(b, &n)| b.len() == n);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "blocks of lengths {:?} do not fit modes {:?}",
                blocks.iter().map(Vec::len).collect::<Vec<_>>(),
                self.mode_dims
            )))
        }
    }

    /// Contracts every mode except `skip` against its block; the result has
    /// length `n_skip`, or length 1 when nothing is skipped.
    fn contract_except(&self, blocks: &[Vec<Complex64>], skip: Option<usize>) -> Vec<Complex64> {
        let m = self.order();
        let mut cur = self.entries.clone();
        // Trailing modes: cur is (outer, n_j) row-major.
        for j in (0..m).rev() {
            if Some(j) == skip {
                break;
            }
            let n = self.mode_dims[j];
            cur = cur
                .chunks_exact(n)
                .map(|row| row.iter().zip(&blocks[j]).map(|(a, b)| a * b).sum())
                .collect();
        }
        // Leading modes: cur is (n_j, rest) row-major.
        if let Some(s) = skip {
            for j in 0..s {
                let n = self.mode_dims[j];
                let rest = cur.len() / n;
                let mut next = vec![ZERO; rest];
                for (row, &xj) in cur.chunks_exact(rest).zip(&blocks[j]) {
                    next.iter_mut().zip(row).for_each(|(acc, a)| *acc += xj * a);
                }
                cur = next;
            }
        }
        cur
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Contraction {
    Scalar(Complex64),
    Vector(Vec<Complex64>),
}

/// `f(x) = Σ A[j₁…j_m]·x⁽¹⁾_{j₁}⋯x⁽ᵐ⁾_{j_m}` (no conjugation), or with
/// `skip = Some(i)` the vector `∂f/∂x⁽ⁱ⁾`.
pub fn block_contract(a: &OrderMTensor, blocks: &[Vec<Complex64>], skip: Option<usize>) -> Result<Contraction> {
    a.check_blocks(blocks)?;
    match skip {
        None => Ok(Contraction::Scalar(a.contract_except(blocks, None)[0])),
        Some(i) if i < a.order() => Ok(Contraction::Vector(a.contract_except(blocks, Some(i)))),
        Some(i) => Err(Error::invalid(format!("skip mode {i} out of range for order {}", a.order()))),
    }
}

fn split_blocks(a: &OrderMTensor, x: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
    let total: usize = a.mode_dims.iter().sum();
    if x.len() != total {
        return Err(Error::invalid(format!("stacked vector has length {}, expected {total}", x.len())));
    }
    let mut out = Vec::with_capacity(a.order());
    let mut start = 0;
    for &n in &a.mode_dims {
        out.push(x[start..start + n].to_vec());
        start += n;
    }
    Ok(out)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `𝒮x^{m−1}`: block `i` is `(m−1)!·∂f/∂x⁽ⁱ⁾`.
pub fn sym_apply(a: &OrderMTensor, x: &[Complex64]) -> Result<Vec<Complex64>> {
    let blocks = split_blocks(a, x)?;
    Ok(sym_apply_blocks(a, &blocks))
}

fn sym_apply_blocks(a: &OrderMTensor, blocks: &[Vec<Complex64>]) -> Vec<Complex64> {
    let w = factorial(a.order() - 1);
    (0..a.order()).flat_map(|i| a.contract_except(blocks, Some(i)).into_iter().map(move |z| z * w)).collect()
}

/// `𝒮xᵐ = m!·f(x)`.
pub fn sym_form(a: &OrderMTensor, x: &[Complex64]) -> Result<Complex64> {
    let blocks = split_blocks(a, x)?;
    Ok(a.contract_except(&blocks, None)[0] * factorial(a.order()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UEigenpair {
    pub lambda_a: f64,
    /// Unit vectors, one per mode.
    pub block_vectors: Vec<Vec<Complex64>>,
    pub lambda_s: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `|λ_k|` for `k = 0, 1, …`.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UEigenConfig {
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for UEigenConfig {
    fn default() -> Self {
        UEigenConfig { alpha: DEFAULT_ALPHA, tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

fn normalize(v: &mut [Complex64]) -> f64 {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|z| *z /= n);
    }
    n
}

fn conj_all(v: &[Complex64]) -> Vec<Complex64> {
    v.iter().map(|z| z.conj()).collect()
}

/// `𝒮*xᵐ = conj(𝒮 x̄ᵐ)`.
fn conj_form(a: &OrderMTensor, x: &[Complex64]) -> Complex64 {
    let blocks = split_blocks(a, &conj_all(x)).expect("stacked length checked");
    (a.contract_except(&blocks, None)[0] * factorial(a.order())).conj()
}

/// Shifted power iteration for a U-eigenpair from a random unit start.
pub fn u_eigenpair<R: Rng + ?Sized>(a: &OrderMTensor, config: &UEigenConfig, rng: &mut R) -> Result<UEigenpair> {
    let norm = a.frobenius_norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::invalid(format!("tensor must have unit norm, got {norm}")));
    }
    if !(config.alpha > 0.0) || !(config.tol > 0.0) {
        return Err(Error::invalid("alpha and tol must be positive"));
    }
    let n: usize = a.mode_dims.iter().sum();
    let mut x: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    normalize(&mut x);
    u_eigenpair_from(a, config, x)
}

/// As [`u_eigenpair`] with an explicit starting point.
pub fn u_eigenpair_from(a: &OrderMTensor, config: &UEigenConfig, mut x: Vec<Complex64>) -> Result<UEigenpair> {
    if normalize(&mut x) == 0.0 {
        return Err(Error::invalid("starting vector must be non-zero"));
    }
    let m = a.order();
    let mut lambda = {
        split_blocks(a, &x)?;
        conj_form(a, &x)
    };
    let mut history = vec![lambda.norm()];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        iterations += 1;
        let blocks = split_blocks(a, &conj_all(&x))?;
        let s = sym_apply_blocks(a, &blocks);
        let mut next: Vec<Complex64> = s.iter().zip(&x).map(|(sv, xv)| lambda * sv + config.alpha * xv).collect();
        normalize(&mut next);
        x = next;
        let new_lambda = conj_form(a, &x);
        history.push(new_lambda.norm());
        let delta = (new_lambda - lambda).norm();
        lambda = new_lambda;
        if delta < config.tol {
            converged = true;
            break;
        }
    }
    let lambda_s = lambda.norm();
    let phase = if lambda_s > 0.0 {
        Complex64::new(lambda_s, 0.0) / lambda
    } else {
        Complex64::new(1.0, 0.0)
    };
    let root = phase.powf(1.0 / m as f64);
    let scale = (m as f64).sqrt();
    let mut block_vectors = split_blocks(a, &x)?;
    for b in &mut block_vectors {
        b.iter_mut().for_each(|z| *z *= root * scale);
        normalize(b);
    }
    let lambda_a = scale.powi(m as i32) / factorial(m) * lambda_s;
    Ok(UEigenpair { lambda_a, block_vectors, lambda_s, iterations, converged, history })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmeConfig {
    pub eigen: UEigenConfig,
    pub restarts: usize,
    pub epsilon: f64,
}

impl Default for GmeConfig {
    fn default() -> Self {
        GmeConfig { eigen: UEigenConfig::default(), restarts: DEFAULT_RESTARTS, epsilon: DEFAULT_EPSILON }
    }
}

/// Best converged restart.
#[derive(Debug, Clone, PartialEq)]
pub struct GmeResult {
    pub best: UEigenpair,
    pub restart_index: usize,
    pub converged_restarts: usize,
}

fn restart_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Runs `config.restarts` independent starts (restart `i` seeded from
/// `(seed, i)`) and keeps the largest converged `λ_A`, ties to the lowest
/// index.
pub fn max_overlap(a: &OrderMTensor, config: &GmeConfig, seed: u64) -> Result<GmeResult> {
    if config.restarts == 0 {
        return Err(Error::invalid("restarts must be at least 1"));
    }
    let runs: Vec<UEigenpair> = (0..config.restarts)
        .into_par_iter()
        .map(|i| u_eigenpair(a, &config.eigen, &mut restart_rng(seed, i)))
        .collect::<Result<_>>()?;
    let converged_restarts = runs.iter().filter(|r| r.converged).count();
    let mut best: Option<(usize, UEigenpair)> = None;
    for (i, r) in runs.into_iter().enumerate() {
        if r.converged && best.as_ref().is_none_or(|(_, b)| r.lambda_a > b.lambda_a) {
            best = Some((i, r));
        }
    }
    let (restart_index, best) = best.ok_or_else(|| {
        Error::InternalFailure(format!("none of {} restarts converged", config.restarts))
    })?;
    Ok(GmeResult { best, restart_index, converged_restarts })
}

/// `true` when the state is entangled, i.e. its best overlap with product
/// states is below `1 − ε`.
pub fn gme_label(psi: &PureState, config: &GmeConfig, seed: u64) -> Result<bool> {
    let r = max_overlap(&OrderMTensor::from_pure_state(psi), config, seed)?;
    Ok(r.best.lambda_a < 1.0 - config.epsilon)
}
