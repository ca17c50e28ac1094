//! Quantum state generation and PPT labeling.
//!
//! Mixed states are sampled from the induced (Ginibre) measure `HH†/tr(HH†)`,
//! combined into separable and bi-separable mixtures, and labeled with the
//! positive-partial-transpose criterion. Every generator takes an explicit
//! random stream, so identical seeds reproduce identical states bit for bit.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Elementwise tolerance for `ρ[i][j] == conj(ρ[j][i])`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance on `|tr ρ - 1|`.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest eigenvalue still counted as non-negative (PSD check and PPT test).
pub const EIGEN_TOL: f64 = 1e-10;
/// Tolerance on `|Σλ - 1|` for mixture weights and on pure-state norms.
pub const WEIGHT_TOL: f64 = 1e-12;
/// Upper bound of the number of product terms drawn per separable sample.
pub const MAX_TERMS: usize = 20;
/// Rejection loops give up after this many draws.
pub const MAX_REJECTION_ATTEMPTS: u64 = 1_000_000;

/// Hermitian, positive semidefinite, unit-trace complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Wraps `matrix` after checking every density-matrix invariant.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let rho = DensityMatrix { matrix };
        rho.check_invariants()?;
        Ok(rho)
    }

    pub(crate) fn from_trusted(matrix: CMatrix) -> Self {
        debug_assert!(matrix.is_square());
        DensityMatrix { matrix }
    }

    pub fn from_pure(psi: &PureState) -> Self {
        let amps = &psi.amplitudes;
        let dim = amps.len();
        let matrix = CMatrix::from_fn(dim, dim, |i, j| amps[i] * amps[j].conj());
        DensityMatrix { matrix }
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        let scale = Complex64::new(1.0 / dim as f64, 0.0);
        Ok(DensityMatrix { matrix: CMatrix::identity(dim, dim) * scale })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_hermitian_eigenvalue(&self.matrix)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let m = &self.matrix;
        if m.nrows() == 0 || !m.is_square() {
            return Err(Error::invalid(format!(
                "density matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        for i in 0..n {
            for j in i..n {
                let (a, b) = (m[(i, j)], m[(j, i)].conj());
                if !a.re.is_finite() || !a.im.is_finite() {
                    return Err(Error::invalid(format!("non-finite entry at ({i}, {j})")));
                }
                if (a - b).norm() > HERMITIAN_TOL {
                    return Err(Error::invalid(format!("not Hermitian at ({i}, {j})")));
                }
            }
        }
        let tr = m.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::invalid(format!("trace {tr} differs from 1")));
        }
        let min_eig = min_hermitian_eigenvalue(m);
        if min_eig < -EIGEN_TOL {
            return Err(Error::invalid(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(())
    }
}

/// Unit-norm amplitude vector over `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl PureState {
    pub fn new(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if n_qubits == 0 || n_qubits >= usize::BITS as usize {
            return Err(Error::invalid(format!("unsupported qubit count {n_qubits}")));
        }
        if amplitudes.len() != 1 << n_qubits {
            return Err(Error::invalid(format!(
                "{} amplitudes cannot describe {n_qubits} qubits",
                amplitudes.len()
            )));
        }
        let norm = vector_norm(&amplitudes);
        if (norm - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::invalid(format!("state norm {norm} differs from 1")));
        }
        Ok(PureState { n_qubits, amplitudes })
    }

    /// Normalizes `amplitudes` before wrapping them.
    pub fn normalized(n_qubits: usize, mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = vector_norm(&amplitudes);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::invalid("cannot normalize a zero vector"));
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        PureState::new(n_qubits, amplitudes)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        vector_norm(&self.amplitudes)
    }
}

/// Subsystem layout and convex weights of a separable mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    subsystem_dims: Vec<usize>,
    weights: Vec<f64>,
}

impl MixtureSpec {
    pub fn new(subsystem_dims: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if subsystem_dims.is_empty() || subsystem_dims.contains(&0) {
            return Err(Error::invalid("subsystem dimensions must be positive"));
        }
        if weights.is_empty() {
            return Err(Error::invalid("mixture needs at least one term"));
        }
        if weights.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
            return Err(Error::invalid("mixture weights must lie in [0, 1]"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(MixtureSpec { subsystem_dims, weights })
    }

    /// Draws the number of terms uniformly from `1..=MAX_TERMS` and the
    /// weights from the flat Dirichlet distribution.
    pub fn random<R: Rng + ?Sized>(subsystem_dims: Vec<usize>, rng: &mut R) -> Result<Self> {
        let n_terms = rng.random_range(1..=MAX_TERMS);
        let weights = flat_dirichlet(n_terms, rng);
        MixtureSpec::new(subsystem_dims, weights)
    }

    pub fn subsystem_dims(&self) -> &[usize] {
        &self.subsystem_dims
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_terms(&self) -> usize {
        self.weights.len()
    }

    pub fn total_dim(&self) -> usize {
        self.subsystem_dims.iter().product()
    }
}

fn flat_dirichlet<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im)
}

fn vector_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `HH†/tr(HH†)` for a given square `h`.
pub fn ginibre_state(h: &CMatrix) -> Result<DensityMatrix> {
    if h.nrows() == 0 || !h.is_square() {
        return Err(Error::invalid("Ginibre matrix must be square and non-empty"));
    }
    let product = h * h.adjoint();
    let tr = product.trace().re;
    if tr <= 0.0 || !tr.is_finite() {
        return Err(Error::invalid("Ginibre matrix has zero norm"));
    }
    let n = product.nrows();
    // Mirror the upper triangle so the result is exactly Hermitian.
    let matrix = CMatrix::from_fn(n, n, |i, j| {
        if i <= j {
            product[(i, j)] / tr
        } else {
            product[(j, i)].conj() / tr
        }
    });
    Ok(DensityMatrix::from_trusted(matrix))
}

pub fn random_density_matrix<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<DensityMatrix> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let h = CMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng));
    ginibre_state(&h)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = CMatrix::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

fn kron_all<'a>(factors: impl IntoIterator<Item = &'a CMatrix>) -> CMatrix {
    factors
        .into_iter()
        .fold(CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)), |acc, f| kron(&acc, f))
}

/// `Σᵢ λᵢ ⊗ⱼ ρʲᵢ` with every factor drawn from the Ginibre ensemble.
pub fn separable_mixed_state<R: Rng + ?Sized>(
    spec: &MixtureSpec,
    rng: &mut R,
) -> Result<DensityMatrix> {
    let mut terms = Vec::with_capacity(spec.n_terms());
    for _ in 0..spec.n_terms() {
        let factors = spec
            .subsystem_dims
            .iter()
            .map(|&d| random_density_matrix(d, rng).map(DensityMatrix::into_matrix))
            .collect::<Result<Vec<_>>>()?;
        terms.push(factors);
    }
    mix_products(&spec.weights, &terms)
}

/// Separable mixture from explicitly supplied product factors.
pub fn separable_from_factors(weights: &[f64], terms: &[Vec<CMatrix>]) -> Result<DensityMatrix> {
    if weights.len() != terms.len() {
        return Err(Error::invalid("one factor list per weight is required"));
    }
    let dims: Vec<usize> = match terms.first() {
        Some(first) => first.iter().map(|f| f.nrows()).collect(),
        None => return Err(Error::invalid("mixture needs at least one term")),
    };
    MixtureSpec::new(dims.clone(), weights.to_vec())?;
    for term in terms {
        let term_dims: Vec<usize> = term.iter().map(|f| f.nrows()).collect();
        if term_dims != dims || term.iter().any(|f| !f.is_square()) {
            return Err(Error::invalid("every term must use the same square factor shapes"));
        }
    }
    mix_products(weights, terms)
}

fn mix_products(weights: &[f64], terms: &[Vec<CMatrix>]) -> Result<DensityMatrix> {
    let mut acc: Option<CMatrix> = None;
    for (&w, factors) in weights.iter().zip(terms) {
        let product = kron_all(factors) * Complex64::new(w, 0.0);
        acc = Some(match acc {
            Some(sum) => sum + product,
            None => product,
        });
    }
    acc.map(DensityMatrix::from_trusted)
        .ok_or_else(|| Error::invalid("mixture needs at least one term"))
}

/// Reorders the tensor factors of `m`: output subsystem `q` is input subsystem
/// `perm[q]`. `dims` lists the input subsystem dimensions.
pub fn permute_subsystems(m: &CMatrix, dims: &[usize], perm: &[usize]) -> Result<CMatrix> {
    let n = dims.len();
    let total: usize = dims.iter().product();
    if m.nrows() != total || m.ncols() != total {
        return Err(Error::invalid(format!(
            "matrix of size {}x{} does not match subsystem dims {dims:?}",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::invalid(format!("{perm:?} is not a permutation of {n} subsystems")));
    }
    let out_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let in_strides = strides(dims);
    let map: Vec<usize> = (0..total)
        .map(|flat| {
            let digits = unravel(flat, &out_dims);
            digits.iter().zip(perm).map(|(&d, &p)| d * in_strides[p]).sum()
        })
        .collect();
    Ok(CMatrix::from_fn(total, total, |r, c| m[(map[r], map[c])]))
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

fn unravel(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut digits = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        digits[k] = flat % dims[k];
        flat /= dims[k];
    }
    digits
}

fn check_block(dims: &[usize], block: (usize, usize)) -> Result<()> {
    let (a, b) = block;
    if a >= dims.len() || b >= dims.len() || a == b {
        return Err(Error::invalid(format!(
            "block {block:?} is not a pair of distinct subsystems of {dims:?}"
        )));
    }
    Ok(())
}

/// `Σᵢ λᵢ ρ^rest_i ⊗ ρ^block_i` where the merged block factor is a random NPT
/// state of the joint dimension. Factors are placed back in subsystem order.
pub fn biseparable_state<R: Rng + ?Sized>(
    spec: &MixtureSpec,
    block: (usize, usize),
    rng: &mut R,
) -> Result<DensityMatrix> {
    let dims = spec.subsystem_dims();
    check_block(dims, block)?;
    let mut terms = Vec::with_capacity(spec.n_terms());
    for _ in 0..spec.n_terms() {
        let rest = dims
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != block.0 && k != block.1)
            .map(|(_, &d)| random_density_matrix(d, rng).map(DensityMatrix::into_matrix))
            .collect::<Result<Vec<_>>>()?;
        let (pair, _) = sample_npt_state((dims[block.0], dims[block.1]), rng)?;
        terms.push((rest, pair.into_matrix()));
    }
    biseparable_from_factors(dims, block, spec.weights(), &terms)
}

/// Bi-separable mixture from supplied factors: each term is the list of
/// single-subsystem states (in subsystem order, block members skipped) and
/// the joint state of the block.
pub fn biseparable_from_factors(
    dims: &[usize],
    block: (usize, usize),
    weights: &[f64],
    terms: &[(Vec<CMatrix>, CMatrix)],
) -> Result<DensityMatrix> {
    check_block(dims, block)?;
    MixtureSpec::new(dims.to_vec(), weights.to_vec())?;
    if weights.len() != terms.len() {
        return Err(Error::invalid("one term per weight is required"));
    }
    // Layout of the product before reordering: remaining subsystems, then the block.
    let mut layout: Vec<usize> = (0..dims.len()).filter(|&k| k != block.0 && k != block.1).collect();
    layout.push(block.0);
    layout.push(block.1);
    let layout_dims: Vec<usize> = layout.iter().map(|&k| dims[k]).collect();
    let block_dim = dims[block.0] * dims[block.1];
    let mut product_terms = Vec::with_capacity(terms.len());
    for (rest, pair) in terms {
        if rest.len() != dims.len() - 2 || pair.nrows() != block_dim || pair.ncols() != block_dim {
            return Err(Error::invalid("term factors do not match the subsystem layout"));
        }
        for (f, &k) in rest.iter().zip(&layout) {
            if f.nrows() != dims[k] || f.ncols() != dims[k] {
                return Err(Error::invalid("term factors do not match the subsystem layout"));
            }
        }
        let mut factors = rest.clone();
        factors.push(pair.clone());
        product_terms.push(factors);
    }
    let mixed = mix_products(weights, &product_terms)?;
    let perm: Vec<usize> = (0..dims.len())
        .map(|q| layout.iter().position(|&k| k == q).expect("layout covers all subsystems"))
        .collect();
    permute_subsystems(mixed.matrix(), &layout_dims, &perm).map(DensityMatrix::from_trusted)
}

/// Partition order used by [`mixture_of_bipartitions`]: A|BC, B|AC, C|AB.
pub const BIPARTITION_BLOCKS: [(usize, usize); 3] = [(1, 2), (0, 2), (0, 1)];

/// Convex combination of the three bi-separable families of a tripartite
/// system. Partitions with zero weight draw no randomness.
pub fn mixture_of_bipartitions<R: Rng + ?Sized>(
    partition_weights: &[f64; 3],
    specs: &[MixtureSpec; 3],
    rng: &mut R,
) -> Result<DensityMatrix> {
    let dims = specs[0].subsystem_dims();
    if dims.len() != 3 || specs.iter().any(|s| s.subsystem_dims() != dims) {
        return Err(Error::invalid("all three partitions must share a tripartite layout"));
    }
    if partition_weights.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
        return Err(Error::invalid("partition weights must lie in [0, 1]"));
    }
    let total: f64 = partition_weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::invalid(format!("partition weights sum to {total}, not 1")));
    }
    let mut acc: Option<CMatrix> = None;
    for ((&w, spec), &block) in partition_weights.iter().zip(specs).zip(&BIPARTITION_BLOCKS) {
        if w == 0.0 {
            continue;
        }
        let part = biseparable_state(spec, block, rng)?.into_matrix();
        let part = if w == 1.0 { part } else { part * Complex64::new(w, 0.0) };
        acc = Some(match acc {
            Some(sum) => sum + part,
            None => part,
        });
    }
    acc.map(DensityMatrix::from_trusted)
        .ok_or_else(|| Error::invalid("no partition has positive weight"))
}

fn random_qubit<R: Rng + ?Sized>(rng: &mut R) -> Vec<Complex64> {
    let mut v = vec![complex_gaussian(rng), complex_gaussian(rng)];
    let norm = vector_norm(&v);
    v.iter_mut().for_each(|a| *a /= norm);
    v
}

pub fn random_pure_product_state<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> Result<PureState> {
    if n_qubits == 0 {
        return Err(Error::invalid("at least one qubit is required"));
    }
    let factors: Vec<Vec<Complex64>> = (0..n_qubits).map(|_| random_qubit(rng)).collect();
    pure_product_from_factors(&factors)
}

/// Kronecker product of unit single-qubit vectors.
pub fn pure_product_from_factors(factors: &[Vec<Complex64>]) -> Result<PureState> {
    if factors.is_empty() {
        return Err(Error::invalid("at least one qubit is required"));
    }
    let mut amps = vec![Complex64::new(1.0, 0.0)];
    for f in factors {
        if f.len() != 2 || (vector_norm(f) - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::invalid("qubit factors must be unit 2-vectors"));
        }
        amps = amps.iter().flat_map(|&a| f.iter().map(move |&b| a * b)).collect();
    }
    // Renormalize away the accumulated rounding of the product.
    PureState::normalized(factors.len(), amps)
}

pub fn random_pure_state<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> Result<PureState> {
    if n_qubits == 0 || n_qubits > 30 {
        return Err(Error::invalid(format!("unsupported qubit count {n_qubits}")));
    }
    let amps: Vec<Complex64> = (0..1usize << n_qubits).map(|_| complex_gaussian(rng)).collect();
    PureState::normalized(n_qubits, amps)
}

/// Transposes the tensor factors listed in `transposed`.
pub fn partial_transpose(rho: &CMatrix, dims: &[usize], transposed: &[usize]) -> Result<CMatrix> {
    let total: usize = dims.iter().product();
    if dims.is_empty() || rho.nrows() != total || rho.ncols() != total {
        return Err(Error::invalid(format!(
            "matrix of size {}x{} does not match subsystem dims {dims:?}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    if let Some(&bad) = transposed.iter().find(|&&k| k >= dims.len()) {
        return Err(Error::invalid(format!("subsystem {bad} out of range for {dims:?}")));
    }
    let mut mask = vec![false; dims.len()];
    transposed.iter().for_each(|&k| mask[k] = true);
    let st = strides(dims);
    let mut out = CMatrix::zeros(total, total);
    for r in 0..total {
        let rd = unravel(r, dims);
        for c in 0..total {
            let cd = unravel(c, dims);
            let (mut r2, mut c2) = (0, 0);
            for k in 0..dims.len() {
                let (a, b) = if mask[k] { (cd[k], rd[k]) } else { (rd[k], cd[k]) };
                r2 += a * st[k];
                c2 += b * st[k];
            }
            out[(r2, c2)] = rho[(r, c)];
        }
    }
    Ok(out)
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_hermitian_eigenvalue(m: &CMatrix) -> f64 {
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// True iff the partial transpose over `cut` has no eigenvalue below `-EIGEN_TOL`.
pub fn is_ppt(rho: &CMatrix, dims: &[usize], cut: &[usize]) -> Result<bool> {
    let pt = partial_transpose(rho, dims, cut)?;
    Ok(min_hermitian_eigenvalue(&pt) >= -EIGEN_TOL)
}

/// Rejection-samples a Ginibre state on `d₁⊗d₂` whose partial transpose over
/// the second factor has a negative eigenvalue. Also returns the number of
/// draws it took.
pub fn sample_npt_state<R: Rng + ?Sized>(
    dims: (usize, usize),
    rng: &mut R,
) -> Result<(DensityMatrix, u64)> {
    let layout = [dims.0, dims.1];
    for attempt in 1..=MAX_REJECTION_ATTEMPTS {
        let rho = random_density_matrix(dims.0 * dims.1, rng)?;
        if !is_ppt(rho.matrix(), &layout, &[1])? {
            return Ok((rho, attempt));
        }
    }
    Err(Error::InternalFailure(format!(
        "no NPT state found in {MAX_REJECTION_ATTEMPTS} attempts"
    )))
}

/// Random two-qubit entangled state; NPT is exact for 2⊗2.
pub fn sample_entangled_2qubit<R: Rng + ?Sized>(rng: &mut R) -> Result<DensityMatrix> {
    sample_npt_state((2, 2), rng).map(|(rho, _)| rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn bell() -> CMatrix {
        let h = 0.5;
        let mut m = CMatrix::zeros(4, 4);
        for &(i, j) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
            m[(i, j)] = c(h, 0.0);
        }
        m
    }

    fn projector(dim: usize, k: usize) -> CMatrix {
        let mut m = CMatrix::zeros(dim, dim);
        m[(k, k)] = c(1.0, 0.0);
        m
    }

    #[test]
    fn dim_one_is_trivial() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density_matrix(1, &mut rng).unwrap();
        assert_eq!(rho.matrix()[(0, 0)], c(1.0, 0.0));
    }

    #[test]
    fn zero_dim_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(random_density_matrix(0, &mut rng), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn identity_ginibre_gives_maximally_mixed() {
        let rho = ginibre_state(&CMatrix::identity(2, 2)).unwrap();
        assert_eq!(rho.matrix(), DensityMatrix::maximally_mixed(2).unwrap().matrix());
    }

    #[test]
    fn random_states_satisfy_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            random_density_matrix(4, &mut rng).unwrap().check_invariants().unwrap();
        }
    }

    #[test]
    fn kron_examples() {
        let i2 = CMatrix::identity(2, 2);
        assert_eq!(kron(&i2, &i2), CMatrix::identity(4, 4));
        let p = kron(&projector(2, 0), &projector(2, 1));
        assert_eq!(p, projector(4, 1));
    }

    #[test]
    fn kron_trace_is_multiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = CMatrix::from_fn(2, 2, |_, _| complex_gaussian(&mut rng));
        let b = CMatrix::from_fn(2, 2, |_, _| complex_gaussian(&mut rng));
        let lhs = kron(&a, &b).trace();
        let rhs = a.trace() * b.trace();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn single_product_term() {
        let p0 = projector(2, 0);
        let rho = separable_from_factors(&[1.0], &[vec![p0.clone(), p0]]).unwrap();
        assert_eq!(rho.matrix(), &projector(4, 0));
    }

    #[test]
    fn mixture_spec_validation() {
        assert!(MixtureSpec::new(vec![2, 2], vec![0.5, 0.4]).is_err());
        assert!(MixtureSpec::new(vec![2, 2], vec![1.5, -0.5]).is_err());
        assert!(MixtureSpec::new(vec![], vec![1.0]).is_err());
        assert!(MixtureSpec::new(vec![2, 2], vec![0.25; 4]).is_ok());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let s = MixtureSpec::random(vec![2, 2], &mut rng).unwrap();
            assert!((1..=MAX_TERMS).contains(&s.n_terms()));
        }
    }

    #[test]
    fn separable_states_are_ppt_on_every_cut() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = MixtureSpec::new(vec![2, 2, 2], vec![0.2; 5]).unwrap();
        let rho = separable_mixed_state(&spec, &mut rng).unwrap();
        rho.check_invariants().unwrap();
        for cut in 0..3 {
            assert!(is_ppt(rho.matrix(), &[2, 2, 2], &[cut]).unwrap());
        }
    }

    #[test]
    fn bell_partial_transpose() {
        let pt = partial_transpose(&bell(), &[2, 2], &[1]).unwrap();
        assert!((min_hermitian_eigenvalue(&pt) + 0.5).abs() < 1e-12);
        assert!(!is_ppt(&bell(), &[2, 2], &[1]).unwrap());
        let mixed = DensityMatrix::maximally_mixed(4).unwrap();
        assert!(is_ppt(mixed.matrix(), &[2, 2], &[1]).unwrap());
    }

    #[test]
    fn partial_transpose_of_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_density_matrix(2, &mut rng).unwrap().into_matrix();
        let b = random_density_matrix(3, &mut rng).unwrap().into_matrix();
        let pt = partial_transpose(&kron(&a, &b), &[2, 3], &[1]).unwrap();
        assert!((pt - kron(&a, &b.transpose())).norm() < 1e-15);
    }

    #[test]
    fn partial_transpose_is_an_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = random_density_matrix(8, &mut rng).unwrap().into_matrix();
        let once = partial_transpose(&rho, &[2, 2, 2], &[0, 2]).unwrap();
        assert_eq!(partial_transpose(&once, &[2, 2, 2], &[0, 2]).unwrap(), rho);
    }

    #[test]
    fn partial_transpose_dimension_mismatch() {
        let rho = CMatrix::identity(4, 4);
        assert!(partial_transpose(&rho, &[2, 3], &[1]).is_err());
        assert!(partial_transpose(&rho, &[2, 2], &[2]).is_err());
    }

    #[test]
    fn biseparable_with_bell_block() {
        let terms = vec![(vec![projector(2, 0)], bell())];
        let rho = biseparable_from_factors(&[2, 2, 2], (1, 2), &[1.0], &terms).unwrap();
        assert_eq!(rho.matrix(), &kron(&projector(2, 0), &bell()));
        assert!(!is_ppt(rho.matrix(), &[2, 2, 2], &[2]).unwrap());
        assert!(is_ppt(rho.matrix(), &[2, 2, 2], &[0]).unwrap());
    }

    #[test]
    fn biseparable_block_out_of_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = MixtureSpec::new(vec![2, 2, 2], vec![1.0]).unwrap();
        assert!(biseparable_state(&spec, (1, 3), &mut rng).is_err());
        assert!(biseparable_state(&spec, (1, 1), &mut rng).is_err());
    }

    #[test]
    fn nonadjacent_block_is_a_qubit_swap() {
        let spec = MixtureSpec::new(vec![2, 2, 2], vec![0.3, 0.7]).unwrap();
        let bc = biseparable_state(&spec, (1, 2), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let ac = biseparable_state(&spec, (0, 2), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let swapped = permute_subsystems(bc.matrix(), &[2, 2, 2], &[1, 0, 2]).unwrap();
        assert_eq!(&swapped, ac.matrix());
    }

    #[test]
    fn bipartition_mixture_degenerates_to_single_family() {
        let spec = MixtureSpec::new(vec![2, 2, 2], vec![0.5, 0.5]).unwrap();
        let specs = [spec.clone(), spec.clone(), spec.clone()];
        let mixed =
            mixture_of_bipartitions(&[1.0, 0.0, 0.0], &specs, &mut ChaCha8Rng::seed_from_u64(8))
                .unwrap();
        let single = biseparable_state(&spec, (1, 2), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(mixed, single);
        let third = 1.0 / 3.0;
        let even = mixture_of_bipartitions(
            &[third, third, 1.0 - 2.0 * third],
            &specs,
            &mut ChaCha8Rng::seed_from_u64(8),
        )
        .unwrap();
        even.check_invariants().unwrap();
        assert!(mixture_of_bipartitions(&[0.5, 0.4, 0.0], &specs, &mut ChaCha8Rng::seed_from_u64(8))
            .is_err());
    }

    #[test]
    fn pure_product_of_basis_states() {
        let zero = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let one = vec![c(0.0, 0.0), c(1.0, 0.0)];
        let psi = pure_product_from_factors(&[zero, one]).unwrap();
        assert_eq!(psi.amplitudes(), &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn pure_states_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in 1..=5 {
            let a = random_pure_state(n, &mut rng).unwrap();
            let b = random_pure_product_state(n, &mut rng).unwrap();
            assert!((a.norm() - 1.0).abs() < 1e-12);
            assert!((b.norm() - 1.0).abs() < 1e-12);
            DensityMatrix::from_pure(&b).check_invariants().unwrap();
        }
        assert!(random_pure_state(0, &mut rng).is_err());
    }

    #[test]
    fn entangled_samples_are_npt() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let rho = sample_entangled_2qubit(&mut rng).unwrap();
            rho.check_invariants().unwrap();
            assert!(!is_ppt(rho.matrix(), &[2, 2], &[1]).unwrap());
        }
    }

    #[test]
    fn seeds_reproduce_states() {
        let spec = MixtureSpec::new(vec![2, 2], vec![0.5, 0.5]).unwrap();
        let a = separable_mixed_state(&spec, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let b = separable_mixed_state(&spec, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
    }
}
