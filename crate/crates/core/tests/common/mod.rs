#![allow(dead_code)]

use entwitness::cvnn::gradcheck::{relative_error, GradCheck};
use entwitness::cvnn::{CTensor, Network};
use entwitness::model::{loss_adv, loss_l1, loss_l2, loss_total, ModelState};
use entwitness::Result;
use num_complex::Complex64;
use rand::Rng;

pub fn random_tensor<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> CTensor {
    let n: usize = shape.iter().product();
    let re = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let im = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    CTensor::from_parts(shape, re, im).unwrap()
}

fn random_qubit<R: Rng + ?Sized>(rng: &mut R) -> [Complex64; 2] {
    loop {
        let v = [
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        ];
        let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        if n > 1e-3 {
            return [v[0] / n, v[1] / n];
        }
    }
}

/// `⟨x₁⊗…⊗xₙ|ψ⟩` by explicit summation; qubit 0 is the most significant
/// index bit.
fn overlap(psi: &[Complex64], xs: &[[Complex64; 2]]) -> Complex64 {
    let n = xs.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for (idx, a) in psi.iter().enumerate() {
        let mut w = *a;
        for (q, x) in xs.iter().enumerate() {
            w *= x[(idx >> (n - 1 - q)) & 1].conj();
        }
        acc += w;
    }
    acc
}

/// One alternating sweep: each factor is replaced by the normalized partial
/// contraction of `ψ` with the other factors, which maximizes the overlap
/// over that factor alone.
fn als_sweep(psi: &[Complex64], xs: &mut [[Complex64; 2]]) {
    let n = xs.len();
    for k in 0..n {
        let mut g = [Complex64::new(0.0, 0.0); 2];
        for (idx, a) in psi.iter().enumerate() {
            let mut w = *a;
            for (q, x) in xs.iter().enumerate() {
                if q != k {
                    w *= x[(idx >> (n - 1 - q)) & 1].conj();
                }
            }
            g[(idx >> (n - 1 - k)) & 1] += w;
        }
        let norm = (g[0].norm_sqr() + g[1].norm_sqr()).sqrt();
        if norm > 0.0 {
            xs[k] = [g[0] / norm, g[1] / norm];
        }
    }
}

/// Largest `|⟨x₁⊗…⊗xₙ|ψ⟩|` found by evaluating `starts` random product
/// states, then refining the best few by alternating maximization.
pub fn brute_force_overlap<R: Rng + ?Sized>(psi: &[Complex64], n: usize, starts: usize, rng: &mut R) -> f64 {
    assert_eq!(psi.len(), 1 << n);
    let mut pool: Vec<(f64, Vec<[Complex64; 2]>)> = Vec::new();
    const KEEP: usize = 16;
    for _ in 0..starts {
        let xs: Vec<[Complex64; 2]> = (0..n).map(|_| random_qubit(rng)).collect();
        let v = overlap(psi, &xs).norm();
        if pool.len() < KEEP || v > pool[pool.len() - 1].0 {
            pool.push((v, xs));
            pool.sort_by(|a, b| b.0.total_cmp(&a.0));
            pool.truncate(KEEP);
        }
    }
    let mut best = 0.0f64;
    for (_, mut xs) in pool {
        let mut prev = -1.0;
        for _ in 0..10_000 {
            als_sweep(psi, &mut xs);
            let v = overlap(psi, &xs).norm();
            if (v - prev).abs() < 1e-15 {
                break;
            }
            prev = v;
        }
        best = best.max(overlap(psi, &xs).norm());
    }
    best
}

/// `ℒ₃` with every network in training mode, as the generator step sees it.
pub fn generator_loss(m: &ModelState, x: &CTensor) -> Result<f64> {
    let (v1, _) = m.er.forward_train(x)?;
    let (gen, _) = m.g.forward_train(&v1)?;
    let (v2, _) = m.eg.forward_train(&gen)?;
    let l1 = loss_l1(&v1, &v2)?;
    let l2 = loss_l2(x, &gen)?;
    let adv2 = if m.weights.wa != 0.0 {
        let (d, _) = m.d.forward_train(&gen)?;
        -d.re().iter().sum::<f64>() / x.batch() as f64
    } else {
        0.0
    };
    Ok(loss_total(l1, l2, adv2, &m.weights))
}

/// `ℒ_adv1` with `D` in training mode on each of its two inputs.
pub fn discriminator_loss(m: &ModelState, x: &CTensor) -> Result<f64> {
    let (v1, _) = m.er.forward_train(x)?;
    let (gen, _) = m.g.forward_train(&v1)?;
    let (d_real, _) = m.d.forward_train(x)?;
    let (d_gen, _) = m.d.forward_train(&gen)?;
    Ok(loss_adv(&d_real, &d_gen)?.0)
}

fn pick<R: Rng + ?Sized>(net: &Network, rng: &mut R) -> (usize, usize) {
    let sizes: Vec<usize> = net.params().iter().map(|b| b.len()).collect();
    let mut flat = rng.random_range(0..sizes.iter().sum::<usize>());
    let mut block = 0;
    while flat >= sizes[block] {
        flat -= sizes[block];
        block += 1;
    }
    (block, flat)
}

fn net_mut(m: &mut ModelState, which: usize) -> &mut Network {
    match which {
        0 => &mut m.er,
        1 => &mut m.eg,
        2 => &mut m.g,
        _ => &mut m.d,
    }
}

/// Outcome of [`check_full_model`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelCheck {
    pub grad: GradCheck,
    /// Coordinates skipped because `±h` straddles a kink of the loss.
    pub kinks: usize,
}

/// Central differences of the real training losses against the analytic
/// gradients of `E_r`, `E_g`, `G` (on `ℒ₃`) and `D` (on `ℒ_adv1`), at
/// `per_net` random coordinates of each network.
///
/// The relative-error floor is `max(floor, loss_floor·|ℒ|)`: differencing a
/// loss of size `|ℒ|` carries rounding noise proportional to `|ℒ|/h`, so
/// derivatives far below the loss scale are compared in absolute terms. A
/// coordinate whose forward and backward one-sided differences disagree by
/// more than `KINK` of the comparison scale sits on a CReLU or modulus
/// breakpoint, where the central difference is no oracle; it is redrawn and
/// counted. The test uses loss values only, so it cannot mask a wrong
/// analytic gradient.
pub fn check_full_model<R: Rng + ?Sized>(
    m: &ModelState,
    x: &CTensor,
    h: f64,
    per_net: usize,
    floor: f64,
    loss_floor: f64,
    rng: &mut R,
) -> Result<ModelCheck> {
    const KINK: f64 = 1e-2;
    let (gen_losses, gen_grads, _) = m.generator_grads(x)?;
    let (adv1, d_grads) = m.discriminator_grads(x)?;
    let mut probe = m.clone();
    let mut out = ModelCheck::default();
    for which in 0..4 {
        let analytic = if which < 3 { &gen_grads[which] } else { &d_grads };
        let loss = |p: &ModelState| if which < 3 { generator_loss(p, x) } else { discriminator_loss(p, x) };
        let base = loss(&probe)?;
        let scale = if which < 3 { gen_losses.total } else { adv1 };
        let tau = floor.max(loss_floor * scale.abs());
        let mut done = 0;
        while done < per_net {
            let (block, i) = pick(net_mut(&mut probe, which), rng);
            let orig = net_mut(&mut probe, which).params()[block][i];
            net_mut(&mut probe, which).params_mut()[block][i] = orig + h;
            let up = loss(&probe)?;
            net_mut(&mut probe, which).params_mut()[block][i] = orig - h;
            let down = loss(&probe)?;
            net_mut(&mut probe, which).params_mut()[block][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let (fwd, bwd) = ((up - base) / h, (base - down) / h);
            if (fwd - bwd).abs() > KINK * numeric.abs().max(tau) {
                out.kinks += 1;
                continue;
            }
            let err = relative_error(analytic.blocks[block][i], numeric, tau);
            out.grad.max_rel_error = out.grad.max_rel_error.max(err);
            out.grad.checked += 1;
            done += 1;
        }
    }
    Ok(out)
}
