//! Brute-force Fock-space reference distributions for one and two modes.
//!
//! Independent of the phase-space machinery: inputs are built from Fock
//! amplitudes, interferometers act on creation operators, and loss is applied
//! through its Kraus decomposition.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock;
use crate::gaussian::GbsSpec;
use crate::loss::{LossModel, Segment};
use crate::numerics::{ln_binomial, KahanSum};
use crate::pnd::Pnd;

/// Fock amplitudes `⟨n|D(α)S(ξ)|0⟩` for `n ≤ cutoff`.
pub fn displaced_squeezed_amplitudes(xi: Complex64, alpha: Complex64, cutoff: usize) -> Vec<Complex64> {
    let r = xi.norm();
    let e = if r > 0.0 { Complex64::from_polar(1.0, xi.arg()) } else { Complex64::new(1.0, 0.0) };
    let (ch, sh) = (r.cosh(), r.sinh());
    let mut psi = Vec::with_capacity(cutoff + 1);
    psi.push((-0.5 * alpha.norm_sqr() - 0.5 * alpha.conj().powu(2) * e * r.tanh()).exp() / ch.sqrt());
    let drive = alpha * ch + alpha.conj() * e * sh;
    for n in 0..cutoff {
        let prev = if n > 0 { psi[n - 1] } else { Complex64::new(0.0, 0.0) };
        psi.push((drive * psi[n] - e * sh * (n as f64).sqrt() * prev) / (ch * ((n + 1) as f64).sqrt()));
    }
    psi
}

/// Number of input photons needed so the omitted input mass is below `tol`.
pub fn input_cutoff(spec: &GbsSpec, at_least: usize, tol: f64, cap: usize) -> usize {
    let mut need = at_least;
    for (xi, alpha) in spec.squeezing.iter().zip(&spec.displacement) {
        let amps = displaced_squeezed_amplitudes(*xi, *alpha, cap);
        let mut acc = 0.0;
        for (n, a) in amps.iter().enumerate() {
            acc += a.norm_sqr();
            if 1.0 - acc < tol {
                need = need.max(n);
                break;
            }
            if n == cap {
                need = cap;
            }
        }
    }
    need.min(cap)
}

fn binomial_kernel(n: usize, kept: usize, eta: f64) -> f64 {
    if kept > n {
        return 0.0;
    }
    let lost = n - kept;
    if eta == 1.0 {
        return if lost == 0 { 1.0 } else { 0.0 };
    }
    if eta == 0.0 {
        return if kept == 0 { 1.0 } else { 0.0 };
    }
    (ln_binomial(n as u64, kept as u64) + kept as f64 * eta.ln() + lost as f64 * (1.0 - eta).ln()).exp()
}

/// Single mode: lossless probabilities pushed through the binomial loss kernel.
fn single_mode(spec: &GbsSpec, loss: &LossModel, cutoff: usize) -> Result<Pnd> {
    let eta: f64 = loss
        .segments
        .iter()
        .filter_map(|s| match s {
            Segment::Loss { etas, .. } => Some(etas[0]),
            Segment::Passive { .. } => None,
        })
        .product();
    let nin = input_cutoff(spec, cutoff + 200, 1e-16, cutoff + 4000);
    let lossless: Vec<f64> =
        displaced_squeezed_amplitudes(spec.squeezing[0], spec.displacement[0], nin).iter().map(|a| a.norm_sqr()).collect();
    let probs =
        (0..=cutoff).map(|m| (m..=nin).map(|n| lossless[n] * binomial_kernel(n, m, eta)).collect::<KahanSum>().value()).collect();
    Pnd::from_probs(1, cutoff, probs)
}

/// Two-mode Fock basis `|n₁, n₂⟩` with `n₁ + n₂ ≤ total`.
struct TwoModeBasis {
    total: usize,
}

impl TwoModeBasis {
    fn dim(&self) -> usize {
        (self.total + 1) * (self.total + 2) / 2
    }
    fn index(&self, n1: usize, n2: usize) -> usize {
        let n = n1 + n2;
        n * (n + 1) / 2 + n1
    }
}

/// Matrix of the interferometer on the `N`-photon block, columns indexed by input `n₁`.
fn passive_block(u: &DMatrix<Complex64>, n: usize) -> DMatrix<Complex64> {
    let mut block = DMatrix::zeros(n + 1, n + 1);
    for n1 in 0..=n {
        let n2 = n - n1;
        // vector over p (photons in mode 1) of the state reached so far
        let mut v = vec![Complex64::new(0.0, 0.0); n + 1];
        v[0] = Complex64::new(1.0, 0.0);
        let mut photons = 0;
        for (j, count) in [(0usize, n1), (1usize, n2)] {
            for k in 0..count {
                let mut next = vec![Complex64::new(0.0, 0.0); n + 1];
                for p in 0..=photons {
                    let q = photons - p;
                    let amp = v[p];
                    if amp == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    next[p + 1] += amp * u[(0, j)] * ((p + 1) as f64).sqrt();
                    next[p] += amp * u[(1, j)] * ((q + 1) as f64).sqrt();
                }
                let norm = ((k + 1) as f64).sqrt();
                v = next.into_iter().map(|z| z / norm).collect();
                photons += 1;
            }
        }
        for p in 0..=n {
            block[(p, n1)] = v[p];
        }
    }
    block
}

fn apply_passive(rho: &DMatrix<Complex64>, basis: &TwoModeBasis, u: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let d = basis.dim();
    let mut r = DMatrix::<Complex64>::zeros(d, d);
    for n in 0..=basis.total {
        let b = passive_block(u, n);
        let off = basis.index(0, n);
        for (i, j) in (0..=n).flat_map(|i| (0..=n).map(move |j| (i, j))) {
            r[(off + i, off + j)] = b[(i, j)];
        }
    }
    &r * rho * r.adjoint()
}

fn apply_mode_loss(rho: &DMatrix<Complex64>, basis: &TwoModeBasis, mode: usize, eta: f64) -> DMatrix<Complex64> {
    if eta == 1.0 {
        return rho.clone();
    }
    let d = basis.dim();
    let mut out = DMatrix::<Complex64>::zeros(d, d);
    let split = |idx: usize| -> (usize, usize) {
        let n = ((((8 * idx + 1) as f64).sqrt() - 1.0) / 2.0).floor() as usize;
        let n = if (n + 1) * (n + 2) / 2 <= idx { n + 1 } else { n };
        let n1 = idx - n * (n + 1) / 2;
        (n1, n - n1)
    };
    let counts: Vec<(usize, usize)> = (0..d).map(split).collect();
    for a in 0..d {
        for b in 0..d {
            let z = rho[(a, b)];
            if z == Complex64::new(0.0, 0.0) {
                continue;
            }
            let (ca, cb) = (counts[a], counts[b]);
            let (na, nb) = if mode == 0 { (ca.0, cb.0) } else { (ca.1, cb.1) };
            for l in 0..=na.min(nb) {
                let ka = (binomial_kernel(na, na - l, eta)).sqrt();
                let kb = (binomial_kernel(nb, nb - l, eta)).sqrt();
                let (ta, tb) = if mode == 0 {
                    (basis.index(ca.0 - l, ca.1), basis.index(cb.0 - l, cb.1))
                } else {
                    (basis.index(ca.0, ca.1 - l), basis.index(cb.0, cb.1 - l))
                };
                out[(ta, tb)] += z * ka * kb;
            }
        }
    }
    out
}

fn two_mode(spec: &GbsSpec, loss: &LossModel, cutoff: usize) -> Result<Pnd> {
    let total = input_cutoff(spec, cutoff, 1e-15, 70);
    let basis = TwoModeBasis { total };
    let a = displaced_squeezed_amplitudes(spec.squeezing[0], spec.displacement[0], total);
    let b = displaced_squeezed_amplitudes(spec.squeezing[1], spec.displacement[1], total);
    let mut psi = vec![Complex64::new(0.0, 0.0); basis.dim()];
    for n1 in 0..=total {
        for n2 in 0..=(total - n1) {
            psi[basis.index(n1, n2)] = a[n1] * b[n2];
        }
    }
    let psi = nalgebra::DVector::from_vec(psi);
    let mut rho = &psi * psi.adjoint();
    let segments: Vec<Segment> = if loss.segments.is_empty() {
        vec![Segment::Passive { unitary: spec.unitary.clone() }]
    } else {
        let composed = loss.passive_unitary();
        let err = (&composed - &spec.unitary).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if err > 1e-8 {
            loss.with_interferometer(&spec.unitary)?.segments
        } else {
            loss.segments.clone()
        }
    };
    for seg in &segments {
        rho = match seg {
            Segment::Passive { unitary } => apply_passive(&rho, &basis, unitary),
            Segment::Loss { etas, .. } => {
                let r = apply_mode_loss(&rho, &basis, 0, etas[0]);
                apply_mode_loss(&r, &basis, 1, etas[1])
            }
        };
    }
    let mut probs = Vec::with_capacity(fock::level_offset(2, cutoff + 1));
    for n in 0..=cutoff {
        for c in fock::level(2, n) {
            let i = basis.index(c[0], c[1]);
            probs.push(rho[(i, i)].re);
        }
    }
    Pnd::from_probs(2, cutoff, probs)
}

/// Reference distribution by direct Fock-space simulation (one or two modes only).
pub fn oracle_pnd(spec: &GbsSpec, loss: &LossModel, cutoff: usize) -> Result<Pnd> {
    spec.validate()?;
    if !spec.thermal.is_empty() && spec.thermal.iter().any(|&t| t != 0.0) {
        return Err(Error::Unsupported("the Fock reference takes pure inputs only".into()));
    }
    match spec.num_modes() {
        1 => single_mode(spec, loss, cutoff),
        2 => two_mode(spec, loss, cutoff),
        m => Err(Error::Unsupported(format!("the Fock reference is limited to two modes, got {m}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{propagate, two_mode_unitary};
    use crate::loss::build_loss_model;
    use crate::pnd::{pnd_gaussian, pnd_lossy_squeezed_vacuum, PndOptions};

    #[test]
    fn amplitudes_are_normalized() {
        let amps = displaced_squeezed_amplitudes(Complex64::from_polar(0.9, 0.4), Complex64::new(0.3, -0.7), 300);
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-13);
    }

    #[test]
    fn single_mode_matches_closed_form() {
        let spec = GbsSpec::single_mode(Complex64::new(1.5, 0.0), Complex64::default());
        let loss = build_loss_model(&spec.unitary, &[0.5], None, &[1.0]).unwrap();
        let o = oracle_pnd(&spec, &loss, 40).unwrap();
        assert!((o.get(&[0]) - 0.476_711_075_545_425_4).abs() < 1e-12);
        let a = pnd_lossy_squeezed_vacuum(1.5, 0.5, 40).unwrap();
        for m in 0..=40 {
            assert!((o.get(&[m]) - a.get(&[m])).abs() < 1e-12);
        }
    }

    #[test]
    fn lossless_single_mode_is_unchanged() {
        let spec = GbsSpec::single_mode(Complex64::new(0.8, 0.0), Complex64::new(0.2, 0.1));
        let o = oracle_pnd(&spec, &LossModel::lossless(1), 30).unwrap();
        let amps = displaced_squeezed_amplitudes(spec.squeezing[0], spec.displacement[0], 30);
        for m in 0..=30 {
            assert!((o.get(&[m]) - amps[m].norm_sqr()).abs() < 1e-15);
        }
    }

    #[test]
    fn two_mode_matches_engine() {
        let spec = GbsSpec::new(
            vec![Complex64::new(0.4, 0.0), Complex64::from_polar(0.5, 0.3)],
            vec![Complex64::new(0.2, 0.1), Complex64::new(-0.3, 0.0)],
            two_mode_unitary(0.8, 0.44),
        )
        .unwrap();
        let loss = build_loss_model(&spec.unitary, &[0.7, 0.6], None, &[0.5, 0.8]).unwrap();
        let o = oracle_pnd(&spec, &loss, 12).unwrap();
        let g = pnd_gaussian(&propagate(&spec, &loss).unwrap(), &PndOptions::fixed(12)).unwrap();
        for (c, p) in o.iter() {
            assert!((p - g.get(&c)).abs() < 1e-12, "{c:?}: {p} vs {}", g.get(&c));
        }
    }

    #[test]
    fn three_modes_are_refused() {
        let spec = GbsSpec::product(&[0.1; 3], &[Complex64::default(); 3]).unwrap();
        assert!(matches!(oracle_pnd(&spec, &LossModel::lossless(3), 4), Err(Error::Unsupported(_))));
    }
}
