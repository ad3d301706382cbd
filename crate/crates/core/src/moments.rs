//! Photon-number moments and vacuum overlaps from quadrature moments.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gaussian::GaussianState;

/// Normal-ordered fluctuation correlations `⟨δa_j† δa_k⟩`.
pub fn normal_correlations(state: &GaussianState) -> DMatrix<Complex64> {
    let m = state.num_modes();
    let s = state.cov();
    DMatrix::from_fn(m, m, |j, k| {
        let (xj, pj, xk, pk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
        let delta = if j == k { 1.0 } else { 0.0 };
        Complex64::new(s[(xj, xk)] + s[(pj, pk)] - delta, s[(xj, pk)] - s[(pj, xk)]) * 0.5
    })
}

/// Anomalous fluctuation correlations `⟨δa_j δa_k⟩`.
pub fn anomalous_correlations(state: &GaussianState) -> DMatrix<Complex64> {
    let m = state.num_modes();
    let s = state.cov();
    DMatrix::from_fn(m, m, |j, k| {
        let (xj, pj, xk, pk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
        Complex64::new(s[(xj, xk)] - s[(pj, pk)], s[(xj, pk)] + s[(pj, xk)]) * 0.5
    })
}

/// Mean photon numbers and the photon-number covariance matrix.
pub fn photon_moments(state: &GaussianState) -> (Vec<f64>, DMatrix<f64>) {
    let m = state.num_modes();
    let n = normal_correlations(state);
    let a = anomalous_correlations(state);
    let alpha = state.amplitudes();
    let nbar = (0..m).map(|j| n[(j, j)].re + alpha[j].norm_sqr()).collect();
    let cov = DMatrix::from_fn(m, m, |j, k| {
        let diag = j == k;
        let mut v = n[(j, k)].norm_sqr() + a[(j, k)].norm_sqr();
        v += 2.0 * (alpha[j].conj() * alpha[k] * n[(k, j)]).re;
        v += 2.0 * (alpha[j].conj() * alpha[k].conj() * a[(j, k)]).re;
        if diag {
            v += n[(j, j)].re + alpha[j].norm_sqr();
        }
        v
    });
    (nbar, cov)
}

/// Relative mismatch of mean photon numbers and of photon-number covariances.
pub fn moment_metrics(target: &GaussianState, probe: &GaussianState) -> Result<(f64, f64)> {
    if target.num_modes() != probe.num_modes() {
        return Err(Error::Dimension("moment metrics need equal mode counts".into()));
    }
    let (n0, c0) = photon_moments(target);
    let (n1, c1) = photon_moments(probe);
    let norm_n: f64 = n0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm_c = c0.norm();
    if norm_n == 0.0 || norm_c == 0.0 {
        return Err(Error::InvalidArgument("target photon-number moments vanish".into()));
    }
    let dn: f64 = n0.iter().zip(&n1).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok((dn / norm_n, (c0 - c1).norm() / norm_c))
}

/// Joint vacuum probability of the listed modes.
pub fn vacuum_overlap(state: &GaussianState, subset: &[usize]) -> Result<f64> {
    let r = state.reduced(subset)?;
    let n = r.cov().nrows();
    let q = r.cov() + DMatrix::identity(n, n) * 0.5;
    let chol = q.clone().cholesky().ok_or(Error::Singular("vacuum overlap"))?;
    let det: f64 = chol.l().diagonal().iter().map(|d| d * d).product();
    let quad = r.mean().dot(&chol.solve(r.mean()));
    Ok((-0.5 * quad).exp() / det.sqrt())
}

/// Vacuum probability of the whole state.
pub fn vacuum_probability(state: &GaussianState) -> Result<f64> {
    let all: Vec<usize> = (0..state.num_modes()).collect();
    vacuum_overlap(state, &all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{apply_loss_layer, prepare_target, GbsSpec};
    use crate::pnd::{pnd_gaussian, PndOptions};

    fn squeezed(xi: f64) -> GaussianState {
        prepare_target(&GbsSpec::product(&[xi], &[Complex64::default()]).unwrap()).unwrap()
    }

    #[test]
    fn vacuum_moments_vanish() {
        let (n, c) = photon_moments(&GaussianState::vacuum(2));
        assert!(n.iter().all(|v| v.abs() < 1e-15));
        assert!(c.amax() < 1e-15);
    }

    #[test]
    fn squeezed_vacuum_moments() {
        let x: f64 = 1.5;
        let (n, c) = photon_moments(&squeezed(x));
        assert!((n[0] - x.sinh().powi(2)).abs() < 1e-12);
        assert!((c[(0, 0)] - 2.0 * x.sinh().powi(2) * x.cosh().powi(2)).abs() < 1e-10);
    }

    #[test]
    fn lossy_squeezed_variance() {
        let (x, eta): (f64, f64) = (1.2, 0.6);
        let st = apply_loss_layer(&squeezed(x), &[eta]).unwrap();
        let (_, c) = photon_moments(&st);
        let s2 = x.sinh().powi(2);
        assert!((c[(0, 0)] - (2.0 * eta * eta * s2 * s2 + (eta * eta + eta) * s2)).abs() < 1e-10);
    }

    #[test]
    fn moments_match_distribution_for_complex_displacement() {
        let spec = GbsSpec::new(
            vec![Complex64::from_polar(0.6, 0.9), Complex64::new(0.3, 0.0)],
            vec![Complex64::from_polar(0.7, 0.4), Complex64::from_polar(0.5, -1.2)],
            crate::gaussian::two_mode_unitary(0.5, 0.3),
        )
        .unwrap();
        let st = prepare_target(&spec).unwrap();
        let pnd = pnd_gaussian(&st, &PndOptions::default().with_tail(1e-14)).unwrap();
        let (n, c) = photon_moments(&st);
        let (mut m1, mut m2) = ([0.0; 2], [[0.0; 2]; 2]);
        for (o, p) in pnd.iter() {
            for j in 0..2 {
                m1[j] += o[j] as f64 * p;
                for k in 0..2 {
                    m2[j][k] += (o[j] * o[k]) as f64 * p;
                }
            }
        }
        for j in 0..2 {
            assert!((m1[j] - n[j]).abs() < 1e-9);
            for k in 0..2 {
                assert!((m2[j][k] - m1[j] * m1[k] - c[(j, k)]).abs() < 1e-8, "{j}{k}");
            }
        }
    }

    #[test]
    fn vacuum_overlap_examples() {
        assert!((vacuum_overlap(&GaussianState::vacuum(3), &[0, 2]).unwrap() - 1.0).abs() < 1e-15);
        assert!((vacuum_overlap(&squeezed(1.5), &[0]).unwrap() - 1.0 / 1.5f64.cosh()).abs() < 1e-14);
        assert!(vacuum_overlap(&squeezed(1.5), &[]).is_err());
    }

    #[test]
    fn metrics_vanish_on_equal_states() {
        let st = squeezed(0.8);
        assert_eq!(moment_metrics(&st, &st).unwrap(), (0.0, 0.0));
        assert!(moment_metrics(&GaussianState::vacuum(1), &st).is_err());
    }
}
