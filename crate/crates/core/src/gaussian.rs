//! Multimode Gaussian states as quadrature moments.
//!
//! Quadratures are `x = (a + a†)/√2`, `p = (a − a†)/(i√2)`, interleaved as
//! `(x₁, p₁, …, x_M, p_M)`, so the vacuum covariance is `½·I`.

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossModel;

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const PHYSICALITY_TOL: f64 = 1e-10;
pub const UNITARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    num_modes: usize,
    mean: DVector<f64>,
    #[serde(with = "crate::serde_matrix::real")]
    cov: DMatrix<f64>,
}

impl GaussianState {
    /// Validated constructor: checks dimensions, symmetry and the uncertainty principle.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let state = Self::from_moments(mean, cov)?;
        state.check_physical()?;
        Ok(state)
    }

    /// Constructor that checks shapes and symmetry but not physicality.
    pub fn from_moments(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 || n % 2 != 0 {
            return Err(Error::Dimension(format!("mean has length {n}, expected 2M > 0")));
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::Dimension(format!("covariance is {}x{}, expected {n}x{n}", cov.nrows(), cov.ncols())));
        }
        let scale = cov.amax().max(1.0);
        let asym = (&cov - cov.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::Unphysical(format!("covariance asymmetric by {asym:.3e}")));
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self { num_modes: n / 2, mean, cov })
    }

    pub(crate) fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        let cov = (&cov + cov.transpose()) * 0.5;
        Self { num_modes: mean.len() / 2, mean, cov }
    }

    pub fn vacuum(num_modes: usize) -> Self {
        Self::from_parts(DVector::zeros(2 * num_modes), DMatrix::identity(2 * num_modes, 2 * num_modes) * 0.5)
    }

    /// Product of coherent states with the given amplitudes.
    pub fn coherent(alphas: &[Complex64]) -> Self {
        let mut state = Self::vacuum(alphas.len());
        for (i, a) in alphas.iter().enumerate() {
            state.mean[2 * i] = std::f64::consts::SQRT_2 * a.re;
            state.mean[2 * i + 1] = std::f64::consts::SQRT_2 * a.im;
        }
        state
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Complex amplitudes `⟨a_j⟩ = (⟨x_j⟩ + i⟨p_j⟩)/√2`.
    pub fn amplitudes(&self) -> Vec<Complex64> {
        (0..self.num_modes).map(|j| Complex64::new(self.mean[2 * j], self.mean[2 * j + 1]) / std::f64::consts::SQRT_2).collect()
    }

    /// Symplectic eigenvalues in ascending order (one per mode).
    pub fn symplectic_eigenvalues(&self) -> Result<Vec<f64>> {
        let root = sym_sqrt(&self.cov)?;
        let omega = symplectic_form(self.num_modes);
        let k = &root * omega.transpose() * &self.cov * &omega * &root;
        let k = (&k + k.transpose()) * 0.5;
        let mut ev: Vec<f64> = k.symmetric_eigenvalues().iter().map(|v| v.max(0.0).sqrt()).collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        Ok(ev.chunks(2).map(|c| 0.5 * (c[0] + c[c.len() - 1])).collect())
    }

    pub fn check_physical(&self) -> Result<()> {
        let min = self.symplectic_eigenvalues()?.first().copied().unwrap_or(0.5);
        if min < 0.5 - PHYSICALITY_TOL {
            return Err(Error::Unphysical(format!("symplectic eigenvalue {min} < 1/2")));
        }
        Ok(())
    }

    /// Purity test: every symplectic eigenvalue equals ½ within `tol`.
    pub fn is_pure(&self, tol: f64) -> bool {
        self.symplectic_eigenvalues().map(|ev| ev.iter().all(|v| (v - 0.5).abs() <= tol)).unwrap_or(false)
    }

    /// Marginal state of the listed modes (in the given order).
    pub fn reduced(&self, modes: &[usize]) -> Result<GaussianState> {
        if modes.is_empty() {
            return Err(Error::InvalidArgument("empty mode subset".into()));
        }
        if let Some(&bad) = modes.iter().find(|&&m| m >= self.num_modes) {
            return Err(Error::InvalidArgument(format!("mode {bad} out of range for {} modes", self.num_modes)));
        }
        let idx: Vec<usize> = modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
        let mean = DVector::from_fn(idx.len(), |i, _| self.mean[idx[i]]);
        let cov = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.cov[(idx[i], idx[j])]);
        Ok(Self::from_parts(mean, cov))
    }
}

/// Symmetric positive-semidefinite square root via eigendecomposition.
pub(crate) fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    if eig.eigenvalues.iter().any(|&v| v < -1e-12 * scale) {
        return Err(Error::Unphysical("covariance is not positive semidefinite".into()));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// The symplectic form `⊕ [[0, 1], [−1, 0]]`.
pub fn symplectic_form(num_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * num_modes, 2 * num_modes);
    for j in 0..num_modes {
        omega[(2 * j, 2 * j + 1)] = 1.0;
        omega[(2 * j + 1, 2 * j)] = -1.0;
    }
    omega
}

pub fn symplectic_deviation(s: &DMatrix<f64>) -> f64 {
    let omega = symplectic_form(s.nrows() / 2);
    let scale = s.amax().max(1.0).powi(2);
    (s * &omega * s.transpose() - omega).amax() / scale
}

/// Mean → `S·mean + d`, covariance → `S·cov·Sᵀ`.
pub fn apply_symplectic(state: &GaussianState, s: &DMatrix<f64>, d: &DVector<f64>) -> Result<GaussianState> {
    let n = 2 * state.num_modes;
    if s.nrows() != n || s.ncols() != n || d.len() != n {
        return Err(Error::Dimension(format!("symplectic map must be {n}x{n} with a length-{n} shift")));
    }
    let dev = symplectic_deviation(s);
    if dev > 1e-10 {
        return Err(Error::NotSymplectic(dev));
    }
    Ok(GaussianState::from_parts(s * &state.mean + d, s * &state.cov * s.transpose()))
}

fn check_etas(etas: &[f64]) -> Result<()> {
    match etas.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        Some(&e) => Err(Error::Transmissivity(e)),
        None => Ok(()),
    }
}

/// Pure-loss layer with per-mode transmissivities.
pub fn apply_loss_layer(state: &GaussianState, etas: &[f64]) -> Result<GaussianState> {
    if etas.len() != state.num_modes {
        return Err(Error::Dimension(format!("{} transmissivities for {} modes", etas.len(), state.num_modes)));
    }
    check_etas(etas)?;
    Ok(GaussianChannel::loss(etas).apply(state))
}

/// Affine moment map `mean → X·mean`, `cov → X·cov·Xᵀ + Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianChannel {
    pub transfer: DMatrix<f64>,
    pub noise: DMatrix<f64>,
}

impl GaussianChannel {
    pub fn identity(num_modes: usize) -> Self {
        let n = 2 * num_modes;
        Self { transfer: DMatrix::identity(n, n), noise: DMatrix::zeros(n, n) }
    }

    pub fn loss(etas: &[f64]) -> Self {
        let n = 2 * etas.len();
        let t = DVector::from_fn(n, |i, _| etas[i / 2].sqrt());
        let noise = DMatrix::from_diagonal(&t.map(|v| 0.5 * (1.0 - v * v)));
        Self { transfer: DMatrix::from_diagonal(&t), noise }
    }

    pub fn passive(unitary: &DMatrix<Complex64>) -> Self {
        let s = passive_symplectic(unitary);
        let n = s.nrows();
        Self { transfer: s, noise: DMatrix::zeros(n, n) }
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &GaussianChannel) -> GaussianChannel {
        GaussianChannel {
            transfer: &next.transfer * &self.transfer,
            noise: &next.transfer * &self.noise * next.transfer.transpose() + &next.noise,
        }
    }

    pub fn apply(&self, state: &GaussianState) -> GaussianState {
        GaussianState::from_parts(
            &self.transfer * &state.mean,
            &self.transfer * &state.cov * self.transfer.transpose() + &self.noise,
        )
    }
}

/// Symplectic matrix of `S(ξ)` for one mode: `S†aS = a cosh r − a† e^{iθ} sinh r`.
pub fn squeezing_symplectic(xi: Complex64) -> Matrix2<f64> {
    let (r, th) = (xi.norm(), xi.arg());
    let (ch, sh) = (r.cosh(), r.sinh());
    Matrix2::new(ch - sh * th.cos(), -sh * th.sin(), -sh * th.sin(), ch + sh * th.cos())
}

/// Derivative of [`squeezing_symplectic`] with respect to the modulus `r` at fixed phase.
pub fn squeezing_symplectic_dr(r: f64, phase: f64) -> Matrix2<f64> {
    let (ch, sh) = (r.cosh(), r.sinh());
    Matrix2::new(sh - ch * phase.cos(), -ch * phase.sin(), -ch * phase.sin(), sh + ch * phase.cos())
}

/// Symplectic matrix of the passive map `a → U a` in interleaved ordering.
pub fn passive_symplectic(u: &DMatrix<Complex64>) -> DMatrix<f64> {
    let m = u.nrows();
    let mut s = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            let z = u[(i, j)];
            s[(2 * i, 2 * j)] = z.re;
            s[(2 * i, 2 * j + 1)] = -z.im;
            s[(2 * i + 1, 2 * j)] = z.im;
            s[(2 * i + 1, 2 * j + 1)] = z.re;
        }
    }
    s
}

/// Two-mode interferometer `[[cos θ, −e^{iγ} sin θ], [e^{−iγ} sin θ, cos θ]]`.
pub fn two_mode_unitary(theta: f64, gamma: f64) -> DMatrix<Complex64> {
    let (c, s) = (theta.cos(), theta.sin());
    let e = Complex64::from_polar(1.0, gamma);
    DMatrix::from_row_slice(2, 2, &[Complex64::new(c, 0.0), -e * s, e.conj() * s, Complex64::new(c, 0.0)])
}

pub fn unitarity_deviation(u: &DMatrix<Complex64>) -> f64 {
    let n = u.nrows();
    (u.adjoint() * u - DMatrix::<Complex64>::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Input squeezing, displacement and interferometer of a Gaussian boson sampler.
///
/// `thermal` holds optional per-mode thermal occupations of the input
/// (empty means pure squeezed inputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbsSpec {
    pub squeezing: Vec<Complex64>,
    pub displacement: Vec<Complex64>,
    #[serde(with = "crate::serde_matrix::complex")]
    pub unitary: DMatrix<Complex64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thermal: Vec<f64>,
}

impl GbsSpec {
    pub fn new(squeezing: Vec<Complex64>, displacement: Vec<Complex64>, unitary: DMatrix<Complex64>) -> Result<Self> {
        let spec = Self { squeezing, displacement, unitary, thermal: Vec::new() };
        spec.validate()?;
        Ok(spec)
    }

    /// Real squeezing and displacement with the identity interferometer.
    pub fn product(squeezing: &[f64], displacement: &[Complex64]) -> Result<Self> {
        let m = squeezing.len();
        Self::new(squeezing.iter().map(|&r| Complex64::new(r, 0.0)).collect(), displacement.to_vec(), DMatrix::identity(m, m))
    }

    pub fn single_mode(xi: Complex64, alpha: Complex64) -> Self {
        Self { squeezing: vec![xi], displacement: vec![alpha], unitary: DMatrix::identity(1, 1), thermal: Vec::new() }
    }

    /// Real squeezing `xi` and displacement `|alpha| e^{i phase/2}`, so that
    /// `phase` is the relative phase between displacement and squeezing.
    pub fn displaced_single_mode(xi: f64, alpha_abs: f64, phase: f64) -> Self {
        Self::single_mode(Complex64::new(xi, 0.0), Complex64::from_polar(alpha_abs, 0.5 * phase))
    }

    pub fn num_modes(&self) -> usize {
        self.squeezing.len()
    }

    pub fn thermal_occupation(&self, mode: usize) -> f64 {
        self.thermal.get(mode).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.squeezing.len();
        if m == 0 {
            return Err(Error::Dimension("spec has no modes".into()));
        }
        if self.displacement.len() != m {
            return Err(Error::Dimension(format!("{} displacements for {m} modes", self.displacement.len())));
        }
        if self.unitary.nrows() != m || self.unitary.ncols() != m {
            return Err(Error::Dimension(format!("unitary is {}x{} for {m} modes", self.unitary.nrows(), self.unitary.ncols())));
        }
        if !self.thermal.is_empty() && self.thermal.len() != m {
            return Err(Error::Dimension(format!("{} thermal occupations for {m} modes", self.thermal.len())));
        }
        if let Some(&t) = self.thermal.iter().find(|t| !(**t >= 0.0)) {
            return Err(Error::InvalidArgument(format!("thermal occupation {t} is negative")));
        }
        if self.squeezing.iter().chain(&self.displacement).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite squeezing or displacement".into()));
        }
        let dev = unitarity_deviation(&self.unitary);
        if dev > UNITARY_TOL {
            return Err(Error::NotUnitary(dev));
        }
        Ok(())
    }

    /// Quadrature displacement vector `√2 (Re α, Im α)` per mode.
    pub fn displacement_vector(&self) -> DVector<f64> {
        let mut d = DVector::zeros(2 * self.num_modes());
        for (i, a) in self.displacement.iter().enumerate() {
            d[2 * i] = std::f64::consts::SQRT_2 * a.re;
            d[2 * i + 1] = std::f64::consts::SQRT_2 * a.im;
        }
        d
    }

    /// Same spec with the displacement replaced by the given quadrature vector.
    pub fn with_displacement_vector(&self, d: &DVector<f64>) -> GbsSpec {
        let mut spec = self.clone();
        spec.displacement =
            (0..self.num_modes()).map(|i| Complex64::new(d[2 * i], d[2 * i + 1]) / std::f64::consts::SQRT_2).collect();
        spec
    }
}

/// Block-diagonal covariance of the squeezed (thermal) inputs, before displacement.
pub fn input_covariance(spec: &GbsSpec) -> DMatrix<f64> {
    let m = spec.num_modes();
    let mut cov = DMatrix::zeros(2 * m, 2 * m);
    for (i, &xi) in spec.squeezing.iter().enumerate() {
        let s = squeezing_symplectic(xi);
        let block = s * s.transpose() * (0.5 * (2.0 * spec.thermal_occupation(i) + 1.0));
        cov.fixed_view_mut::<2, 2>(2 * i, 2 * i).copy_from(&block);
    }
    cov
}

/// The input state `D(α)S(ξ)|0⟩` per mode, before the interferometer.
pub fn prepare_input(spec: &GbsSpec) -> Result<GaussianState> {
    spec.validate()?;
    Ok(GaussianState::from_parts(spec.displacement_vector(), input_covariance(spec)))
}

/// The lossless target `R(U)D(α)S(ξ)|0⟩`.
pub fn prepare_target(spec: &GbsSpec) -> Result<GaussianState> {
    let input = prepare_input(spec)?;
    Ok(GaussianChannel::passive(&spec.unitary).apply(&input))
}

/// Pushes the input state of `spec` through the loss model.
pub fn propagate(spec: &GbsSpec, loss: &LossModel) -> Result<GaussianState> {
    let channel = loss.channel_for(spec)?;
    Ok(channel.apply(&prepare_input(spec)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::close;

    mod approx_eq {
        pub fn close(a: f64, b: f64, tol: f64) -> bool {
            (a - b).abs() <= tol
        }
    }

    #[test]
    fn squeezing_convention_squeezes_x() {
        let spec = GbsSpec::product(&[1.5], &[Complex64::new(0.0, 0.0)]).unwrap();
        let st = prepare_target(&spec).unwrap();
        assert!(close(st.cov()[(0, 0)], 0.5 * (-3.0f64).exp(), 1e-14));
        assert!(close(st.cov()[(1, 1)], 0.5 * 3.0f64.exp(), 1e-12));
        assert!(close(st.cov()[(0, 1)], 0.0, 1e-14));
    }

    #[test]
    fn vacuum_is_pure_and_physical() {
        let v = GaussianState::vacuum(3);
        assert!(v.is_pure(1e-12));
        assert!(v.check_physical().is_ok());
    }

    #[test]
    fn displacement_moves_only_the_mean() {
        let v = GaussianState::vacuum(1);
        let d = DVector::from_vec(vec![std::f64::consts::SQRT_2, 0.0]);
        let c = apply_symplectic(&v, &DMatrix::identity(2, 2), &d).unwrap();
        assert_eq!(c.amplitudes()[0], Complex64::new(1.0, 0.0));
        assert_eq!(c.cov(), v.cov());
    }

    #[test]
    fn balanced_splitter_on_opposite_squeezers_gives_two_mode_squeezing() {
        let r = 0.7;
        let spec = GbsSpec::new(
            vec![Complex64::new(r, 0.0), Complex64::new(-r, 0.0)],
            vec![Complex64::default(); 2],
            two_mode_unitary(std::f64::consts::FRAC_PI_4, 0.0),
        )
        .unwrap();
        let st = prepare_target(&spec).unwrap();
        let c = st.cov();
        assert!(close(c[(0, 0)], 0.5 * (2.0 * r).cosh(), 1e-12));
        assert!(close(c[(0, 2)].abs(), 0.5 * (2.0 * r).sinh(), 1e-12));
        assert!(close(c[(1, 3)].abs(), 0.5 * (2.0 * r).sinh(), 1e-12));
        assert!(close(c[(0, 2)], -c[(1, 3)], 1e-12));
    }

    #[test]
    fn rejects_non_symplectic_and_non_unitary() {
        let v = GaussianState::vacuum(1);
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0]));
        assert!(matches!(apply_symplectic(&v, &s, &DVector::zeros(2)), Err(Error::NotSymplectic(_))));
        let u = DMatrix::from_element(2, 2, Complex64::new(1.0, 0.0));
        let spec = GbsSpec::new(vec![Complex64::default(); 2], vec![Complex64::default(); 2], u);
        assert!(matches!(spec, Err(Error::NotUnitary(_))));
    }

    #[test]
    fn loss_layer_examples() {
        let spec = GbsSpec::product(&[1.5], &[Complex64::default()]).unwrap();
        let st = prepare_target(&spec).unwrap();
        let lossy = apply_loss_layer(&st, &[0.5]).unwrap();
        assert!(close(lossy.cov()[(0, 0)], 0.5 * (0.5 * (-3.0f64).exp() + 0.5), 1e-14));
        assert!(close(lossy.cov()[(1, 1)], 0.5 * (0.5 * 3.0f64.exp() + 0.5), 1e-12));
        let gone = apply_loss_layer(&st, &[0.0]).unwrap();
        assert_eq!(gone, GaussianState::vacuum(1));
        assert_eq!(apply_loss_layer(&st, &[1.0]).unwrap(), st);
        assert!(matches!(apply_loss_layer(&st, &[1.2]), Err(Error::Transmissivity(_))));
    }

    #[test]
    fn unphysical_covariance_is_rejected() {
        let cov = DMatrix::identity(2, 2) * 0.2;
        assert!(matches!(GaussianState::new(DVector::zeros(2), cov), Err(Error::Unphysical(_))));
    }

    #[test]
    fn reduced_state_picks_blocks() {
        let spec = GbsSpec::product(&[0.3, 0.8], &[Complex64::new(0.1, 0.2), Complex64::default()]).unwrap();
        let st = prepare_target(&spec).unwrap();
        let r = st.reduced(&[1]).unwrap();
        assert!(close(r.cov()[(0, 0)], 0.5 * (-1.6f64).exp(), 1e-14));
        assert!(st.reduced(&[]).is_err());
        assert!(st.reduced(&[2]).is_err());
    }
}
