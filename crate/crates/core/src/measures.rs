//! Similarity measures between Gaussian states.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::gaussian::{sym_sqrt, GaussianState};
use crate::numerics::gauss_legendre;

pub const PURITY_TOL: f64 = 1e-8;
pub const SQRT_EIGEN_FLOOR: f64 = 1e-14;
pub const WIGNER_WINDOW_SIGMAS: f64 = 8.0;
pub const WIGNER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MeasureKind {
    Fidelity,
    Was,
    KldUp,
    KldPu,
    KldSym,
    Bha,
    WignerTvd,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 7] = [
        MeasureKind::Fidelity,
        MeasureKind::Was,
        MeasureKind::KldUp,
        MeasureKind::KldPu,
        MeasureKind::KldSym,
        MeasureKind::Bha,
        MeasureKind::WignerTvd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::Fidelity => "FIDELITY",
            MeasureKind::Was => "WAS",
            MeasureKind::KldUp => "KLD_UP",
            MeasureKind::KldPu => "KLD_PU",
            MeasureKind::KldSym => "KLD_SYM",
            MeasureKind::Bha => "BHA",
            MeasureKind::WignerTvd => "WIGNER_TVD",
        }
    }

    /// Whether the kind is one of the closed-form moment distances.
    pub fn is_phase_space(self) -> bool {
        !matches!(self, MeasureKind::Fidelity | MeasureKind::WignerTvd)
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase().replace('-', "_");
        MeasureKind::ALL
            .into_iter()
            .find(|k| k.name() == up)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown measure '{s}'")))
    }
}

fn same_modes(a: &GaussianState, b: &GaussianState) -> Result<()> {
    if a.num_modes() != b.num_modes() {
        return Err(Error::Dimension(format!("{} vs {} modes", a.num_modes(), b.num_modes())));
    }
    Ok(())
}

struct Spd {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    ln_det: f64,
}

impl Spd {
    fn new(m: DMatrix<f64>, what: &'static str) -> Result<Self> {
        let chol = m.cholesky().ok_or(Error::Singular(what))?;
        let ln_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !ln_det.is_finite() {
            return Err(Error::Singular(what));
        }
        Ok(Self { chol, ln_det })
    }

    fn quad(&self, d: &DVector<f64>) -> f64 {
        d.dot(&self.chol.solve(d))
    }

    fn trace_solve(&self, m: &DMatrix<f64>) -> f64 {
        self.chol.solve(m).trace()
    }
}

/// Fidelity between a pure target and an arbitrary probe.
pub fn fidelity(target: &GaussianState, probe: &GaussianState) -> Result<f64> {
    same_modes(target, probe)?;
    let ev = target.symplectic_eigenvalues()?;
    if let Some(&bad) = ev.iter().find(|v| (*v - 0.5).abs() > PURITY_TOL) {
        return Err(Error::NotPure(bad));
    }
    let sum = Spd::new(target.cov() + probe.cov(), "fidelity")?;
    let d = target.mean() - probe.mean();
    Ok((-0.25 * sum.ln_det - 0.25 * sum.quad(&d)).exp())
}

/// `det(σ + σ′)`, the covariance part of the fidelity.
pub fn fidelity_determinant(target: &GaussianState, probe: &GaussianState) -> Result<f64> {
    same_modes(target, probe)?;
    Ok(Spd::new(target.cov() + probe.cov(), "fidelity")?.ln_det.exp())
}

fn wasserstein(target: &GaussianState, probe: &GaussianState) -> Result<f64> {
    let root = sym_sqrt(target.cov())?;
    let inner = &root * probe.cov() * &root;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = inner.symmetric_eigenvalues().iter().map(|v| v.max(SQRT_EIGEN_FLOOR).sqrt()).sum();
    let d = target.mean() - probe.mean();
    Ok((d.dot(&d) + target.cov().trace() + probe.cov().trace() - 2.0 * cross).max(0.0))
}

/// Kullback-Leibler divergence `D(first ‖ second)`.
fn kullback_leibler(first: &GaussianState, second: &GaussianState) -> Result<f64> {
    let s1 = Spd::new(first.cov().clone(), "KLD covariance")?;
    let s2 = Spd::new(second.cov().clone(), "KLD covariance")?;
    let d = first.mean() - second.mean();
    let m = first.num_modes() as f64;
    let v = 0.5 * s2.quad(&d) + 0.5 * s2.trace_solve(first.cov()) + 0.5 * (s2.ln_det - s1.ln_det) - m;
    Ok(v.max(0.0))
}

fn bhattacharyya(target: &GaussianState, probe: &GaussianState) -> Result<f64> {
    let s1 = Spd::new(target.cov().clone(), "BHA covariance")?;
    let s2 = Spd::new(probe.cov().clone(), "BHA covariance")?;
    let avg = Spd::new((target.cov() + probe.cov()) * 0.5, "BHA covariance")?;
    let d = target.mean() - probe.mean();
    Ok((0.125 * avg.quad(&d) + 0.5 * (avg.ln_det - 0.5 * (s1.ln_det + s2.ln_det))).max(0.0))
}

/// Closed-form moment distance of the given kind.
pub fn phase_space_distance(kind: MeasureKind, target: &GaussianState, probe: &GaussianState) -> Result<f64> {
    same_modes(target, probe)?;
    match kind {
        MeasureKind::Was => wasserstein(target, probe),
        MeasureKind::KldUp => kullback_leibler(target, probe),
        MeasureKind::KldPu => kullback_leibler(probe, target),
        MeasureKind::KldSym => Ok(kullback_leibler(target, probe)? + kullback_leibler(probe, target)?),
        MeasureKind::Bha => bhattacharyya(target, probe),
        other => Err(Error::Unsupported(format!("{other} is not a closed-form phase-space distance"))),
    }
}

/// Value to minimize for any measure kind (`1 − F` for the fidelity).
pub fn objective(kind: MeasureKind, target: &GaussianState, probe: &GaussianState) -> Result<f64> {
    match kind {
        MeasureKind::Fidelity => Ok(1.0 - fidelity(target, probe)?),
        MeasureKind::WignerTvd => Ok(wigner_tvd(target, probe)?.value),
        k => phase_space_distance(k, target, probe),
    }
}

/// Result of the Wigner-function distance quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WignerTvd {
    pub value: f64,
    pub error_estimate: f64,
    pub panels: usize,
}

/// Single-mode Gaussian Wigner function split into an `x` marginal and the
/// conditional law of `p` given `x`.
#[derive(Clone, Copy)]
struct Bivariate {
    mx: f64,
    mp: f64,
    vx: f64,
    slope: f64,
    vp: f64,
}

impl Bivariate {
    fn new(s: &GaussianState) -> Result<Self> {
        let c = s.cov();
        let (a, b, d) = (c[(0, 0)], c[(0, 1)], c[(1, 1)]);
        let vp = d - b * b / a;
        if !(a > 0.0) || !(vp > 0.0) {
            return Err(Error::Singular("Wigner covariance"));
        }
        Ok(Self { mx: s.mean()[0], mp: s.mean()[1], vx: a, slope: b / a, vp })
    }

    fn ln_marginal(&self, x: f64) -> f64 {
        -0.5 * (2.0 * PI * self.vx).ln() - (x - self.mx).powi(2) / (2.0 * self.vx)
    }

    fn cond_mean(&self, x: f64) -> f64 {
        self.mp + self.slope * (x - self.mx)
    }

    fn x_range(&self) -> (f64, f64) {
        let w = WIGNER_WINDOW_SIGMAS * self.vx.sqrt();
        (self.mx - w, self.mx + w)
    }
}

/// Normal probability of `[lo, hi]`, accurate in both tails.
fn normal_mass(lo: f64, hi: f64, mean: f64, var: f64) -> f64 {
    let s = (2.0 * var).sqrt();
    if lo >= mean {
        0.5 * (erfc((lo - mean) / s) - erfc((hi - mean) / s))
    } else if hi <= mean {
        0.5 * (erfc((mean - hi) / s) - erfc((mean - lo) / s))
    } else {
        1.0 - 0.5 * (erfc((mean - lo) / s) + erfc((hi - mean) / s))
    }
}

/// `∫ |W(x, p) − W′(x, p)| dp`, exact by splitting at the sign changes.
fn slice_integral(u: &Bivariate, v: &Bivariate, x: f64) -> f64 {
    let (lu, lv) = (u.ln_marginal(x), v.ln_marginal(x));
    let (mu, mv) = (u.cond_mean(x), v.cond_mean(x));
    let k = lu - lv - 0.5 * (u.vp / v.vp).ln();
    let qa = -0.5 / u.vp + 0.5 / v.vp;
    let qb = mu / u.vp - mv / v.vp;
    let qc = k - mu * mu / (2.0 * u.vp) + mv * mv / (2.0 * v.vp);
    let log_ratio = |p: f64| k - (p - mu).powi(2) / (2.0 * u.vp) + (p - mv).powi(2) / (2.0 * v.vp);
    let mut cuts = Vec::with_capacity(2);
    let scale = qa.abs().max(qb.abs() * 1e-3).max(1e-300);
    if qa.abs() <= 1e-13 * scale.max(1.0 / u.vp) {
        if qb != 0.0 {
            cuts.push(-qc / qb);
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc > 0.0 {
            let r = disc.sqrt();
            let q = -0.5 * (qb + qb.signum() * r);
            if q != 0.0 {
                cuts.push(q / qa);
                cuts.push(qc / q);
            } else {
                cuts.push(r / (2.0 * qa));
                cuts.push(-r / (2.0 * qa));
            }
        }
    }
    cuts.retain(|c| c.is_finite());
    cuts.sort_by(f64::total_cmp);
    let (wu, wv) = (lu.exp(), lv.exp());
    let mut bounds = vec![f64::NEG_INFINITY];
    bounds.extend(cuts);
    bounds.push(f64::INFINITY);
    let mut total = 0.0;
    for w in bounds.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let probe = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (false, true) => hi - 1.0 - hi.abs(),
            (true, false) => lo + 1.0 + lo.abs(),
            (false, false) => 0.5 * (mu + mv),
        };
        let sign = if log_ratio(probe) >= 0.0 { 1.0 } else { -1.0 };
        total += sign * (wu * normal_mass(lo, hi, mu, u.vp) - wv * normal_mass(lo, hi, mv, v.vp));
    }
    total.max(0.0)
}

struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error).then(other.lo.total_cmp(&self.lo))
    }
}

const PANEL_NODES: usize = 10;
const INITIAL_PANELS: usize = 32;
const MAX_PANELS: usize = 20_000;

fn gl_panel(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, nodes: &(Vec<f64>, Vec<f64>)) -> f64 {
    let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    nodes.0.iter().zip(&nodes.1).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

fn make_panel(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, nodes: &(Vec<f64>, Vec<f64>)) -> Panel {
    let coarse = gl_panel(f, lo, hi, nodes);
    let mid = 0.5 * (lo + hi);
    let fine = gl_panel(f, lo, mid, nodes) + gl_panel(f, mid, hi, nodes);
    Panel { lo, hi, value: fine, error: (fine - coarse).abs() }
}

/// Phase-space total variation `∫ |W − W′| dx dp` of two single-mode states.
///
/// The momentum integral is done exactly per position slice; the position
/// integral uses adaptive Gauss–Legendre panels over ±8 standard deviations.
pub fn wigner_tvd(target: &GaussianState, probe: &GaussianState) -> Result<WignerTvd> {
    same_modes(target, probe)?;
    if target.num_modes() != 1 {
        return Err(Error::Unsupported("Wigner-function distance is single-mode only".into()));
    }
    let (u, v) = (Bivariate::new(target)?, Bivariate::new(probe)?);
    let (a0, a1) = u.x_range();
    let (b0, b1) = v.x_range();
    let (lo, hi) = (a0.min(b0), a1.max(b1));
    let nodes = gauss_legendre(PANEL_NODES);
    let f = |x: f64| slice_integral(&u, &v, x);
    let step = (hi - lo) / INITIAL_PANELS as f64;
    let mut heap: BinaryHeap<Panel> =
        (0..INITIAL_PANELS).map(|i| make_panel(&f, lo + i as f64 * step, lo + (i + 1) as f64 * step, &nodes)).collect();
    let tol = 0.01 * WIGNER_TOL;
    loop {
        let err: f64 = heap.iter().map(|p| p.error).sum();
        if err <= tol || heap.len() >= MAX_PANELS {
            let mut panels: Vec<Panel> = heap.into_vec();
            panels.sort_by(|a, b| a.lo.total_cmp(&b.lo));
            let value: f64 = panels.iter().map(|p| p.value).sum();
            let out = WignerTvd { value: value.clamp(0.0, 2.0), error_estimate: err, panels: panels.len() };
            if err > WIGNER_TOL {
                return Err(Error::BudgetExhausted(out.panels));
            }
            return Ok(out);
        }
        let worst = heap.pop().expect("nonempty heap");
        let mid = 0.5 * (worst.lo + worst.hi);
        heap.push(make_panel(&f, worst.lo, mid, &nodes));
        heap.push(make_panel(&f, mid, worst.hi, &nodes));
    }
}

/// Gaussian Wigner function of a single-mode state.
pub fn wigner(state: &GaussianState, x: f64, p: f64) -> f64 {
    let c = state.cov();
    let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
    let (dx, dp) = (x - state.mean()[0], p - state.mean()[1]);
    let q = (c[(1, 1)] * dx * dx - 2.0 * c[(0, 1)] * dx * dp + c[(0, 0)] * dp * dp) / det;
    (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
}
