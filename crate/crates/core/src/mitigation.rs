//! Loss-mitigation schemes: closed-form corrections, moment-matching
//! optimizers, vacuum-overlap strategies and direct distance minimization.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::gaussian::{passive_symplectic, prepare_target, propagate, two_mode_unitary, GaussianState, GbsSpec};
use crate::loss::LossModel;
use crate::measures::{fidelity_determinant, phase_space_distance, wigner_tvd, MeasureKind};
use crate::moments::{photon_moments, vacuum_probability};
use crate::numerics::{brent_minimize, brent_root, golden_section, sign_changes, RootTolerance};
use crate::pnd::{pnd_gaussian, total_variation, Pnd, PndOptions};

/// Largest squeezing magnitude any correction may request.
pub const SQUEEZING_CAP: f64 = 20.0;
/// Smallest `ξ_vac` at which the vacuum correction can stop being optimal.
pub const EDGE_SQUEEZING: f64 = 2.290047;
/// Transmissivity above which the monotonicity polynomial can change sign.
pub const EDGE_TRANSMISSIVITY: f64 = 14.0 / 15.0;
/// Largest bracket width tried by the phase-space root finders.
pub const MAX_BRACKET: f64 = 50.0;

pub type Diagnostics = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SchemeTag {
    None,
    Dc,
    Fidelity,
    PsWas,
    PsKldUp,
    PsKldPu,
    PsKldSym,
    PsBha,
    PsWignerTvd,
    Mean,
    Variance,
    MeanPlusDc,
    VacFixedRatio,
    VacLossWeighted,
    VacPlusDc,
    VacPlusMean,
    DeltaMin,
}

impl SchemeTag {
    pub const ALL: [SchemeTag; 17] = [
        SchemeTag::None,
        SchemeTag::Dc,
        SchemeTag::Fidelity,
        SchemeTag::PsWas,
        SchemeTag::PsKldUp,
        SchemeTag::PsKldPu,
        SchemeTag::PsKldSym,
        SchemeTag::PsBha,
        SchemeTag::PsWignerTvd,
        SchemeTag::Mean,
        SchemeTag::Variance,
        SchemeTag::MeanPlusDc,
        SchemeTag::VacFixedRatio,
        SchemeTag::VacLossWeighted,
        SchemeTag::VacPlusDc,
        SchemeTag::VacPlusMean,
        SchemeTag::DeltaMin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeTag::None => "NONE",
            SchemeTag::Dc => "DC",
            SchemeTag::Fidelity => "FIDELITY",
            SchemeTag::PsWas => "PS_WAS",
            SchemeTag::PsKldUp => "PS_KLD_UP",
            SchemeTag::PsKldPu => "PS_KLD_PU",
            SchemeTag::PsKldSym => "PS_KLD_SYM",
            SchemeTag::PsBha => "PS_BHA",
            SchemeTag::PsWignerTvd => "PS_WIGNER_TVD",
            SchemeTag::Mean => "MEAN",
            SchemeTag::Variance => "VARIANCE",
            SchemeTag::MeanPlusDc => "MEAN_PLUS_DC",
            SchemeTag::VacFixedRatio => "VAC_FIXED_RATIO",
            SchemeTag::VacLossWeighted => "VAC_LOSS_WEIGHTED",
            SchemeTag::VacPlusDc => "VAC_PLUS_DC",
            SchemeTag::VacPlusMean => "VAC_PLUS_MEAN",
            SchemeTag::DeltaMin => "DELTA_MIN",
        }
    }

    /// The measure minimized by a phase-space scheme.
    pub fn measure(self) -> Option<MeasureKind> {
        match self {
            SchemeTag::PsWas => Some(MeasureKind::Was),
            SchemeTag::PsKldUp => Some(MeasureKind::KldUp),
            SchemeTag::PsKldPu => Some(MeasureKind::KldPu),
            SchemeTag::PsKldSym => Some(MeasureKind::KldSym),
            SchemeTag::PsBha => Some(MeasureKind::Bha),
            SchemeTag::PsWignerTvd => Some(MeasureKind::WignerTvd),
            _ => None,
        }
    }
}

impl fmt::Display for SchemeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase().replace('-', "_");
        SchemeTag::ALL.into_iter().find(|t| t.name() == up).ok_or_else(|| Error::InvalidArgument(format!("unknown scheme '{s}'")))
    }
}

/// Search space of the direct distance minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Ansatz {
    SqVac,
    DisplacedSq,
    SqThermal,
    DisplacedSqThermal,
}

impl Ansatz {
    pub const ALL: [Ansatz; 4] = [Ansatz::SqVac, Ansatz::DisplacedSq, Ansatz::SqThermal, Ansatz::DisplacedSqThermal];

    pub fn name(self) -> &'static str {
        match self {
            Ansatz::SqVac => "SQ_VAC",
            Ansatz::DisplacedSq => "DISPLACED_SQ",
            Ansatz::SqThermal => "SQ_THERMAL",
            Ansatz::DisplacedSqThermal => "DISPLACED_SQ_THERMAL",
        }
    }

    pub fn displaced(self) -> bool {
        matches!(self, Ansatz::DisplacedSq | Ansatz::DisplacedSqThermal)
    }

    pub fn thermal(self) -> bool {
        matches!(self, Ansatz::SqThermal | Ansatz::DisplacedSqThermal)
    }
}

impl FromStr for Ansatz {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase().replace('-', "_");
        Ansatz::ALL.into_iter().find(|a| a.name() == up).ok_or_else(|| Error::InvalidArgument(format!("unknown ansatz '{s}'")))
    }
}

/// Controls for the grid scan and local refinement of the minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchControls {
    /// Maximum number of distance evaluations.
    pub budget: Option<usize>,
    pub grid_points: usize,
    pub phase_points: usize,
    pub thermal_max: f64,
    pub refine_tol: f64,
    /// Also search the two-mode interferometer angles.
    pub vary_interferometer: bool,
    /// Number of grid minima refined locally.
    pub candidates: usize,
    /// Relative tolerance for reporting matched outcome probabilities.
    pub match_tolerance: f64,
}

impl Default for SearchControls {
    fn default() -> Self {
        Self {
            budget: None,
            grid_points: 41,
            phase_points: 64,
            thermal_max: 1.0,
            refine_tol: 1e-5,
            vary_interferometer: false,
            candidates: 3,
            match_tolerance: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    pub tag: SchemeTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ansatz: Option<Ansatz>,
    #[serde(default)]
    pub search: SearchControls,
}

impl Scheme {
    pub fn new(tag: SchemeTag) -> Self {
        Self { tag, ansatz: None, search: SearchControls::default() }
    }

    pub fn delta_min(ansatz: Ansatz, budget: usize) -> Self {
        Self {
            tag: SchemeTag::DeltaMin,
            ansatz: Some(ansatz),
            search: SearchControls { budget: Some(budget), ..SearchControls::default() },
        }
    }

    pub fn with_search(mut self, search: SearchControls) -> Self {
        self.search = search;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.tag == SchemeTag::DeltaMin {
            if self.ansatz.is_none() {
                return Err(Error::InvalidArgument("DELTA_MIN needs an ansatz".into()));
            }
            if self.search.budget.is_none() {
                return Err(Error::InvalidArgument("DELTA_MIN needs an evaluation budget".into()));
            }
        }
        if self.search.grid_points < 2 || self.search.phase_points < 1 || !(self.search.refine_tol > 0.0) {
            return Err(Error::InvalidArgument("search grid needs at least two points and a positive tolerance".into()));
        }
        Ok(())
    }

    /// Display label, including the ansatz for the minimizer.
    pub fn label(&self) -> String {
        match (self.tag, self.ansatz) {
            (SchemeTag::DeltaMin, Some(a)) => {
                let u = if self.search.vary_interferometer { "+U" } else { "" };
                format!("DELTA_MIN[{}{u}]", a.name())
            }
            (t, _) => t.name().to_string(),
        }
    }
}

/// Outcome of applying a scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationResult {
    pub scheme: Scheme,
    pub corrected: GbsSpec,
    pub delta: f64,
    pub delta_uncertainty: f64,
    pub diagnostics: Diagnostics,
}

/// Distances from a fixed lossless target to lossy probes.
#[derive(Debug, Clone)]
pub struct DeltaEvaluator {
    target: GbsSpec,
    loss: LossModel,
    opts: PndOptions,
    target_pnd: Pnd,
}

impl DeltaEvaluator {
    pub fn new(target: &GbsSpec, loss: &LossModel, opts: PndOptions) -> Result<Self> {
        loss.channel_for(target)?;
        let target_pnd = pnd_gaussian(&prepare_target(target)?, &opts)?;
        Ok(Self { target: target.clone(), loss: loss.clone(), opts, target_pnd })
    }

    pub fn target(&self) -> &GbsSpec {
        &self.target
    }

    pub fn loss(&self) -> &LossModel {
        &self.loss
    }

    pub fn options(&self) -> &PndOptions {
        &self.opts
    }

    pub fn target_pnd(&self) -> &Pnd {
        &self.target_pnd
    }

    pub fn probe_pnd(&self, probe: &GbsSpec) -> Result<Pnd> {
        pnd_gaussian(&propagate(probe, &self.loss)?, &self.opts)
    }

    /// Distance and truncation uncertainty for a probe spec.
    pub fn delta(&self, probe: &GbsSpec) -> Result<(f64, f64)> {
        total_variation(&self.target_pnd, &self.probe_pnd(probe)?)
    }

    /// Outcome indices whose probabilities agree within the relative tolerance.
    pub fn matched_outcomes(&self, probe: &Pnd, rel_tol: f64) -> Vec<usize> {
        let t = self.target_pnd.probs();
        let p = probe.probs();
        (0..t.len().min(p.len())).filter(|&i| t[i] > 1e-12 && (p[i] - t[i]).abs() <= rel_tol * t[i]).collect()
    }
}

fn squeezing_phase(z: Complex64) -> f64 {
    if z.norm() == 0.0 {
        0.0
    } else {
        z.arg()
    }
}

/// Spec with new squeezing magnitudes and the target's squeezing phases.
pub fn with_squeezing_magnitudes(spec: &GbsSpec, mags: &[f64]) -> GbsSpec {
    let mut out = spec.clone();
    out.squeezing = spec.squeezing.iter().zip(mags).map(|(z, &r)| Complex64::from_polar(r, squeezing_phase(*z))).collect();
    out
}

fn magnitudes(spec: &GbsSpec) -> Vec<f64> {
    spec.squeezing.iter().map(|z| z.norm()).collect()
}

/// Per-mode intensity transmission of the chain realizing `spec.unitary`.
pub fn effective_transmissivity_for(spec: &GbsSpec, loss: &LossModel) -> Result<Vec<f64>> {
    let x = loss.channel_for(spec)?.transfer;
    Ok((0..spec.num_modes()).map(|j| 0.5 * (x.column(2 * j).norm_squared() + x.column(2 * j + 1).norm_squared())).collect())
}

/// Transmissivity of a single-mode chain when it acts as a pure loss.
pub fn pure_loss_transmissivity(spec: &GbsSpec, loss: &LossModel) -> Option<f64> {
    if spec.num_modes() != 1 || spec.thermal.iter().any(|&t| t > 0.0) {
        return None;
    }
    let ch = loss.channel_for(spec).ok()?;
    let xxt = &ch.transfer * ch.transfer.transpose();
    let eta = 0.5 * xxt.trace();
    let iso = (xxt - DMatrix::identity(2, 2) * eta).amax();
    let noise = (&ch.noise - DMatrix::identity(2, 2) * (0.5 * (1.0 - eta))).amax();
    (iso < 1e-12 && noise < 1e-12).then_some(eta)
}

/// Input displacement whose lossy output mean equals the lossless target mean.
pub fn correct_displacement(spec: &GbsSpec, loss: &LossModel) -> Result<GbsSpec> {
    spec.validate()?;
    if loss.is_lossless() {
        return Ok(spec.clone());
    }
    let ch = loss.channel_for(spec)?;
    let wanted = passive_symplectic(&spec.unitary) * spec.displacement_vector();
    let svd = ch.transfer.clone().svd(true, true);
    let smin = svd.singular_values.min();
    if !(smin > 1e-12) {
        return Err(Error::Singular("displacement map"));
    }
    let d = svd.solve(&wanted, 0.0).map_err(|_| Error::Singular("displacement map"))?;
    Ok(spec.with_displacement_vector(&d))
}

/// Closed-form single-mode corrections for a squeezed-vacuum target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticCorrections {
    pub fidelity: f64,
    pub mean: f64,
    pub variance: f64,
    pub vacuum: f64,
}

/// Squeezing maximizing the fidelity with the target.
pub fn xi_fidelity(xi_tilde: f64, eta: f64) -> f64 {
    0.25 * ((1.0 - eta + (2.0 * xi_tilde).exp()) / (1.0 - eta + (-2.0 * xi_tilde).exp())).ln()
}

/// Squeezing matching the mean photon number.
pub fn xi_mean(xi_tilde: f64, eta: f64) -> f64 {
    (xi_tilde.sinh() / eta.sqrt()).asinh()
}

/// Squeezing matching the photon-number variance.
pub fn xi_variance(xi_tilde: f64, eta: f64) -> f64 {
    let target = 2.0 * xi_tilde.sinh().powi(2) * xi_tilde.cosh().powi(2);
    let s2 = (1.0 + eta) / (4.0 * eta) * ((1.0 + 8.0 * target / (1.0 + eta).powi(2)).sqrt() - 1.0);
    s2.max(0.0).sqrt().asinh()
}

/// Squeezing matching the vacuum probability.
pub fn xi_vacuum(xi_tilde: f64, eta: f64) -> f64 {
    (xi_tilde.sinh() / (eta * (2.0 - eta)).sqrt()).asinh()
}

pub fn analytic_corrections(xi_tilde: f64, eta: f64) -> AnalyticCorrections {
    AnalyticCorrections {
        fidelity: xi_fidelity(xi_tilde, eta),
        mean: xi_mean(xi_tilde, eta),
        variance: xi_variance(xi_tilde, eta),
        vacuum: xi_vacuum(xi_tilde, eta),
    }
}

/// Stationarity condition of a phase-space measure for lossy squeezed vacuum;
/// its unique positive root is the optimal input squeezing.
pub fn root_function(kind: MeasureKind, x: f64, xi_tilde: f64, eta: f64) -> Result<f64> {
    let (xt, e, l) = (xi_tilde, eta, 1.0 - eta);
    let mix = e * e + l * l + 2.0 * e * l * (2.0 * x).cosh();
    Ok(match kind {
        MeasureKind::KldPu => (2.0 * x - 2.0 * xt).sinh() - l * (2.0 * x).sinh() / mix,
        MeasureKind::KldSym => {
            (2.0 * x - 2.0 * xt).sinh()
                - (2.0 * e * l * (2.0 * xt).sinh() + l * l * (2.0 * x + 2.0 * xt).sinh()) / (e * e + mix * mix)
        }
        MeasureKind::KldUp => {
            e * e * (2.0 * x - 2.0 * xt).sinh() - l * l * (2.0 * x + 2.0 * xt).sinh() - 2.0 * e * l * (2.0 * xt).sinh()
                + e * l * l * (4.0 * x).sinh()
                + l * (e * e + l * l) * (2.0 * x).sinh()
        }
        MeasureKind::Bha => {
            let s2 = x.sinh().powi(2);
            e * (2.0 * x - 2.0 * xt).sinh() - l * (2.0 * xt).sinh()
                + 2.0 * e * l * l * s2 * (2.0 * x).sinh() / (1.0 + 2.0 * l * s2)
        }
        MeasureKind::Was => {
            2.0 * (2.0 * x).sinh() + (-(2.0 * x + xt)).exp() / (l + e * (-2.0 * x).exp()).sqrt()
                - (2.0 * x + xt).exp() / (l + e * (2.0 * x).exp()).sqrt()
        }
        other => return Err(Error::Unsupported(format!("no root function for {other}"))),
    })
}

/// Optimal single-mode squeezing for a phase-space measure, by root finding.
pub fn phase_space_optimizer(kind: MeasureKind, xi_tilde: f64, eta: f64) -> Result<f64> {
    if !(xi_tilde > 0.0) || !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidArgument(format!("need ξ̃ > 0 and η in (0, 1], got {xi_tilde}, {eta}")));
    }
    if eta == 1.0 {
        return Ok(xi_tilde);
    }
    root_function(kind, xi_tilde, xi_tilde, eta)?;
    let f = |x: f64| root_function(kind, x, xi_tilde, eta).unwrap_or(f64::NAN);
    let f0 = f(xi_tilde);
    if f0 == 0.0 {
        return Ok(xi_tilde);
    }
    let mut width = 0.5;
    loop {
        let hi = xi_tilde + width;
        let fh = f(hi);
        if fh.is_finite() && fh.signum() != f0.signum() {
            let tol = RootTolerance { residual: 1e-12, parameter: 1e-14, max_iter: 1000 };
            return brent_root(f, xi_tilde, hi, tol);
        }
        if width >= MAX_BRACKET {
            return Err(Error::NoBracket(format!("{kind} root beyond ξ̃ + {MAX_BRACKET}")));
        }
        width = (2.0 * width).min(MAX_BRACKET);
    }
}

/// Monotonicity polynomial of the vacuum-plus-odd distance in `s = sinh² ξ`.
pub fn monotonicity_polynomial(eta: f64, s: f64) -> f64 {
    let (a, b) = ((2.0 - eta).powi(2), (1.0 - eta).powi(2));
    4.0 - 3.0 * eta
        + 12.0 * (2.0 - eta) * (1.0 - eta) * s
        + 36.0 * eta * a * b * s * s
        + 4.0 * eta * eta * (14.0 - 15.0 * eta) * a * b * s.powi(3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VacuumRegion {
    ProvenOptimal,
    Edge,
}

/// Whether vacuum matching is certified to minimize the distance.
pub fn classify_vacuum_optimality(xi_vac: f64, eta: f64) -> VacuumRegion {
    if xi_vac < EDGE_SQUEEZING || eta < EDGE_TRANSMISSIVITY {
        return VacuumRegion::ProvenOptimal;
    }
    if monotonicity_polynomial(eta, xi_vac.sinh().powi(2)) > 0.0 {
        VacuumRegion::ProvenOptimal
    } else {
        VacuumRegion::Edge
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VacuumStrategy {
    FixedRatio,
    LossWeighted,
    PlusDc,
    PlusMean,
}

/// Corrected spec and the scalar parameters that produced it.
#[derive(Debug, Clone)]
pub struct Correction {
    pub spec: GbsSpec,
    pub diagnostics: Diagnostics,
}

impl Correction {
    fn plain(spec: GbsSpec) -> Self {
        Self { spec, diagnostics: Diagnostics::new() }
    }

    fn with(mut self, key: &str, value: serde_json::Value) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

fn lossy_vacuum(spec: &GbsSpec, loss: &LossModel) -> Result<f64> {
    vacuum_probability(&propagate(spec, loss)?)
}

fn total_mean(state: &GaussianState) -> f64 {
    photon_moments(state).0.iter().sum()
}

/// One-parameter squeezing family used by the vacuum strategies.
fn squeezing_family(spec: &GbsSpec, loss: &LossModel, weighted: bool) -> Result<(Box<dyn Fn(f64) -> Vec<f64> + Sync>, f64)> {
    let base = magnitudes(spec);
    if weighted {
        let etas = effective_transmissivity_for(spec, loss)?;
        if etas.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Singular("effective transmissivity"));
        }
        let weights: Vec<f64> = base.iter().zip(&etas).map(|(r, e)| r.sinh() / e.sqrt()).collect();
        let hi = weights.iter().filter(|w| **w > 0.0).map(|w| SQUEEZING_CAP.sinh() / w).fold(f64::INFINITY, f64::min);
        Ok((Box::new(move |t: f64| weights.iter().map(|w| (t * w).asinh()).collect()), hi))
    } else {
        let hi = base.iter().filter(|r| **r > 0.0).map(|r| SQUEEZING_CAP / r).fold(f64::INFINITY, f64::min);
        Ok((Box::new(move |t: f64| base.iter().map(|r| t * r).collect()), hi))
    }
}

const VACUUM_SCAN_STEPS: usize = 2000;

fn roots_nearest(g: &dyn Fn(f64) -> f64, lo: f64, hi: f64, anchor: f64) -> Option<(f64, Vec<f64>)> {
    let tol = RootTolerance { residual: 1e-13, parameter: 1e-15, max_iter: 1000 };
    let roots: Vec<f64> = sign_changes(g, lo, hi, VACUUM_SCAN_STEPS)
        .into_iter()
        .filter_map(|(a, b)| if a == b { Some(a) } else { brent_root(g, a, b, tol).ok() })
        .collect();
    let best = roots.iter().copied().min_by(|x, y| (x - anchor).abs().total_cmp(&(y - anchor).abs()))?;
    Some((best, roots))
}

/// Scale of the squeezing family matching the target vacuum probability; the
/// lossy vacuum probability need not be monotone for displaced inputs, so all
/// roots are located and the one nearest the target scale is kept.
fn solve_vacuum_scale(
    spec: &GbsSpec,
    loss: &LossModel,
    family: &dyn Fn(f64) -> Vec<f64>,
    hi: f64,
    target_p0: f64,
) -> Result<(f64, Vec<f64>)> {
    let g = |t: f64| lossy_vacuum(&with_squeezing_magnitudes(spec, &family(t)), loss).map(|p| p - target_p0).unwrap_or(f64::NAN);
    roots_nearest(&g, 0.0, hi, 1.0).ok_or_else(|| {
        Error::NoSolution(format!(
            "vacuum probability {target_p0:.6e} unreachable with |ξ| ≤ {SQUEEZING_CAP} (from {:.6e} at zero squeezing)",
            g(0.0) + target_p0
        ))
    })
}

/// Rescales input squeezing so the lossy vacuum probability equals the target's.
pub fn vacuum_overlap_correct(spec: &GbsSpec, loss: &LossModel, strategy: VacuumStrategy) -> Result<GbsSpec> {
    Ok(vacuum_correction(spec, loss, strategy)?.spec)
}

/// Vacuum-overlap correction with its scale parameters and residual.
pub fn vacuum_correction(spec: &GbsSpec, loss: &LossModel, strategy: VacuumStrategy) -> Result<Correction> {
    spec.validate()?;
    if loss.is_lossless() {
        return Ok(Correction::plain(spec.clone()).with("residual", json!(0.0)));
    }
    let target_p0 = vacuum_probability(&prepare_target(spec)?)?;
    if strategy == VacuumStrategy::PlusMean {
        return vacuum_plus_mean(spec, loss, target_p0);
    }
    let base = if strategy == VacuumStrategy::PlusDc { correct_displacement(spec, loss)? } else { spec.clone() };
    if magnitudes(spec).iter().all(|&r| r == 0.0) {
        let res = lossy_vacuum(&base, loss)? - target_p0;
        if res.abs() > 1e-10 {
            return Err(Error::NoSolution("target has no squeezing to rescale".into()));
        }
        return Ok(Correction::plain(base).with("residual", json!(res)));
    }
    let (family, hi) = squeezing_family(spec, loss, strategy == VacuumStrategy::LossWeighted)?;
    let (t, roots) = solve_vacuum_scale(&base, loss, &*family, hi, target_p0)?;
    let out = with_squeezing_magnitudes(&base, &family(t));
    let res = lossy_vacuum(&out, loss)? - target_p0;
    Ok(Correction::plain(out)
        .with("scale", json!(t))
        .with("roots", json!(roots))
        .with("residual", json!(res))
        .with("target_vacuum", json!(target_p0)))
}

/// Joint vacuum and total-mean matching: squeezing scaled by a common factor,
/// displacement scaled along the displacement-corrected direction.
fn vacuum_plus_mean(spec: &GbsSpec, loss: &LossModel, target_p0: f64) -> Result<Correction> {
    if spec.displacement.iter().all(|a| a.norm() == 0.0) {
        return Err(Error::Unsupported("joint vacuum and mean matching needs a displaced target".into()));
    }
    let target_mean = total_mean(&prepare_target(spec)?);
    let dc = correct_displacement(spec, loss)?;
    let zero_disp = GbsSpec { displacement: vec![Complex64::default(); spec.num_modes()], ..spec.clone() };
    let disp_mean: f64 = spec.displacement.iter().map(|a| a.norm_sqr()).sum();
    let (family, hi) = squeezing_family(spec, loss, false)?;
    let squeeze_mean = |t: f64| -> f64 {
        propagate(&with_squeezing_magnitudes(&zero_disp, &family(t)), loss).map(|s| total_mean(&s)).unwrap_or(f64::NAN)
    };
    let t_hi = if squeeze_mean(hi) <= target_mean {
        hi
    } else {
        brent_root(|t| squeeze_mean(t) - target_mean, 0.0, hi, RootTolerance::default())?
    };
    let build = |t: f64| -> GbsSpec {
        let c = ((target_mean - squeeze_mean(t)).max(0.0) / disp_mean).sqrt();
        let mut s = with_squeezing_magnitudes(&dc, &family(t));
        s.displacement = dc.displacement.iter().map(|a| a * c).collect();
        s
    };
    let g = |t: f64| lossy_vacuum(&build(t), loss).map(|p| p - target_p0).unwrap_or(f64::NAN);
    let anchor = vacuum_correction(spec, loss, VacuumStrategy::PlusDc)
        .ok()
        .and_then(|c| c.diagnostics.get("scale").and_then(|v| v.as_f64()))
        .unwrap_or(1.0);
    let (t, roots) = roots_nearest(&g, 0.0, t_hi, anchor)
        .ok_or_else(|| Error::NoSolution("vacuum and mean constraints have no common solution".into()))?;
    let out = build(t);
    let res = lossy_vacuum(&out, loss)? - target_p0;
    let mean_res = total_mean(&propagate(&out, loss)?) - target_mean;
    Ok(Correction::plain(out)
        .with("scale", json!(t))
        .with("roots", json!(roots))
        .with("residual", json!(res))
        .with("mean_residual", json!(mean_res)))
}

/// A random point on the two-mode vacuum-matching manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSample {
    pub squeezing: [f64; 2],
    pub theta: f64,
    pub gamma: f64,
    pub delta: f64,
}

/// Samples the vacuum-matching manifold of a two-mode target: the squeezing
/// direction and the interferometer angles are drawn uniformly, then the common
/// squeezing scale is solved for. Draws without a solution are skipped.
pub fn vacuum_manifold_samples(eval: &DeltaEvaluator, num_samples: usize, seed: u64) -> Result<Vec<ManifoldSample>> {
    let (spec, loss) = (eval.target(), eval.loss());
    if spec.num_modes() != 2 {
        return Err(Error::Unsupported("manifold sampling is two-mode only".into()));
    }
    let target_p0 = vacuum_probability(&prepare_target(spec)?)?;
    let draws: Vec<Option<ManifoldSample>> = (0..num_samples as u64)
        .into_par_iter()
        .map(|i| -> Result<Option<ManifoldSample>> {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let beta = rng.random_range(0.0..FRAC_PI_2);
            let theta = rng.random_range(0.0..PI);
            let gamma = rng.random_range(0.0..TAU);
            let mut probe = with_squeezing_magnitudes(spec, &[beta.cos(), beta.sin()]);
            probe.unitary = two_mode_unitary(theta, gamma);
            let (family, hi) = squeezing_family(&probe, loss, false)?;
            let t = match solve_vacuum_scale(&probe, loss, &*family, hi, target_p0) {
                Ok((t, _)) => t,
                Err(Error::NoSolution(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let mags = family(t);
            let (delta, _) = eval.delta(&with_squeezing_magnitudes(&probe, &mags))?;
            Ok(Some(ManifoldSample { squeezing: [mags[0], mags[1]], theta, gamma, delta }))
        })
        .collect::<Result<_>>()?;
    Ok(draws.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MeanFix {
    Dc,
    Vac,
}

fn mean_squeezing(spec: &GbsSpec, loss: &LossModel) -> Result<Vec<f64>> {
    let etas = effective_transmissivity_for(spec, loss)?;
    magnitudes(spec)
        .iter()
        .zip(&etas)
        .enumerate()
        .map(|(i, (r, e))| {
            if *e > 0.0 {
                Ok(xi_mean(*r, *e))
            } else if *r == 0.0 {
                Ok(0.0)
            } else {
                Err(Error::Unphysical(format!("mode {i} has zero effective transmissivity")))
            }
        })
        .collect()
}

/// Matches the total mean photon number; the displacement is fixed either by
/// displacement correction or jointly with the vacuum probability.
pub fn mean_correct(spec: &GbsSpec, loss: &LossModel, fix: MeanFix) -> Result<GbsSpec> {
    if loss.is_lossless() {
        return Ok(spec.clone());
    }
    match fix {
        MeanFix::Dc => {
            let dc = correct_displacement(spec, loss)?;
            Ok(with_squeezing_magnitudes(&dc, &mean_squeezing(spec, loss)?))
        }
        MeanFix::Vac => vacuum_overlap_correct(spec, loss, VacuumStrategy::PlusMean),
    }
}

/// Per-mode photon-number variance matching with displacement correction.
pub fn variance_correct(spec: &GbsSpec, loss: &LossModel) -> Result<GbsSpec> {
    if loss.is_lossless() {
        return Ok(spec.clone());
    }
    let etas = effective_transmissivity_for(spec, loss)?;
    let mags: Vec<f64> =
        magnitudes(spec).iter().zip(&etas).map(|(r, e)| if *e > 0.0 { xi_variance(*r, *e) } else { 0.0 }).collect();
    Ok(with_squeezing_magnitudes(&correct_displacement(spec, loss)?, &mags))
}

/// Refines a smooth one-dimensional minimum by locating the root of a
/// central-difference derivative.
fn polish_minimum(f: &dyn Fn(f64) -> f64, x: f64, lo: f64, hi: f64) -> f64 {
    let h = 1e-5 * x.abs().max(1e-2);
    let g = |y: f64| (f(y + h) - f(y - h)) / (2.0 * h);
    let (a, b) = ((x - 1e-3).max(lo + h), (x + 1e-3).min(hi - h));
    if !(a < b) {
        return x;
    }
    let (ga, gb) = (g(a), g(b));
    if !(ga < 0.0 && gb > 0.0) {
        return x;
    }
    brent_root(g, a, b, RootTolerance { residual: 0.0, parameter: 1e-13, max_iter: 200 }).unwrap_or(x)
}

/// Cyclic coordinate minimization of a smooth objective over squeezing magnitudes.
fn smooth_coordinate_descent(f: &(dyn Fn(&[f64]) -> f64 + Sync), x0: Vec<f64>, upper: &[f64]) -> (Vec<f64>, usize) {
    let mut x = x0;
    let mut sweeps = 0;
    while sweeps < 200 {
        sweeps += 1;
        let mut moved: f64 = 0.0;
        for i in 0..x.len() {
            let line = |v: f64| {
                let mut y = x.clone();
                y[i] = v;
                f(&y)
            };
            let (xb, _) = brent_minimize(&line, 0.0, upper[i], 1e-11, 500);
            let xb = polish_minimum(&line, xb, 0.0, upper[i]);
            let keep = line(x[i]);
            if line(xb) <= keep {
                moved = moved.max((xb - x[i]).abs());
                x[i] = xb;
            }
        }
        if moved < 1e-11 || x.len() == 1 {
            break;
        }
    }
    (x, sweeps)
}

fn search_upper(spec: &GbsSpec) -> Vec<f64> {
    magnitudes(spec).iter().map(|r| 3.0 * r + 1.0).collect()
}

/// Maximizes the fidelity: displacement correction, then squeezing minimizing `det(σ + σ′)`.
pub fn fidelity_optimize(spec: &GbsSpec, loss: &LossModel) -> Result<GbsSpec> {
    Ok(fidelity_correction(spec, loss)?.spec)
}

fn fidelity_correction(spec: &GbsSpec, loss: &LossModel) -> Result<Correction> {
    let target = prepare_target(spec)?;
    if !target.is_pure(1e-8) {
        return Err(Error::NotPure(target.symplectic_eigenvalues()?.last().copied().unwrap_or(0.0)));
    }
    if loss.is_lossless() {
        return Ok(Correction::plain(spec.clone()));
    }
    let dc = correct_displacement(spec, loss)?;
    if let Some(eta) = pure_loss_transmissivity(spec, loss) {
        let xi = xi_fidelity(spec.squeezing[0].norm(), eta);
        return Ok(Correction::plain(with_squeezing_magnitudes(&dc, &[xi])).with("closed_form", json!(true)));
    }
    let objective = |m: &[f64]| {
        propagate(&with_squeezing_magnitudes(&dc, m), loss)
            .and_then(|p| fidelity_determinant(&target, &p))
            .map(f64::ln)
            .unwrap_or(f64::INFINITY)
    };
    let (mags, sweeps) = smooth_coordinate_descent(&objective, magnitudes(spec), &search_upper(spec));
    Ok(Correction::plain(with_squeezing_magnitudes(&dc, &mags)).with("sweeps", json!(sweeps)))
}

/// Minimizes a phase-space measure: displacement correction, then squeezing.
pub fn phase_space_optimize(kind: MeasureKind, spec: &GbsSpec, loss: &LossModel) -> Result<GbsSpec> {
    Ok(phase_space_correction(kind, spec, loss)?.spec)
}

fn phase_space_correction(kind: MeasureKind, spec: &GbsSpec, loss: &LossModel) -> Result<Correction> {
    if kind == MeasureKind::Fidelity {
        return fidelity_correction(spec, loss);
    }
    if loss.is_lossless() {
        return Ok(Correction::plain(spec.clone()));
    }
    let target = prepare_target(spec)?;
    let dc = correct_displacement(spec, loss)?;
    if kind == MeasureKind::WignerTvd {
        if spec.num_modes() != 1 {
            return Err(Error::Unsupported("Wigner-function optimization is single-mode only".into()));
        }
        let upper = search_upper(spec)[0];
        let f = |r: f64| {
            propagate(&with_squeezing_magnitudes(&dc, &[r]), loss)
                .and_then(|p| wigner_tvd(&target, &p))
                .map(|w| w.value)
                .unwrap_or(f64::INFINITY)
        };
        let (r, v) = brent_minimize(f, 0.0, upper, 1e-9, 500);
        return Ok(Correction::plain(with_squeezing_magnitudes(&dc, &[r])).with("objective", json!(v)));
    }
    if let (Some(eta), true) = (pure_loss_transmissivity(spec, loss), spec.squeezing[0].norm() > 0.0) {
        let xi = phase_space_optimizer(kind, spec.squeezing[0].norm(), eta)?;
        let res = root_function(kind, xi, spec.squeezing[0].norm(), eta)?;
        return Ok(Correction::plain(with_squeezing_magnitudes(&dc, &[xi])).with("root_residual", json!(res)));
    }
    let objective = |m: &[f64]| {
        propagate(&with_squeezing_magnitudes(&dc, m), loss)
            .and_then(|p| phase_space_distance(kind, &target, &p))
            .unwrap_or(f64::INFINITY)
    };
    let (mags, sweeps) = smooth_coordinate_descent(&objective, magnitudes(spec), &search_upper(spec));
    Ok(Correction::plain(with_squeezing_magnitudes(&dc, &mags)).with("sweeps", json!(sweeps)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Coord {
    Squeeze(usize),
    DispAbs(usize),
    DispPhase(usize),
    Thermal(usize),
    Theta,
    Gamma,
}

struct SearchSpace {
    base: GbsSpec,
    coords: Vec<Coord>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    points: Vec<usize>,
    periodic: Vec<bool>,
}

/// Interferometer angles of a two-mode unitary in the `U(θ, γ)` family, if it belongs to it.
pub fn two_mode_angles(u: &DMatrix<Complex64>) -> Option<(f64, f64)> {
    if u.nrows() != 2 {
        return None;
    }
    let theta = u[(1, 0)].norm().atan2(u[(0, 0)].norm());
    let gamma = if u[(1, 0)].norm() > 1e-14 { (-u[(1, 0)].arg()).rem_euclid(TAU) } else { 0.0 };
    let rebuilt = two_mode_unitary(theta, gamma);
    let err = (&rebuilt - u).iter().map(|z| z.norm()).fold(0.0, f64::max);
    (err < 1e-9).then_some((theta, gamma))
}

impl SearchSpace {
    fn new(spec: &GbsSpec, loss: &LossModel, ansatz: Ansatz, c: &SearchControls) -> Result<Self> {
        let m = spec.num_modes();
        let etas = effective_transmissivity_for(spec, loss)?;
        let eta_min = etas.iter().copied().fold(f64::INFINITY, f64::min).max(1e-6);
        let mut s = Self { base: spec.clone(), coords: vec![], lo: vec![], hi: vec![], points: vec![], periodic: vec![] };
        let push = |s: &mut Self, c: Coord, lo: f64, hi: f64, n: usize, per: bool| {
            s.coords.push(c);
            s.lo.push(lo);
            s.hi.push(hi);
            s.points.push(n);
            s.periodic.push(per);
        };
        for i in 0..m {
            let r = spec.squeezing[i].norm();
            push(&mut s, Coord::Squeeze(i), 0.0, if r > 0.0 { 2.0 * r + 1.0 } else { 1.0 }, c.grid_points, false);
        }
        if ansatz.displaced() {
            for i in 0..m {
                let a = spec.displacement[i].norm();
                push(&mut s, Coord::DispAbs(i), 0.0, 2.0 * a / eta_min.sqrt() + 0.5, c.grid_points, false);
                push(&mut s, Coord::DispPhase(i), 0.0, TAU, c.phase_points, true);
            }
        }
        if ansatz.thermal() {
            for i in 0..m {
                push(&mut s, Coord::Thermal(i), 0.0, c.thermal_max, c.grid_points, false);
            }
            s.base.thermal = vec![0.0; m];
        }
        if c.vary_interferometer {
            if m != 2 || two_mode_angles(&spec.unitary).is_none() {
                return Err(Error::Unsupported("interferometer search is limited to two-mode U(θ, γ)".into()));
            }
            push(&mut s, Coord::Theta, 0.0, PI, c.phase_points, true);
            push(&mut s, Coord::Gamma, 0.0, TAU, c.phase_points, true);
        }
        Ok(s)
    }

    fn dim(&self) -> usize {
        self.coords.len()
    }

    fn start(&self, spec: &GbsSpec) -> Vec<f64> {
        let angles = two_mode_angles(&spec.unitary);
        self.coords
            .iter()
            .map(|c| match *c {
                Coord::Squeeze(i) => spec.squeezing[i].norm(),
                Coord::DispAbs(i) => spec.displacement[i].norm(),
                Coord::DispPhase(i) => spec.displacement[i].arg().rem_euclid(TAU),
                Coord::Thermal(i) => spec.thermal_occupation(i),
                Coord::Theta => angles.map(|a| a.0).unwrap_or(0.0),
                Coord::Gamma => angles.map(|a| a.1).unwrap_or(0.0),
            })
            .enumerate()
            .map(|(k, v)| v.clamp(self.lo[k], self.hi[k]))
            .collect()
    }

    fn build(&self, x: &[f64]) -> GbsSpec {
        let mut s = self.base.clone();
        let (mut theta, mut gamma) = (None, None);
        for (c, &v) in self.coords.iter().zip(x) {
            match *c {
                Coord::Squeeze(i) => s.squeezing[i] = Complex64::from_polar(v, squeezing_phase(self.base.squeezing[i])),
                Coord::DispAbs(i) => {
                    let phase = self.coords.iter().position(|d| *d == Coord::DispPhase(i)).map_or(0.0, |j| x[j]);
                    s.displacement[i] = Complex64::from_polar(v, phase);
                }
                Coord::DispPhase(_) => {}
                Coord::Thermal(i) => s.thermal[i] = v,
                Coord::Theta => theta = Some(v),
                Coord::Gamma => gamma = Some(v),
            }
        }
        if let (Some(t), Some(g)) = (theta, gamma) {
            s.unitary = two_mode_unitary(t, g);
        }
        s
    }

    /// Wraps periodic coordinates and clips the rest at their lower bound.
    fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(k, &v)| {
                if self.periodic[k] {
                    self.lo[k] + (v - self.lo[k]).rem_euclid(self.hi[k] - self.lo[k])
                } else {
                    v.max(self.lo[k])
                }
            })
            .collect()
    }

    fn grid_axis(&self, k: usize, n: usize) -> Vec<f64> {
        let (lo, hi) = (self.lo[k], self.hi[k]);
        if self.periodic[k] {
            (0..n).map(|j| lo + (hi - lo) * j as f64 / n as f64).collect()
        } else if n == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect()
        }
    }
}

struct Objective<'a, F: Fn(&[f64]) -> f64>(&'a F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Objective<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok((self.0)(x))
    }
}

/// Nelder-Mead from `x` with an axis-aligned initial simplex of size `step`.
fn simplex_descent<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], step: &[f64], max_iters: u64, tol: f64) -> Option<(f64, Vec<f64>)> {
    let mut simplex = vec![x.to_vec()];
    for (k, h) in step.iter().enumerate() {
        let mut y = x.to_vec();
        y[k] += h;
        simplex.push(y);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(tol).ok()?;
    let res = Executor::new(Objective(f), solver).configure(|st| st.max_iters(max_iters)).run().ok()?;
    let st = res.state();
    Some((st.best_cost, st.best_param.clone()?))
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            _ => {}
        }
    }
    false
}

fn better(a: (f64, &[f64]), b: (f64, &[f64])) -> bool {
    a.0 < b.0 || (a.0 == b.0 && lex_less(a.1, b.1))
}

/// Direct minimization of the distance over an ansatz: coarse grid scan, then
/// simplex descent and coordinate-wise golden-section polish of the best grid points.
pub fn minimize_delta(eval: &DeltaEvaluator, ansatz: Ansatz, controls: &SearchControls) -> Result<MitigationResult> {
    let scheme = Scheme { tag: SchemeTag::DeltaMin, ansatz: Some(ansatz), search: *controls };
    scheme.validate()?;
    let budget = controls.budget.expect("validated");
    let spec = eval.target();
    let loss = eval.loss();
    let space = SearchSpace::new(spec, loss, ansatz, controls)?;
    let d = space.dim();
    let evals = std::sync::atomic::AtomicUsize::new(0);
    let f = |x: &[f64]| -> f64 {
        evals.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        eval.delta(&space.build(x)).map(|r| r.0).unwrap_or(f64::INFINITY)
    };

    let mut starts: Vec<Vec<f64>> = vec![space.start(spec)];
    if let Ok(c) = vacuum_correction(spec, loss, VacuumStrategy::FixedRatio) {
        starts.push(space.start(&c.spec));
    }
    if ansatz.displaced() {
        if let Ok(s) = correct_displacement(spec, loss) {
            starts.push(space.start(&s));
        }
        if let Ok(c) = vacuum_correction(spec, loss, VacuumStrategy::PlusDc) {
            starts.push(space.start(&c.spec));
        }
    }
    let mut scored: Vec<(f64, Vec<f64>)> = starts.into_iter().map(|x| (f(&x), x)).collect();

    let grid_budget = budget / 2;
    let mut step: Vec<f64> = (0..d).map(|k| (space.hi[k] - space.lo[k]) / space.points[k].max(2) as f64).collect();
    if d <= 6 {
        let full: f64 = space.points.iter().map(|&n| n as f64).product();
        let shrink = if full > grid_budget as f64 { (grid_budget as f64 / full).powf(1.0 / d as f64) } else { 1.0 };
        let npts: Vec<usize> = space.points.iter().map(|&n| ((n as f64 * shrink).floor() as usize).max(3)).collect();
        let axes: Vec<Vec<f64>> = (0..d).map(|k| space.grid_axis(k, npts[k])).collect();
        step =
            (0..d).map(|k| if axes[k].len() > 1 { (axes[k][1] - axes[k][0]).abs() } else { space.hi[k] - space.lo[k] }).collect();
        let total: usize = npts.iter().product();
        let grid: Vec<(f64, Vec<f64>)> = (0..total)
            .into_par_iter()
            .map(|mut idx| {
                let x: Vec<f64> = (0..d)
                    .map(|k| {
                        let v = axes[k][idx % npts[k]];
                        idx /= npts[k];
                        v
                    })
                    .collect();
                (f(&x), x)
            })
            .collect();
        scored.extend(grid);
    }
    scored.sort_by(|a, b| {
        if better((a.0, &a.1), (b.0, &b.1)) {
            std::cmp::Ordering::Less
        } else if better((b.0, &b.1), (a.0, &a.1)) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    let mut seeds: Vec<(f64, Vec<f64>)> = Vec::new();
    for cand in scored {
        if seeds.len() >= controls.candidates.max(1) {
            break;
        }
        let far = seeds.iter().all(|s| s.1.iter().zip(&cand.1).enumerate().any(|(k, (a, b))| (a - b).abs() > 1.5 * step[k]));
        if far {
            seeds.push(cand);
        }
    }

    let mut exhausted = false;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut sweeps_total = 0;
    let num_seeds = seeds.len();
    for (n, (mut fx, mut x)) in seeds.into_iter().enumerate() {
        let used = evals.load(std::sync::atomic::Ordering::Relaxed);
        let limit = used + budget.saturating_sub(used) / (num_seeds - n);
        let spent = evals.load(std::sync::atomic::Ordering::Relaxed);
        let g = |y: &[f64]| f(&space.project(y));
        let iters = (limit.saturating_sub(spent) / 2) as u64;
        if let Some((fy, y)) = simplex_descent(&g, &x, &step, iters, controls.refine_tol * controls.refine_tol) {
            let y = space.project(&y);
            if better((fy, &y), (fx, &x)) {
                x = y;
                fx = fy;
            }
        }
        let mut width = step.clone();
        let mut capped = false;
        loop {
            sweeps_total += 1;
            let mut moved: f64 = 0.0;
            for k in 0..d {
                let spent = evals.load(std::sync::atomic::Ordering::Relaxed);
                if spent >= limit {
                    capped = true;
                    exhausted = spent >= budget;
                    break;
                }
                let (a, b) = if space.periodic[k] {
                    (x[k] - width[k], x[k] + width[k])
                } else {
                    ((x[k] - width[k]).max(space.lo[k]), (x[k] + width[k]).min(space.hi[k].max(x[k] + width[k])))
                };
                let line = |v: f64| {
                    let mut y = x.clone();
                    y[k] =
                        if space.periodic[k] { space.lo[k] + (v - space.lo[k]).rem_euclid(space.hi[k] - space.lo[k]) } else { v };
                    f(&y)
                };
                let (v, fv, _) = golden_section(&line, a, b, controls.refine_tol);
                let v = if space.periodic[k] { space.lo[k] + (v - space.lo[k]).rem_euclid(space.hi[k] - space.lo[k]) } else { v };
                let mut y = x.clone();
                y[k] = v;
                if better((fv, &y), (fx, &x)) {
                    moved = moved.max((v - x[k]).abs());
                    x = y;
                    fx = fv;
                }
            }
            for w in width.iter_mut() {
                *w = (*w * 0.5).max(4.0 * controls.refine_tol);
            }
            let settled = width.iter().all(|w| *w <= 4.0 * controls.refine_tol + 1e-15);
            if capped || (moved < controls.refine_tol && settled) || sweeps_total > 10_000 {
                break;
            }
        }
        if best.as_ref().map_or(true, |b| better((fx, &x), (b.0, &b.1))) {
            best = Some((fx, x));
        }
        if exhausted {
            break;
        }
    }
    let (_, x) = best.expect("at least one seed");
    let corrected = space.build(&x);
    let probe = eval.probe_pnd(&corrected)?;
    let (delta, unc) = total_variation(eval.target_pnd(), &probe)?;
    let matched = eval.matched_outcomes(&probe, controls.match_tolerance);
    let mut diagnostics = Diagnostics::new();
    diagnostics.insert("evaluations".into(), json!(evals.load(std::sync::atomic::Ordering::Relaxed)));
    diagnostics.insert("budget_exhausted".into(), json!(exhausted));
    diagnostics.insert("parameters".into(), json!(x));
    diagnostics.insert("matched_outcomes".into(), json!(matched));
    Ok(MitigationResult { scheme, corrected, delta, delta_uncertainty: unc, diagnostics })
}

/// Applies schemes to one target and loss model, sharing the target distribution.
pub struct Mitigator {
    eval: DeltaEvaluator,
}

impl Mitigator {
    pub fn new(target: &GbsSpec, loss: &LossModel, opts: PndOptions) -> Result<Self> {
        Ok(Self { eval: DeltaEvaluator::new(target, loss, opts)? })
    }

    pub fn evaluator(&self) -> &DeltaEvaluator {
        &self.eval
    }

    /// The corrected spec of any non-search scheme.
    pub fn correct(&self, scheme: &Scheme) -> Result<Correction> {
        scheme.validate()?;
        let (spec, loss) = (self.eval.target(), self.eval.loss());
        match scheme.tag {
            SchemeTag::None => Ok(Correction::plain(spec.clone())),
            SchemeTag::Dc => Ok(Correction::plain(correct_displacement(spec, loss)?)),
            SchemeTag::Fidelity => fidelity_correction(spec, loss),
            SchemeTag::Mean => {
                if loss.is_lossless() {
                    return Ok(Correction::plain(spec.clone()));
                }
                Ok(Correction::plain(with_squeezing_magnitudes(spec, &mean_squeezing(spec, loss)?)))
            }
            SchemeTag::MeanPlusDc => Ok(Correction::plain(mean_correct(spec, loss, MeanFix::Dc)?)),
            SchemeTag::Variance => Ok(Correction::plain(variance_correct(spec, loss)?)),
            SchemeTag::VacFixedRatio => vacuum_correction(spec, loss, VacuumStrategy::FixedRatio),
            SchemeTag::VacLossWeighted => vacuum_correction(spec, loss, VacuumStrategy::LossWeighted),
            SchemeTag::VacPlusDc => vacuum_correction(spec, loss, VacuumStrategy::PlusDc),
            SchemeTag::VacPlusMean => vacuum_correction(spec, loss, VacuumStrategy::PlusMean),
            SchemeTag::DeltaMin => Err(Error::InvalidArgument("DELTA_MIN is a search, not a correction".into())),
            t => phase_space_correction(t.measure().expect("phase-space tag"), spec, loss),
        }
    }

    pub fn run(&self, scheme: &Scheme) -> Result<MitigationResult> {
        if scheme.tag == SchemeTag::DeltaMin {
            scheme.validate()?;
            return minimize_delta(&self.eval, scheme.ansatz.expect("validated"), &scheme.search);
        }
        let c = self.correct(scheme)?;
        let probe = self.eval.probe_pnd(&c.spec)?;
        let (delta, unc) = total_variation(self.eval.target_pnd(), &probe)?;
        let mut diagnostics = c.diagnostics;
        diagnostics.insert("squeezing".into(), json!(c.spec.squeezing.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>()));
        diagnostics.insert("displacement".into(), json!(c.spec.displacement.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>()));
        Ok(MitigationResult { scheme: *scheme, corrected: c.spec, delta, delta_uncertainty: unc, diagnostics })
    }
}

/// One-shot scheme application.
pub fn mitigate(spec: &GbsSpec, loss: &LossModel, scheme: &Scheme, opts: PndOptions) -> Result<MitigationResult> {
    Mitigator::new(spec, loss, opts)?.run(scheme)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::apply_loss_layer;

    const PS_KINDS: [MeasureKind; 5] =
        [MeasureKind::Was, MeasureKind::KldUp, MeasureKind::Bha, MeasureKind::KldSym, MeasureKind::KldPu];

    fn single(xi: f64, alpha: Complex64) -> GbsSpec {
        GbsSpec::single_mode(Complex64::new(xi, 0.0), alpha)
    }

    fn pure_loss(spec: &GbsSpec, eta: f64) -> LossModel {
        LossModel::input_loss(&spec.unitary, &vec![eta; spec.num_modes()]).unwrap()
    }

    fn squeezed_state(xi: f64, eta: f64) -> GaussianState {
        apply_loss_layer(&prepare_target(&single(xi, Complex64::default())).unwrap(), &[eta]).unwrap()
    }

    #[test]
    fn closed_forms_at_reference_point() {
        let c = analytic_corrections(1.5, 0.5);
        assert!((c.fidelity - 0.905_703_2).abs() < 1e-6);
        assert!((c.mean - 1.821_999_9).abs() < 1e-6);
        assert!((c.variance - 1.833_803_7).abs() < 1e-6);
        assert!((c.vacuum - 1.63173).abs() < 1e-4);
        let one = analytic_corrections(0.8, 1.0);
        for v in [one.fidelity, one.mean, one.variance, one.vacuum] {
            assert!((v - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn fidelity_squeezing_is_bracketed() {
        for xt in [0.1, 0.7, 1.5, 2.5] {
            for eta in [0.1, 0.5, 0.9] {
                let f = xi_fidelity(xt, eta);
                assert!(0.5 * xt <= f + 1e-12 && f <= xt + 1e-12, "{xt} {eta}");
            }
        }
    }

    #[test]
    fn root_chain_at_reference_point() {
        let roots: Vec<f64> = PS_KINDS.iter().map(|&k| phase_space_optimizer(k, 1.5, 0.5).unwrap()).collect();
        let expect = [1.83443, 1.84564, 1.85463, 1.89293, 1.92582];
        for (r, e) in roots.iter().zip(expect) {
            assert!((r - e).abs() < 1e-5, "{r} vs {e}");
        }
        assert!(roots.windows(2).all(|w| w[0] < w[1]));
        assert!(1.5 < roots[0] && xi_variance(1.5, 0.5) < roots[0]);
        for (k, r) in PS_KINDS.iter().zip(&roots) {
            assert!(root_function(*k, *r, 1.5, 0.5).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn roots_approach_target_without_loss() {
        for k in PS_KINDS {
            assert!((phase_space_optimizer(k, 1.2, 1.0 - 1e-6).unwrap() - 1.2).abs() < 1e-3);
        }
        assert!(phase_space_optimizer(MeasureKind::Was, 0.0, 0.5).is_err());
        assert!(root_function(MeasureKind::WignerTvd, 1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn roots_are_local_minima() {
        let target = squeezed_state(1.5, 1.0);
        for k in PS_KINDS {
            let r = phase_space_optimizer(k, 1.5, 0.5).unwrap();
            let d = |x: f64| phase_space_distance(k, &target, &squeezed_state(x, 0.5)).unwrap();
            let h = 1e-3;
            assert!(d(r + h) + d(r - h) - 2.0 * d(r) > 0.0, "{k}");
        }
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_vacuum_optimality(1.0, 0.99), VacuumRegion::ProvenOptimal);
        assert_eq!(classify_vacuum_optimality(3.0, 0.5), VacuumRegion::ProvenOptimal);
        assert_eq!(classify_vacuum_optimality(xi_vacuum(2.38, 0.97), 0.97), VacuumRegion::Edge);
        assert_eq!(classify_vacuum_optimality(xi_vacuum(2.38, 0.9), 0.9), VacuumRegion::ProvenOptimal);
    }

    #[test]
    fn edge_threshold_is_smallest_polynomial_root() {
        let root_at = |eta: f64| {
            let s = brent_root(|s| monotonicity_polynomial(eta, s), 0.1, 1e4, RootTolerance::default()).unwrap();
            s.sqrt().asinh()
        };
        let (eta, value, _) = golden_section(root_at, EDGE_TRANSMISSIVITY + 1e-6, 1.0 - 1e-6, 1e-10);
        assert!((value - EDGE_SQUEEZING).abs() < 1e-6, "{value} at {eta}");
        assert!(monotonicity_polynomial(0.9, 1e6) > 0.0);
    }

    #[test]
    fn lossless_leaves_specs_unchanged() {
        let spec = GbsSpec::new(
            vec![Complex64::new(0.4, 0.1), Complex64::new(0.5, 0.0)],
            vec![Complex64::new(0.2, -0.3), Complex64::default()],
            two_mode_unitary(0.8, 0.44),
        )
        .unwrap();
        let loss = LossModel::lossless(2);
        assert_eq!(correct_displacement(&spec, &loss).unwrap(), spec);
        for s in [VacuumStrategy::FixedRatio, VacuumStrategy::LossWeighted, VacuumStrategy::PlusDc] {
            assert_eq!(vacuum_overlap_correct(&spec, &loss, s).unwrap(), spec);
        }
        assert_eq!(mean_correct(&spec, &loss, MeanFix::Dc).unwrap(), spec);
        assert_eq!(fidelity_optimize(&spec, &loss).unwrap(), spec);
        let r = mitigate(&spec, &loss, &Scheme::new(SchemeTag::None), PndOptions::lenient()).unwrap();
        assert!(r.delta < 1e-12);
    }

    #[test]
    fn displacement_correction_single_mode() {
        let spec = single(0.3, Complex64::new(0.5, 0.0));
        let dc = correct_displacement(&spec, &pure_loss(&spec, 0.5)).unwrap();
        assert!((dc.displacement[0].re - 0.5 / 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(dc.squeezing, spec.squeezing);
        let dark = LossModel::input_loss(&spec.unitary, &[0.0]).unwrap();
        assert!(matches!(correct_displacement(&spec, &dark), Err(Error::Singular(_))));
    }

    #[test]
    fn fixed_ratio_reduces_to_closed_form() {
        let spec = single(1.5, Complex64::default());
        let out = vacuum_overlap_correct(&spec, &pure_loss(&spec, 0.5), VacuumStrategy::FixedRatio).unwrap();
        assert!((out.squeezing[0].norm() - xi_vacuum(1.5, 0.5)).abs() < 1e-10);
    }

    #[test]
    fn loss_weighted_matches_fixed_ratio_for_equal_magnitudes() {
        let spec = GbsSpec::product(&[0.6, 0.6], &[Complex64::default(); 2]).unwrap();
        let loss = pure_loss(&spec, 0.6);
        let a = vacuum_overlap_correct(&spec, &loss, VacuumStrategy::FixedRatio).unwrap();
        let b = vacuum_overlap_correct(&spec, &loss, VacuumStrategy::LossWeighted).unwrap();
        for (x, y) in a.squeezing.iter().zip(&b.squeezing) {
            assert!((x - y).norm() < 1e-9);
        }
    }

    #[test]
    fn vacuum_residual_is_small_for_two_modes() {
        let u = two_mode_unitary(0.8, 0.44);
        let spec =
            GbsSpec::new(vec![Complex64::new(0.4, 0.0), Complex64::new(0.5, 0.0)], vec![Complex64::default(); 2], u.clone())
                .unwrap();
        let loss = crate::loss::build_loss_model(&u, &[0.7, 0.6], None, &[0.5, 0.8]).unwrap();
        for s in [VacuumStrategy::FixedRatio, VacuumStrategy::LossWeighted] {
            let c = vacuum_correction(&spec, &loss, s).unwrap();
            assert!(c.diagnostics["residual"].as_f64().unwrap().abs() < 1e-10);
        }
        assert!(matches!(vacuum_correction(&spec, &loss, VacuumStrategy::PlusMean), Err(Error::Unsupported(_))));
    }

    #[test]
    fn generic_fidelity_matches_closed_form() {
        let spec = GbsSpec::product(&[1.5, 0.0], &[Complex64::default(); 2]).unwrap();
        let out = fidelity_optimize(&spec, &pure_loss(&spec, 0.5)).unwrap();
        assert!((out.squeezing[0].norm() - xi_fidelity(1.5, 0.5)).abs() < 1e-8);
        assert!(out.squeezing[1].norm() < 1e-8);
        let one = single(1.5, Complex64::default());
        let closed = fidelity_optimize(&one, &pure_loss(&one, 0.5)).unwrap();
        assert!((closed.squeezing[0].norm() - 0.90571).abs() < 1e-5);
    }

    #[test]
    fn generic_phase_space_matches_roots() {
        let spec = GbsSpec::product(&[1.5, 0.0], &[Complex64::default(); 2]).unwrap();
        let out = phase_space_optimize(MeasureKind::Was, &spec, &pure_loss(&spec, 0.5)).unwrap();
        assert!((out.squeezing[0].norm() - phase_space_optimizer(MeasureKind::Was, 1.5, 0.5).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn displaced_single_mode_orderings() {
        let d = |phase: f64, tag: SchemeTag| {
            let spec = GbsSpec::displaced_single_mode(1.0, 0.1, phase);
            mitigate(&spec, &pure_loss(&spec, 0.5), &Scheme::new(tag), PndOptions::default()).unwrap().delta
        };
        assert!(d(0.0, SchemeTag::MeanPlusDc) < d(0.0, SchemeTag::Dc));
        assert!(d(PI / 2.0, SchemeTag::MeanPlusDc) > d(PI / 2.0, SchemeTag::Dc));
    }

    #[test]
    fn joint_vacuum_and_mean_can_be_infeasible() {
        let spec = GbsSpec::displaced_single_mode(1.0, 0.1, 0.0);
        let r = vacuum_correction(&spec, &pure_loss(&spec, 0.5), VacuumStrategy::PlusMean);
        assert!(matches!(r, Err(Error::NoSolution(_))));
    }

    #[test]
    fn minimizer_is_exact_without_loss() {
        let spec = single(0.9, Complex64::default());
        let eval = DeltaEvaluator::new(&spec, &LossModel::lossless(1), PndOptions::default()).unwrap();
        let controls = SearchControls { budget: Some(400), ..SearchControls::default() };
        let r = minimize_delta(&eval, Ansatz::SqVac, &controls).unwrap();
        assert!(r.delta < 1e-9);
        assert!((r.corrected.squeezing[0].norm() - 0.9).abs() < 1e-4);
    }

    #[test]
    fn minimizer_finds_vacuum_matching_point() {
        let spec = single(1.5, Complex64::default());
        let eval = DeltaEvaluator::new(&spec, &pure_loss(&spec, 0.5), PndOptions::default()).unwrap();
        let controls = SearchControls { budget: Some(600), ..SearchControls::default() };
        let r = minimize_delta(&eval, Ansatz::SqVac, &controls).unwrap();
        assert!((r.corrected.squeezing[0].norm() - xi_vacuum(1.5, 0.5)).abs() < 1e-4);
    }

    #[test]
    fn scheme_validation_and_names() {
        assert!(Scheme::new(SchemeTag::DeltaMin).validate().is_err());
        assert!(Scheme::delta_min(Ansatz::SqVac, 10).validate().is_ok());
        for t in SchemeTag::ALL {
            assert_eq!(t.name().parse::<SchemeTag>().unwrap(), t);
        }
        assert_eq!(Scheme::delta_min(Ansatz::DisplacedSq, 5).label(), "DELTA_MIN[DISPLACED_SQ]");
    }
}
