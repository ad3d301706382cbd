//! Numbered acceptance battery shared by the test suite and the command-line verifier.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::gaussian::{propagate, two_mode_unitary, GbsSpec};
use crate::loss::{build_loss_model, effective_transmissivity, EtaRanges, LossModel};
use crate::measures::MeasureKind;
use crate::mitigation::{
    analytic_corrections, classify_vacuum_optimality, minimize_delta, phase_space_optimizer, vacuum_manifold_samples, Ansatz,
    DeltaEvaluator, Mitigator, Scheme, SchemeTag, SearchControls, VacuumRegion,
};
use crate::oracle::oracle_pnd;
use crate::pnd::{delta_lower_bound, parity_split, pnd_gaussian, pnd_lossy_displaced_squeezed, PndOptions};
use crate::vibronic::{formic_acid, phase_noise_study, sulfur_dioxide, tropolone, SampleStats};

/// One numbered criterion.
#[derive(Clone, Copy)]
pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub tags: &'static [&'static str],
    check: fn(&mut Checker) -> Result<()>,
}

impl Criterion {
    /// Whether `filter` names this criterion by number, tag or name fragment.
    pub fn matches(&self, filter: &str) -> bool {
        let f = filter.trim().to_ascii_lowercase();
        f.parse::<u32>().map_or(false, |n| n == self.id)
            || self.tags.iter().any(|t| *t == f)
            || self.name.to_ascii_lowercase().contains(&f)
    }

    pub fn run(&self) -> Report {
        let start = std::time::Instant::now();
        let mut c = Checker::default();
        let outcome = (self.check)(&mut c);
        let (passed, detail) = match outcome {
            Ok(()) => (c.failures.is_empty(), c.summary()),
            Err(e) => (false, format!("error: {e}")),
        };
        Report { id: self.id, name: self.name.to_string(), passed, detail, seconds: start.elapsed().as_secs_f64() }
    }
}

/// Result of running one criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Report {
    /// One line per criterion for terminal reports.
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        format!("{status} [{:>2}] {} ({:.1}s): {}", self.id, self.name, self.seconds, self.detail)
    }
}

/// Collects named comparisons; any failed comparison fails the criterion.
#[derive(Debug, Default)]
pub struct Checker {
    checks: usize,
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checker {
    pub fn holds(&mut self, label: impl Into<String>, ok: bool) {
        self.checks += 1;
        if !ok {
            self.failures.push(label.into());
        }
    }

    pub fn near(&mut self, label: &str, value: f64, expected: f64, tol: f64) {
        let ok = (value - expected).abs() <= tol;
        self.holds(format!("{label} = {value:.6} vs {expected} ± {tol}"), ok);
        if ok {
            self.note(format!("{label} {value:.4}"));
        }
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn summary(&self) -> String {
        let mut s = String::new();
        if self.failures.is_empty() {
            let _ = write!(s, "{} checks", self.checks);
        } else {
            let shown: Vec<&str> = self.failures.iter().take(3).map(String::as_str).collect();
            let _ = write!(s, "{}/{} checks failed: {}", self.failures.len(), self.checks, shown.join("; "));
            if self.failures.len() > 3 {
                s.push_str("; ...");
            }
        }
        if !self.notes.is_empty() {
            let _ = write!(s, " | {}", self.notes.join(", "));
        }
        s
    }
}

pub fn criteria() -> Vec<Criterion> {
    vec![
        Criterion { id: 1, name: "oracle equivalence", tags: &["oracle", "pnd"], check: oracle_equivalence },
        Criterion { id: 2, name: "vacuum matching is optimal", tags: &["vacuum", "minimizer"], check: vacuum_optimality },
        Criterion { id: 3, name: "parity balance", tags: &["parity", "vacuum"], check: parity_balance },
        Criterion { id: 4, name: "edge case", tags: &["edge", "vacuum"], check: edge_case },
        Criterion { id: 5, name: "ordering chains", tags: &["ordering", "phase-space"], check: ordering_chains },
        Criterion { id: 6, name: "fidelity hurts", tags: &["fidelity"], check: fidelity_hurts },
        Criterion { id: 7, name: "lower bound", tags: &["bound", "parity"], check: lower_bound },
        Criterion { id: 8, name: "two-mode benchmark", tags: &["two-mode", "benchmark", "manifold"], check: two_mode_benchmark },
        Criterion { id: 9, name: "tropolone", tags: &["tropolone", "benchmark", "vibronic"], check: tropolone_benchmark },
        Criterion { id: 10, name: "sulfur dioxide", tags: &["so2", "benchmark", "vibronic", "displaced"], check: so2_benchmark },
        Criterion {
            id: 11,
            name: "formic acid",
            tags: &["formic", "benchmark", "vibronic", "multimode"],
            check: formic_benchmark,
        },
        Criterion { id: 12, name: "phase noise", tags: &["noise", "tropolone", "vibronic"], check: phase_noise },
        Criterion { id: 13, name: "displaced single mode", tags: &["displaced", "single-mode"], check: displaced_spot_values },
        Criterion {
            id: 14,
            name: "extended ansatz collapses",
            tags: &["ansatz", "minimizer", "thermal"],
            check: extended_ansatz,
        },
    ]
}

/// Criteria selected by an optional filter.
pub fn select(filter: Option<&str>) -> Vec<Criterion> {
    criteria().into_iter().filter(|c| filter.map_or(true, |f| c.matches(f))).collect()
}

/// Target squeezings of the single-mode grid.
pub fn grid_squeezings() -> Vec<f64> {
    (1..=11).map(|k| 0.2 * k as f64).collect()
}

/// Transmissivities of the single-mode grid.
pub fn grid_transmissivities() -> Vec<f64> {
    (2..=9).map(|k| 0.1 * k as f64).collect()
}

fn grid() -> Vec<(f64, f64)> {
    grid_squeezings().into_iter().flat_map(|x| grid_transmissivities().into_iter().map(move |e| (x, e))).collect()
}

fn single_mode_loss(eta: f64) -> LossModel {
    LossModel::input_loss(&GbsSpec::displaced_single_mode(0.0, 0.0, 0.0).unitary, &[eta]).expect("valid transmissivity")
}

fn squeezed(xi: f64) -> GbsSpec {
    GbsSpec::displaced_single_mode(xi, 0.0, 0.0)
}

const ORACLE_CASES: usize = 200;
const ORACLE_OUTCOMES: usize = 30;

fn oracle_equivalence(c: &mut Checker) -> Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let cases: Vec<(Complex64, Complex64, f64)> = (0..ORACLE_CASES)
        .map(|_| {
            let xi = Complex64::from_polar(rng.random_range(0.0..2.5), rng.random_range(0.0..TAU));
            let alpha = Complex64::from_polar(rng.random_range(0.0..1.2), rng.random_range(0.0..TAU));
            (xi, alpha, rng.random_range(0.1..=1.0))
        })
        .collect();
    let worst: Vec<f64> = cases
        .par_iter()
        .map(|&(xi, alpha, eta)| -> Result<f64> {
            let spec = GbsSpec::single_mode(xi, alpha);
            let loss = single_mode_loss(eta);
            let closed = pnd_lossy_displaced_squeezed(xi, alpha, eta, ORACLE_OUTCOMES)?;
            let engine = pnd_gaussian(&propagate(&spec, &loss)?, &PndOptions::fixed(ORACLE_OUTCOMES))?;
            let reference = oracle_pnd(&spec, &loss, ORACLE_OUTCOMES)?;
            Ok((0..=ORACLE_OUTCOMES)
                .map(|n| {
                    let (a, b, r) = (closed.get(&[n]), engine.get(&[n]), reference.get(&[n]));
                    (a - r).abs().max((b - r).abs()).max((a - b).abs())
                })
                .fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    for (k, w) in worst.iter().enumerate() {
        c.holds(format!("case {k}: deviation {w:.2e}"), *w <= 1e-9);
    }
    c.note(format!("worst deviation {:.2e}", worst.iter().copied().fold(0.0, f64::max)));
    Ok(())
}

fn vacuum_optimality(c: &mut Checker) -> Result<()> {
    let rows: Vec<(f64, f64, f64, f64)> = grid()
        .par_iter()
        .map(|&(xt, eta)| -> Result<(f64, f64, f64, f64)> {
            let eval = DeltaEvaluator::new(&squeezed(xt), &single_mode_loss(eta), PndOptions::default())?;
            let r = minimize_delta(&eval, Ansatz::SqVac, &SearchControls { budget: Some(400), ..SearchControls::default() })?;
            Ok((xt, eta, r.corrected.squeezing[0].norm(), analytic_corrections(xt, eta).vacuum))
        })
        .collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for (xt, eta, found, vac) in rows {
        worst = worst.max((found - vac).abs());
        c.holds(format!("({xt:.1}, {eta:.1}): minimizer {found:.5} vs {vac:.5}"), (found - vac).abs() < 1e-3);
    }
    c.note(format!("worst gap {worst:.2e}"));
    Ok(())
}

fn parity_balance(c: &mut Checker) -> Result<()> {
    for (xt, eta) in grid() {
        let eval = DeltaEvaluator::new(&squeezed(xt), &single_mode_loss(eta), PndOptions::default())?;
        let probe = eval.probe_pnd(&squeezed(analytic_corrections(xt, eta).vacuum))?;
        let split = parity_split(eval.target_pnd(), &probe)?;
        c.holds(
            format!("({xt:.1}, {eta:.1}): even {:.3e} odd {:.3e}", split.delta_even, split.delta_odd),
            (split.delta_even - split.delta_odd).abs() < 1e-6,
        );
        c.holds(format!("({xt:.1}, {eta:.1}): vacuum term {:.2e}", split.delta_vac), split.delta_vac < 1e-9);
    }
    Ok(())
}

fn edge_case(c: &mut Checker) -> Result<()> {
    let (xt, eta) = (2.38, 0.97);
    let eval = DeltaEvaluator::new(&squeezed(xt), &single_mode_loss(eta), PndOptions::default())?;
    let vac = analytic_corrections(xt, eta).vacuum;
    c.holds("classified as EDGE", classify_vacuum_optimality(vac, eta) == VacuumRegion::Edge);
    let r = minimize_delta(&eval, Ansatz::SqVac, &SearchControls { budget: Some(600), ..SearchControls::default() })?;
    c.near("ξ_min", r.corrected.squeezing[0].norm(), 2.317, 0.005);
    c.near("δ(ξ_vac)", eval.delta(&squeezed(vac))?.0, 0.2600, 0.0005);
    c.near("δ(ξ_min)", r.delta, 0.2598, 0.0005);
    Ok(())
}

fn ordering_chains(c: &mut Checker) -> Result<()> {
    for (xt, eta) in grid() {
        let ps = |k| phase_space_optimizer(k, xt, eta);
        let chain = [
            ps(MeasureKind::Was)?,
            ps(MeasureKind::KldUp)?,
            ps(MeasureKind::Bha)?,
            ps(MeasureKind::KldSym)?,
            ps(MeasureKind::KldPu)?,
        ];
        let a = analytic_corrections(xt, eta);
        let at = format!("({xt:.1}, {eta:.1})");
        c.holds(format!("{at}: phase-space chain {chain:?}"), chain.windows(2).all(|w| w[0] < w[1]));
        c.holds(format!("{at}: target below WAS"), xt < chain[0]);
        c.holds(format!("{at}: mean < variance < WAS"), a.mean < a.variance && a.variance < chain[0]);
    }
    Ok(())
}

fn fidelity_hurts(c: &mut Checker) -> Result<()> {
    for (xt, eta) in grid() {
        let eval = DeltaEvaluator::new(&squeezed(xt), &single_mode_loss(eta), PndOptions::default())?;
        let f = eval.delta(&squeezed(analytic_corrections(xt, eta).fidelity))?.0;
        let none = eval.delta(&squeezed(xt))?.0;
        c.holds(format!("({xt:.1}, {eta:.1}): δ_F {f:.5} vs δ_uncor {none:.5}"), f >= none);
    }
    Ok(())
}

fn tvd_single_mode(xt: f64, xi: f64, eta: f64) -> Result<f64> {
    let eval = DeltaEvaluator::new(&squeezed(xt), &single_mode_loss(eta), PndOptions::default())?;
    Ok(eval.delta(&squeezed(xi))?.0)
}

fn lower_bound(c: &mut Checker) -> Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let mut triples: Vec<(f64, f64, f64)> =
        (0..500).map(|_| (rng.random_range(0.0..2.5), rng.random_range(0.0..2.5), rng.random_range(0.1..=1.0))).collect();
    let lossless: Vec<(f64, f64, f64)> = (0..20).map(|_| (rng.random_range(0.0..2.5), rng.random_range(0.0..2.5), 1.0)).collect();
    let vacuum_target: Vec<(f64, f64, f64)> =
        (0..20).map(|_| (0.0, rng.random_range(0.0..2.5), rng.random_range(0.1..=1.0))).collect();
    let n_bound = triples.len();
    triples.extend(lossless.iter().chain(&vacuum_target));
    let deltas: Vec<f64> = triples.par_iter().map(|&(xt, xi, eta)| tvd_single_mode(xt, xi, eta)).collect::<Result<_>>()?;
    let mut worst_gap: f64 = 0.0;
    for (k, (&(xt, xi, eta), &d)) in triples.iter().zip(&deltas).enumerate() {
        let b = delta_lower_bound(xt, xi, eta);
        if k < n_bound {
            c.holds(format!("bound {b:.6} exceeds δ {d:.6} at ({xt:.3}, {xi:.3}, {eta:.3})"), b <= d + 1e-12);
        } else {
            worst_gap = worst_gap.max((d - b).abs());
            c.holds(format!("no equality at ({xt:.3}, {xi:.3}, {eta:.3}): δ {d:.6} bound {b:.6}"), (d - b).abs() < 1e-9);
        }
    }
    c.note(format!("largest equality gap {worst_gap:.3e}"));
    Ok(())
}

fn two_mode_benchmark(c: &mut Checker) -> Result<()> {
    let u = two_mode_unitary(0.8, 0.44);
    let spec = GbsSpec::new(vec![0.4.into(), 0.5.into()], vec![Complex64::new(0.0, 0.0); 2], u.clone())?;
    let loss = build_loss_model(&u, &[0.7, 0.6], None, &[0.5, 0.8])?;
    let m = Mitigator::new(&spec, &loss, PndOptions::default())?;
    let full = SearchControls { budget: Some(4000), vary_interferometer: true, ..SearchControls::default() };
    let cases = [
        ("uncorrected", Scheme::new(SchemeTag::None), 0.140),
        ("min", Scheme::delta_min(Ansatz::SqVac, 4000).with_search(full), 0.107),
        ("min over squeezing", Scheme::delta_min(Ansatz::SqVac, 600), 0.116),
        ("fixed ratio", Scheme::new(SchemeTag::VacFixedRatio), 0.120),
        ("loss weighted", Scheme::new(SchemeTag::VacLossWeighted), 0.120),
        ("fidelity", Scheme::new(SchemeTag::Fidelity), 0.165),
        ("WAS", Scheme::new(SchemeTag::PsWas), 0.199),
    ];
    for (label, scheme, expected) in cases {
        c.near(label, m.run(&scheme)?.delta, expected, 0.003);
    }
    let samples = vacuum_manifold_samples(m.evaluator(), 1000, 1)?;
    let deltas: Vec<f64> = samples.iter().map(|s| s.delta).collect();
    c.holds(format!("{} manifold samples", deltas.len()), deltas.len() >= 500);
    let stats = SampleStats::of(&deltas);
    c.holds(
        format!("manifold range [{:.4}, {:.4}] inside [0.104, 0.142]", stats.min, stats.max),
        stats.min >= 0.104 && stats.max <= 0.142,
    );
    c.near("manifold mean", stats.mean, 0.117, 0.004);
    c.near("manifold std", stats.std, 0.002, 0.001);
    Ok(())
}

fn tropolone_loss() -> Result<LossModel> {
    LossModel::uniform(&tropolone().spec.unitary, 0.7)
}

fn tropolone_benchmark(c: &mut Checker) -> Result<()> {
    let f = tropolone();
    let m = Mitigator::new(&f.spec, &tropolone_loss()?, PndOptions::default())?;
    let cases = [
        ("uncorrected", Scheme::new(SchemeTag::None), 0.158),
        ("vacuum", Scheme::new(SchemeTag::VacFixedRatio), 0.139),
        ("min over squeezing", Scheme::delta_min(Ansatz::SqVac, 600), 0.137),
        ("fidelity", Scheme::new(SchemeTag::Fidelity), 0.199),
        ("WAS", Scheme::new(SchemeTag::PsWas), 0.199),
    ];
    for (label, scheme, expected) in cases {
        c.near(label, m.run(&scheme)?.delta, expected, 0.003);
    }
    Ok(())
}

fn so2_benchmark(c: &mut Checker) -> Result<()> {
    let f = sulfur_dioxide();
    let loss = LossModel::uniform(&f.spec.unitary, 0.7)?;
    let m = Mitigator::new(&f.spec, &loss, PndOptions::default())?;
    let cases = [
        ("uncorrected", Scheme::new(SchemeTag::None), 0.305),
        ("DC", Scheme::new(SchemeTag::Dc), 0.027),
        ("vacuum plus DC", Scheme::new(SchemeTag::VacPlusDc), 0.0076),
        ("WAS", Scheme::new(SchemeTag::PsWas), 0.0058),
        ("fidelity", Scheme::new(SchemeTag::Fidelity), 0.037),
        ("min", Scheme::delta_min(Ansatz::DisplacedSq, 20000), 0.0039),
    ];
    for (label, scheme, expected) in cases {
        let tol = if expected < 0.01 { 0.0008 } else { 0.002 };
        c.near(label, m.run(&scheme)?.delta, expected, tol);
    }
    Ok(())
}

/// Uniform transmissivity ranges of the seven-mode benchmark.
pub const FORMIC_ACID_RANGES: EtaRanges = EtaRanges { pre: (0.5, 0.6), internal: (0.8, 0.85), post: (0.7, 0.8) };

/// Total-photon cutoff used for the seven-mode benchmark.
pub const FORMIC_ACID_CUTOFF: usize = 14;

fn formic_benchmark(c: &mut Checker) -> Result<()> {
    let f = formic_acid(None)?;
    let opts = PndOptions::fixed(FORMIC_ACID_CUTOFF);
    let mut ratios = Vec::new();
    for seed in 0..20u64 {
        let loss = LossModel::sampled(&f.spec.unitary, FORMIC_ACID_RANGES, seed)?;
        let eff = effective_transmissivity(&loss);
        c.holds(format!("seed {seed}: effective transmissivities {eff:.3?}"), eff.iter().all(|e| (0.08..=0.35).contains(e)));
        let m = Mitigator::new(&f.spec, &loss, opts)?;
        let none = m.run(&Scheme::new(SchemeTag::None))?.delta;
        let fixed = m.run(&Scheme::new(SchemeTag::VacPlusDc))?.delta;
        c.holds(format!("seed {seed}: δ_uncor {none:.4}"), none > 0.4);
        c.holds(format!("seed {seed}: δ_vac+DC {fixed:.4} vs δ_uncor {none:.4}"), fixed < 0.5 * none);
        ratios.push(fixed / none);
    }
    c.note(format!("largest corrected ratio {:.3}", ratios.iter().copied().fold(0.0, f64::max)));
    Ok(())
}

/// Phase-noise levels of the tropolone study.
pub const PHASE_NOISE_LEVELS: [f64; 5] = [0.0, 0.5, 1.0, 1.5, 2.0];

fn phase_noise(c: &mut Checker) -> Result<()> {
    let levels = phase_noise_study(&tropolone(), &tropolone_loss()?, &PHASE_NOISE_LEVELS, 1000, 11, PndOptions::default())?;
    for l in &levels {
        c.holds(
            format!("σ {}: corrected {:.4} vs uncorrected {:.4}", l.sigma, l.corrected.mean, l.uncorrected.mean),
            l.corrected.mean < l.uncorrected.mean,
        );
    }
    c.near("σ 0 uncorrected", levels[0].uncorrected.mean, 0.158, 0.003);
    c.near("σ 0 corrected", levels[0].corrected.mean, 0.139, 0.003);
    let stds: Vec<f64> = levels.iter().map(|l| l.corrected.std).collect();
    c.holds(format!("corrected spread {stds:.4?} increases"), stds.windows(2).all(|w| w[0] < w[1]));
    c.note(format!("corrected std {:.4?}", stds));
    Ok(())
}

fn displaced_spot_values(c: &mut Checker) -> Result<()> {
    let loss = single_mode_loss(0.5);
    for (phase, dc, mean) in [(0.0, 0.186, 0.183), (FRAC_PI_2, 0.203, 0.210)] {
        let m = Mitigator::new(&GbsSpec::displaced_single_mode(1.0, 0.1, phase), &loss, PndOptions::default())?;
        let tag = if phase == 0.0 { "φ 0" } else { "φ π/2" };
        c.near(&format!("{tag} DC"), m.run(&Scheme::new(SchemeTag::Dc))?.delta, dc, 0.002);
        c.near(&format!("{tag} mean plus DC"), m.run(&Scheme::new(SchemeTag::MeanPlusDc))?.delta, mean, 0.002);
    }
    Ok(())
}

fn extended_ansatz(c: &mut Checker) -> Result<()> {
    let rows: Vec<(f64, f64, f64, f64)> = grid()
        .par_iter()
        .map(|&(xt, eta)| -> Result<(f64, f64, f64, f64)> {
            let eval = DeltaEvaluator::new(&squeezed(xt), &single_mode_loss(eta), PndOptions::default())?;
            let controls = SearchControls { budget: Some(1500), ..SearchControls::default() };
            let r = minimize_delta(&eval, Ansatz::DisplacedSqThermal, &controls)?;
            Ok((xt, eta, r.corrected.thermal_occupation(0), r.corrected.displacement[0].norm()))
        })
        .collect::<Result<_>>()?;
    let (mut mu_max, mut a_max): (f64, f64) = (0.0, 0.0);
    for (xt, eta, mu, a) in rows {
        mu_max = mu_max.max(mu);
        a_max = a_max.max(a);
        c.holds(format!("({xt:.1}, {eta:.1}): thermal {mu:.2e}, displacement {a:.2e}"), mu <= 1e-4 && a <= 1e-4);
    }
    c.note(format!("largest thermal {mu_max:.2e}, largest displacement {a_max:.2e}"));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filters_select_by_number_tag_and_name() {
        assert_eq!(select(None).len(), 14);
        let ids: Vec<u32> = select(Some("parity")).iter().map(|c| c.id).collect();
        assert_eq!(ids, vec![3, 7]);
        assert_eq!(select(Some("12")).len(), 1);
        assert_eq!(select(Some("Tropolone")).iter().map(|c| c.id).collect::<Vec<_>>(), vec![9, 12]);
        assert!(select(Some("nothing-here")).is_empty());
    }

    #[test]
    fn checker_reports_failures() {
        let mut c = Checker::default();
        c.near("a", 1.0, 1.0, 0.1);
        c.near("b", 2.0, 1.0, 0.1);
        assert_eq!(c.failures.len(), 1);
        assert!(c.summary().starts_with("1/2 checks failed"));
    }

    #[test]
    fn grid_covers_the_published_ranges() {
        let g = grid();
        assert_eq!(g.len(), 88);
        assert!((g[0].0 - 0.2).abs() < 1e-12 && (g[0].1 - 0.2).abs() < 1e-12);
        assert!((g[87].0 - 2.2).abs() < 1e-12 && (g[87].1 - 0.9).abs() < 1e-12);
    }
}
