//! Single-mode parameter sweeps behind the loss and mitigation studies.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Cell, Table};
use crate::error::{Error, Result};
use crate::gaussian::{prepare_target, propagate, GbsSpec};
use crate::loss::LossModel;
use crate::measures::MeasureKind;
use crate::mitigation::{
    analytic_corrections, classify_vacuum_optimality, minimize_delta, monotonicity_polynomial, phase_space_optimizer, Ansatz,
    DeltaEvaluator, SearchControls, VacuumRegion,
};
use crate::moments::photon_moments;
use crate::pnd::{pnd_gaussian, PndOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Study {
    /// Lossy-to-target probability ratios per photon number.
    Fig2Ratios,
    /// Certified and edge regions of the vacuum correction.
    Fig3Regions,
    /// Distance of every single-mode scheme against target squeezing.
    Fig4DeltaVsXi,
    /// Which probabilities and moments the distance minimizer matches.
    Fig5Dotgrid,
    /// Distance landscape over probe parameters with probability-matching belts.
    Fig6Bands,
}

impl Study {
    pub const ALL: [Study; 5] =
        [Study::Fig2Ratios, Study::Fig3Regions, Study::Fig4DeltaVsXi, Study::Fig5Dotgrid, Study::Fig6Bands];

    pub fn name(self) -> &'static str {
        match self {
            Study::Fig2Ratios => "FIG2_RATIOS",
            Study::Fig3Regions => "FIG3_REGIONS",
            Study::Fig4DeltaVsXi => "FIG4_DELTA_VS_XI",
            Study::Fig5Dotgrid => "FIG5_DOTGRID",
            Study::Fig6Bands => "FIG6_BANDS",
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Study::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown study {s:?}")))
    }
}

/// Sweep settings; unset fields take study-specific defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    pub etas: Option<Vec<f64>>,
    /// Target squeezing grid, or probe squeezing grid for the landscape study.
    pub xi: Option<Vec<f64>>,
    /// Displacement magnitude grid.
    pub alpha: Option<Vec<f64>>,
    /// Relative phase between displacement and squeezing.
    pub phase: Option<f64>,
    pub target_xi: Option<f64>,
    pub target_alpha: Option<f64>,
    /// Largest photon number reported or compared.
    pub max_photons: Option<usize>,
    /// Evaluation budget per minimization.
    pub budget: Option<usize>,
    /// Relative tolerance for probability matching.
    pub tolerance: Option<f64>,
}

/// Evenly spaced points including both ends.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone)]
struct Resolved {
    etas: Vec<f64>,
    xi: Vec<f64>,
    alpha: Vec<f64>,
    phase: f64,
    target_xi: f64,
    target_alpha: f64,
    max_photons: usize,
    budget: usize,
    tolerance: f64,
}

impl SweepParams {
    fn resolve(&self, study: Study) -> Result<Resolved> {
        let (etas, xi, alpha, tx, ta, budget) = match study {
            Study::Fig2Ratios => (vec![0.9, 0.7, 0.5, 0.3], vec![], vec![], 0.9, 0.25, 0),
            Study::Fig3Regions => (linspace(0.5, 0.995, 100), linspace(0.0, 4.0, 81), vec![], 0.0, 0.0, 0),
            Study::Fig4DeltaVsXi => (vec![0.5], linspace(0.1, 3.0, 30), vec![], 0.0, 0.0, 300),
            Study::Fig5Dotgrid => (vec![0.5], linspace(0.0, 1.5, 7), linspace(0.0, 1.5, 7), 0.0, 0.0, 1500),
            Study::Fig6Bands => (vec![0.5], linspace(0.0, 0.6, 41), linspace(0.0, 0.8, 41), 0.15, 0.31, 0),
        };
        let r = Resolved {
            etas: self.etas.clone().unwrap_or(etas),
            xi: self.xi.clone().unwrap_or(xi),
            alpha: self.alpha.clone().unwrap_or(alpha),
            phase: self.phase.unwrap_or(0.0),
            target_xi: self.target_xi.unwrap_or(tx),
            target_alpha: self.target_alpha.unwrap_or(ta),
            max_photons: self.max_photons.unwrap_or(if study == Study::Fig2Ratios { 10 } else { 4 }),
            budget: self.budget.unwrap_or(budget),
            tolerance: self.tolerance.unwrap_or(0.005),
        };
        if r.etas.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return Err(Error::InvalidArgument("sweep transmissivities must lie in (0, 1]".into()));
        }
        if r.xi.iter().chain(&r.alpha).any(|v| !(*v >= 0.0)) || !(r.target_xi >= 0.0 && r.target_alpha >= 0.0) {
            return Err(Error::InvalidArgument("sweep magnitudes must be nonnegative".into()));
        }
        if !(r.tolerance > 0.0) {
            return Err(Error::InvalidArgument("matching tolerance must be positive".into()));
        }
        Ok(r)
    }
}

fn pure_loss(eta: f64) -> LossModel {
    let spec = GbsSpec::displaced_single_mode(0.0, 0.0, 0.0);
    LossModel::input_loss(&spec.unitary, &[eta]).expect("transmissivity checked")
}

fn matches(target: f64, probe: f64, tol: f64) -> bool {
    target > 0.0 && (probe - target).abs() <= tol * target
}

/// Runs one study and returns its long-format table.
pub fn sweep_single_mode(study: Study, params: &SweepParams, opts: PndOptions) -> Result<Table> {
    let p = params.resolve(study)?;
    match study {
        Study::Fig2Ratios => ratios(&p, opts),
        Study::Fig3Regions => Ok(regions(&p)),
        Study::Fig4DeltaVsXi => delta_vs_xi(&p, opts),
        Study::Fig5Dotgrid => dot_grid(&p, opts),
        Study::Fig6Bands => bands(&p, opts),
    }
}

fn ratios(p: &Resolved, opts: PndOptions) -> Result<Table> {
    let spec = GbsSpec::displaced_single_mode(p.target_xi, p.target_alpha, p.phase);
    let target = pnd_gaussian(&prepare_target(&spec)?, &opts)?;
    let mut t = Table::new(Study::Fig2Ratios.name(), &["eta", "m", "target", "lossy", "ratio"]);
    for &eta in &p.etas {
        let lossy = pnd_gaussian(&propagate(&spec, &pure_loss(eta))?, &opts)?;
        for m in 0..=p.max_photons {
            let (a, b) = (target.get(&[m]), lossy.get(&[m]));
            let ratio = if a > 0.0 { b / a } else { f64::NAN };
            t.push(vec![eta.into(), m.into(), a.into(), b.into(), ratio.into()]);
        }
    }
    Ok(t)
}

fn regions(p: &Resolved) -> Table {
    let mut t = Table::new(Study::Fig3Regions.name(), &["xi_vac", "eta", "xi_tilde", "region", "polynomial"]);
    for &eta in &p.etas {
        for &xv in &p.xi {
            let xt = (xv.sinh() * (eta * (2.0 - eta)).sqrt()).asinh();
            let region = match classify_vacuum_optimality(xv, eta) {
                VacuumRegion::ProvenOptimal => "PROVEN_OPTIMAL",
                VacuumRegion::Edge => "EDGE",
            };
            let poly = monotonicity_polynomial(eta, xv.sinh().powi(2));
            t.push(vec![xv.into(), eta.into(), xt.into(), region.into(), poly.into()]);
        }
    }
    t
}

const FIG4_KINDS: [MeasureKind; 5] =
    [MeasureKind::Was, MeasureKind::KldUp, MeasureKind::Bha, MeasureKind::KldSym, MeasureKind::KldPu];

fn delta_vs_xi(p: &Resolved, opts: PndOptions) -> Result<Table> {
    let points: Vec<(f64, f64)> = p.etas.iter().flat_map(|&e| p.xi.iter().map(move |&x| (e, x))).collect();
    let blocks: Vec<Vec<Vec<Cell>>> = points
        .par_iter()
        .map(|&(eta, xt)| -> Result<Vec<Vec<Cell>>> {
            let spec = GbsSpec::displaced_single_mode(xt, 0.0, 0.0);
            let eval = DeltaEvaluator::new(&spec, &pure_loss(eta), opts)?;
            let c = analytic_corrections(xt, eta);
            let mut cands: Vec<(String, f64)> = vec![
                ("NONE".into(), xt),
                ("FIDELITY".into(), c.fidelity),
                ("MEAN".into(), c.mean),
                ("VARIANCE".into(), c.variance),
                ("VAC".into(), c.vacuum),
            ];
            if xt > 0.0 && eta < 1.0 {
                for k in FIG4_KINDS {
                    cands.push((format!("PS_{}", k.name()), phase_space_optimizer(k, xt, eta)?));
                }
            }
            let mut rows = Vec::with_capacity(cands.len() + 1);
            for (name, xi) in cands {
                let (d, _) = eval.delta(&GbsSpec::displaced_single_mode(xi, 0.0, 0.0))?;
                rows.push(vec![eta.into(), xt.into(), name.into(), xi.into(), d.into()]);
            }
            if p.budget > 0 {
                let controls = SearchControls { budget: Some(p.budget), ..SearchControls::default() };
                let r = minimize_delta(&eval, Ansatz::SqVac, &controls)?;
                rows.push(vec![eta.into(), xt.into(), "MIN".into(), r.corrected.squeezing[0].norm().into(), r.delta.into()]);
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(Study::Fig4DeltaVsXi.name(), &["eta", "xi_tilde", "scheme", "xi", "delta"]);
    blocks.into_iter().flatten().for_each(|r| t.push(r));
    Ok(t)
}

fn moments_of(spec: &GbsSpec, loss: &LossModel) -> Result<(f64, f64)> {
    let (n, c) = photon_moments(&propagate(spec, loss)?);
    Ok((n[0], c[(0, 0)]))
}

fn dot_grid(p: &Resolved, opts: PndOptions) -> Result<Table> {
    let eta = *p.etas.first().ok_or_else(|| Error::InvalidArgument("dot grid needs a transmissivity".into()))?;
    let loss = pure_loss(eta);
    let points: Vec<(f64, f64)> = p.xi.iter().flat_map(|&x| p.alpha.iter().map(move |&a| (x, a))).collect();
    let mut cols: Vec<String> = ["eta", "xi_tilde", "alpha_tilde", "xi_min", "alpha_min", "phase_min", "delta_min"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((0..=p.max_photons).map(|m| format!("match_{m}")));
    cols.extend(["all_match", "mean_match", "variance_match"].map(String::from));
    let rows: Vec<Vec<Cell>> = points
        .par_iter()
        .map(|&(xt, at)| -> Result<Vec<Cell>> {
            let spec = GbsSpec::displaced_single_mode(xt, at, p.phase);
            let eval = DeltaEvaluator::new(&spec, &loss, opts)?;
            let controls = SearchControls { budget: Some(p.budget.max(10)), ..SearchControls::default() };
            let ansatz = if at > 0.0 { Ansatz::DisplacedSq } else { Ansatz::SqVac };
            let r = minimize_delta(&eval, ansatz, &controls)?;
            let probe = eval.probe_pnd(&r.corrected)?;
            let target = eval.target_pnd();
            let flags: Vec<bool> = (0..=p.max_photons).map(|m| matches(target.get(&[m]), probe.get(&[m]), p.tolerance)).collect();
            let (n0, v0) = moments_of(&spec, &LossModel::lossless(1))?;
            let (n1, v1) = moments_of(&r.corrected, &loss)?;
            let a = r.corrected.displacement[0];
            let mut row: Vec<Cell> = vec![
                eta.into(),
                xt.into(),
                at.into(),
                r.corrected.squeezing[0].norm().into(),
                a.norm().into(),
                (2.0 * a.arg()).rem_euclid(std::f64::consts::TAU).into(),
                r.delta.into(),
            ];
            row.extend(flags.iter().map(|&f| Cell::from(f)));
            row.push(flags.iter().all(|&f| f).into());
            row.push(matches(n0, n1, p.tolerance).into());
            row.push(matches(v0, v1, p.tolerance).into());
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let names: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new(Study::Fig5Dotgrid.name(), &names);
    rows.into_iter().for_each(|r| t.push(r));
    Ok(t)
}

fn bands(p: &Resolved, opts: PndOptions) -> Result<Table> {
    let eta = *p.etas.first().ok_or_else(|| Error::InvalidArgument("landscape needs a transmissivity".into()))?;
    let loss = pure_loss(eta);
    let spec = GbsSpec::displaced_single_mode(p.target_xi, p.target_alpha, p.phase);
    let eval = DeltaEvaluator::new(&spec, &loss, opts)?;
    let target = eval.target_pnd().clone();
    let points: Vec<(f64, f64)> = p.xi.iter().flat_map(|&x| p.alpha.iter().map(move |&a| (x, a))).collect();
    let evaluated: Vec<(f64, Vec<bool>)> = points
        .par_iter()
        .map(|&(x, a)| -> Result<(f64, Vec<bool>)> {
            let probe = GbsSpec::single_mode(Complex64::new(x, 0.0), Complex64::from_polar(a, 0.5 * p.phase));
            let pnd = eval.probe_pnd(&probe)?;
            let (d, _) = eval.delta(&probe)?;
            let flags = (0..=p.max_photons).map(|m| matches(target.get(&[m]), pnd.get(&[m]), p.tolerance)).collect();
            Ok((d, flags))
        })
        .collect::<Result<_>>()?;
    let best = (0..evaluated.len()).min_by(|&i, &j| evaluated[i].0.total_cmp(&evaluated[j].0));
    let mut cols: Vec<String> = ["eta", "xi", "alpha", "delta"].iter().map(|s| s.to_string()).collect();
    cols.extend((0..=p.max_photons).map(|m| format!("match_{m}")));
    cols.push("is_argmin".into());
    let names: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new(Study::Fig6Bands.name(), &names);
    for (i, ((x, a), (d, flags))) in points.iter().zip(evaluated).enumerate() {
        let mut row: Vec<Cell> = vec![eta.into(), (*x).into(), (*a).into(), d.into()];
        row.extend(flags.into_iter().map(Cell::from));
        row.push((Some(i) == best).into());
        t.push(row);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column_where<'a>(t: &'a Table, key: &str, value: &str) -> impl Iterator<Item = &'a Vec<Cell>> + 'a {
        let k = t.column(key).unwrap();
        let value = value.to_string();
        t.rows.iter().filter(move |r| r[k].as_str() == Some(value.as_str()))
    }

    #[test]
    fn study_names_round_trip() {
        for s in Study::ALL {
            assert_eq!(s.name().parse::<Study>().unwrap(), s);
        }
        assert!("FIG9".parse::<Study>().is_err());
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn vacuum_ratio_exceeds_one_under_loss() {
        let t = sweep_single_mode(Study::Fig2Ratios, &SweepParams::default(), PndOptions::default()).unwrap();
        let (e, m, r) = (t.column("eta").unwrap(), t.column("m").unwrap(), t.column("ratio").unwrap());
        for row in &t.rows {
            if row[m].as_f64() == Some(0.0) && row[e].as_f64().unwrap() < 1.0 {
                assert!(row[r].as_f64().unwrap() > 1.0);
            }
        }
    }

    #[test]
    fn region_grid_has_both_boundaries() {
        let t = sweep_single_mode(Study::Fig3Regions, &SweepParams::default(), PndOptions::default()).unwrap();
        let (x, e) = (t.column("xi_vac").unwrap(), t.column("eta").unwrap());
        let edges: Vec<&Vec<Cell>> = column_where(&t, "region", "EDGE").collect();
        assert!(!edges.is_empty());
        for row in edges {
            assert!(row[x].as_f64().unwrap() >= 2.290047);
            assert!(row[e].as_f64().unwrap() >= 14.0 / 15.0);
        }
    }

    #[test]
    fn vacuum_curve_is_lowest() {
        let params = SweepParams { xi: Some(linspace(0.25, 3.0, 12)), budget: Some(0), ..SweepParams::default() };
        let t = sweep_single_mode(Study::Fig4DeltaVsXi, &params, PndOptions::default()).unwrap();
        let (xt, d) = (t.column("xi_tilde").unwrap(), t.column("delta").unwrap());
        let s = t.column("scheme").unwrap();
        for x in linspace(0.25, 3.0, 12) {
            let rows: Vec<&Vec<Cell>> = t.rows.iter().filter(|r| r[xt].as_f64() == Some(x)).collect();
            let vac = rows.iter().find(|r| r[s].as_str() == Some("VAC")).unwrap()[d].as_f64().unwrap();
            for r in &rows {
                if r[s].as_str() != Some("VAC") {
                    assert!(vac < r[d].as_f64().unwrap(), "{x} {}", r[s]);
                }
            }
        }
    }

    #[test]
    fn landscape_marks_one_argmin() {
        let params =
            SweepParams { xi: Some(linspace(0.0, 0.6, 7)), alpha: Some(linspace(0.0, 0.8, 9)), ..SweepParams::default() };
        let t = sweep_single_mode(Study::Fig6Bands, &params, PndOptions::default()).unwrap();
        assert_eq!(t.rows.len(), 63);
        let flags = t.numbers("is_argmin").unwrap();
        assert_eq!(flags.iter().filter(|&&f| f == 1.0).count(), 1);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let bad = SweepParams { etas: Some(vec![1.5]), ..SweepParams::default() };
        assert!(sweep_single_mode(Study::Fig2Ratios, &bad, PndOptions::default()).is_err());
    }
}
