use gaussloss::gaussian::{prepare_target, propagate, two_mode_unitary, GbsSpec};
use gaussloss::loss::{build_loss_model, LossModel};
use gaussloss::mitigation::{minimize_delta, vacuum_manifold_samples, Ansatz, DeltaEvaluator, Scheme, SchemeTag, SearchControls};
use gaussloss::moments::vacuum_probability;
use gaussloss::sweeps::{linspace, sweep_single_mode, Study, SweepParams};
use gaussloss::vibronic::{run_benchmark, tropolone, MoleculeFixture};
use gaussloss::PndOptions;
use num_complex::Complex64;

fn two_mode_example() -> (GbsSpec, LossModel) {
    let u = two_mode_unitary(0.8, 0.44);
    let spec = GbsSpec::new(vec![0.4.into(), 0.5.into()], vec![Complex64::new(0.0, 0.0); 2], u.clone()).unwrap();
    let loss = build_loss_model(&u, &[0.7, 0.6], None, &[0.5, 0.8]).unwrap();
    (spec, loss)
}

#[test]
fn small_displacement_is_dropped_by_the_minimizer() {
    let spec = GbsSpec::displaced_single_mode(0.4, 0.2, 0.0);
    let loss = LossModel::input_loss(&spec.unitary, &[0.5]).unwrap();
    let eval = DeltaEvaluator::new(&spec, &loss, PndOptions::default()).unwrap();
    let r =
        minimize_delta(&eval, Ansatz::DisplacedSq, &SearchControls { budget: Some(1500), ..SearchControls::default() }).unwrap();
    assert!(r.corrected.displacement[0].norm() < 1e-3, "{:?}", r.corrected.displacement);
}

#[test]
fn manifold_samples_match_the_vacuum_and_repeat_per_seed() {
    let (spec, loss) = two_mode_example();
    let eval = DeltaEvaluator::new(&spec, &loss, PndOptions::default()).unwrap();
    let a = vacuum_manifold_samples(&eval, 40, 3).unwrap();
    assert_eq!(a, vacuum_manifold_samples(&eval, 40, 3).unwrap());
    let target = vacuum_probability(&prepare_target(&spec).unwrap()).unwrap();
    for s in &a {
        let mut probe = spec.clone();
        probe.squeezing = s.squeezing.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        probe.unitary = two_mode_unitary(s.theta, s.gamma);
        let p0 = vacuum_probability(&propagate(&probe, &loss).unwrap()).unwrap();
        assert!((p0 - target).abs() < 1e-9);
    }
}

#[test]
fn benchmark_spectra_conserve_probability() {
    let mut f: MoleculeFixture = tropolone();
    f.frequencies = Some(vec![1000.0, 1500.0]);
    let loss = LossModel::uniform(&f.spec.unitary, 0.7).unwrap();
    let schemes = [Scheme::new(SchemeTag::None), Scheme::new(SchemeTag::VacFixedRatio)];
    let report = run_benchmark(&f, &loss, &schemes, PndOptions::default()).unwrap();
    let target = report.target_spectrum.as_ref().unwrap();
    assert!((target.total() - 1.0).abs() < 1e-9);
    for row in &report.rows {
        assert!((row.spectrum.as_ref().unwrap().total() - 1.0).abs() < 1e-9);
    }
    assert!(report.delta("VAC_FIXED_RATIO").unwrap() < report.delta("NONE").unwrap());
}

#[test]
fn dot_grid_flags_are_consistent() {
    let params =
        SweepParams { xi: Some(vec![0.3, 0.8]), alpha: Some(vec![0.0, 0.4]), budget: Some(400), ..SweepParams::default() };
    let t = sweep_single_mode(Study::Fig5Dotgrid, &params, PndOptions::default()).unwrap();
    assert_eq!(t.rows.len(), 4);
    let all = t.numbers("all_match").unwrap();
    let singles: Vec<Vec<f64>> = (0..=4).map(|m| t.numbers(&format!("match_{m}")).unwrap()).collect();
    for (k, &flag) in all.iter().enumerate() {
        assert_eq!(flag == 1.0, singles.iter().all(|col| col[k] == 1.0));
    }
    for d in t.numbers("delta_min").unwrap() {
        assert!((0.0..1.0).contains(&d));
    }
}

#[test]
fn ratio_sweep_csv_keeps_twelve_digits() {
    let params = SweepParams { etas: Some(linspace(0.5, 0.9, 2)), max_photons: Some(3), ..SweepParams::default() };
    let t = sweep_single_mode(Study::Fig2Ratios, &params, PndOptions::default()).unwrap();
    let csv = t.to_csv();
    assert!(csv.starts_with("eta,m,target,lossy,ratio\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
    let digits = csv.lines().nth(1).unwrap().split(',').nth(2).unwrap().trim_start_matches("0.").trim_end_matches('0').len();
    assert!(digits <= 12);
}
