use gaussloss::gaussian::{prepare_target, propagate, two_mode_unitary, GbsSpec};
use gaussloss::loss::{build_loss_model, decompose_interferometer, effective_transmissivity, LossModel};
use gaussloss::measures::{fidelity, MeasureKind};
use gaussloss::mitigation::{analytic_corrections, phase_space_optimizer, vacuum_correction, DeltaEvaluator, VacuumStrategy};
use gaussloss::moments::vacuum_probability;
use gaussloss::oracle::oracle_pnd;
use gaussloss::pnd::{delta_lower_bound, parity_split, pnd_gaussian, total_variation, PndOptions};
use gaussloss::vibronic::placeholder_orthogonal;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn single_mode_loss(eta: f64) -> LossModel {
    LossModel::input_loss(&DMatrix::identity(1, 1), &[eta]).unwrap()
}

fn phased_orthogonal(m: usize, seed: u64, phases: &[f64]) -> DMatrix<Complex64> {
    let o = placeholder_orthogonal(m, seed);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(m, phases.iter().map(|&p| Complex64::from_polar(1.0, p))));
    o * d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distributions_are_normalized(xi in 0.0..1.5f64, a in 0.0..1.0f64, phase in 0.0..6.28f64, eta in 0.05..1.0f64) {
        let spec = GbsSpec::single_mode(Complex64::from_polar(xi, phase), c(a, 0.0));
        let p = pnd_gaussian(&propagate(&spec, &single_mode_loss(eta)).unwrap(), &PndOptions::default()).unwrap();
        prop_assert!(p.probs().iter().all(|&v| v >= -1e-15));
        prop_assert!((p.total() + p.tail_bound() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sequential_losses_multiply(e1 in 0.0..1.0f64, e2 in 0.0..1.0f64, xi in 0.0..1.0f64) {
        let u = DMatrix::identity(1, 1);
        let split = build_loss_model(&u, &[e1], None, &[e2]).unwrap();
        let joint = LossModel::input_loss(&u, &[e1 * e2]).unwrap();
        prop_assert!((effective_transmissivity(&split)[0] - e1 * e2).abs() < 1e-12);
        let spec = GbsSpec::single_mode(c(xi, 0.0), c(0.3, 0.1));
        let (a, b) = (propagate(&spec, &split).unwrap(), propagate(&spec, &joint).unwrap());
        prop_assert!((a.cov() - b.cov()).amax() < 1e-12);
        prop_assert!((a.mean() - b.mean()).amax() < 1e-12);
    }

    #[test]
    fn lossless_models_reproduce_the_target(seed in 0u64..1000, p in prop::collection::vec(0.0..6.28f64, 3)) {
        let u = phased_orthogonal(3, seed, &p);
        let spec = GbsSpec::new(vec![c(0.3, 0.0), c(0.2, 0.1), c(0.1, 0.0)], vec![c(0.2, 0.0); 3], u.clone()).unwrap();
        let loss = build_loss_model(&u, &[1.0; 3], Some(&vec![vec![1.0; 3]; 3]), &[1.0; 3]).unwrap();
        let (a, b) = (prepare_target(&spec).unwrap(), propagate(&spec, &loss).unwrap());
        prop_assert!((a.cov() - b.cov()).amax() < 1e-10);
        prop_assert!((a.mean() - b.mean()).amax() < 1e-10);
    }

    #[test]
    fn decompositions_recompose(seed in 0u64..1000, p in prop::collection::vec(0.0..6.28f64, 5)) {
        let u = phased_orthogonal(5, seed, &p);
        let dec = decompose_interferometer(&u).unwrap();
        prop_assert!((dec.recompose() - &u).map(|z| z.norm()).max() < 1e-8);
    }

    #[test]
    fn vacuum_scale_matches_the_closed_form(xt in 0.05..2.5f64, eta in 0.1..0.99f64) {
        let spec = GbsSpec::single_mode(c(xt, 0.0), c(0.0, 0.0));
        let loss = single_mode_loss(eta);
        let corr = vacuum_correction(&spec, &loss, VacuumStrategy::FixedRatio).unwrap();
        prop_assert!((corr.spec.squeezing[0].norm() - analytic_corrections(xt, eta).vacuum).abs() < 1e-8);
        let target = vacuum_probability(&prepare_target(&spec).unwrap()).unwrap();
        let lossy = vacuum_probability(&propagate(&corr.spec, &loss).unwrap()).unwrap();
        prop_assert!((target - lossy).abs() < 1e-10);
    }

    #[test]
    fn parity_halves_balance_at_vacuum_match(xt in 0.1..2.2f64, eta in 0.2..0.9f64) {
        let target = GbsSpec::single_mode(c(xt, 0.0), c(0.0, 0.0));
        let eval = DeltaEvaluator::new(&target, &single_mode_loss(eta), PndOptions::default()).unwrap();
        let probe = eval.probe_pnd(&GbsSpec::single_mode(c(analytic_corrections(xt, eta).vacuum, 0.0), c(0.0, 0.0))).unwrap();
        let split = parity_split(eval.target_pnd(), &probe).unwrap();
        prop_assert!((split.delta_even - split.delta_odd).abs() < 1e-6);
    }

    #[test]
    fn ordering_chains_hold(xt in 0.1..2.5f64, eta in 0.1..0.95f64) {
        let roots: Vec<f64> = [MeasureKind::Was, MeasureKind::KldUp, MeasureKind::Bha, MeasureKind::KldSym, MeasureKind::KldPu]
            .into_iter()
            .map(|k| phase_space_optimizer(k, xt, eta).unwrap())
            .collect();
        prop_assert!(roots.windows(2).all(|w| w[0] < w[1]), "{:?}", roots);
        let a = analytic_corrections(xt, eta);
        prop_assert!(xt < roots[0] && a.mean < a.variance && a.variance < roots[0]);
        prop_assert!(a.fidelity < xt && xt < a.vacuum && a.vacuum < a.mean);
    }

    #[test]
    fn lower_bound_never_exceeds_the_distance(xt in 0.0..2.5f64, xi in 0.0..2.5f64, eta in 0.1..1.0f64) {
        let target = GbsSpec::single_mode(c(xt, 0.0), c(0.0, 0.0));
        let eval = DeltaEvaluator::new(&target, &single_mode_loss(eta), PndOptions::default()).unwrap();
        let d = eval.delta(&GbsSpec::single_mode(c(xi, 0.0), c(0.0, 0.0))).unwrap().0;
        prop_assert!(delta_lower_bound(xt, xi, eta) <= d + 1e-12);
    }

    #[test]
    fn total_variation_is_a_metric(x in 0.0..1.5f64, y in 0.0..1.5f64, z in 0.0..1.5f64, eta in 0.2..1.0f64) {
        let p = |xi: f64| pnd_gaussian(&propagate(&GbsSpec::single_mode(c(xi, 0.0), c(0.2, 0.0)), &single_mode_loss(eta)).unwrap(), &PndOptions::default()).unwrap();
        let (a, b, cc) = (p(x), p(y), p(z));
        let ab = total_variation(&a, &b).unwrap().0;
        prop_assert!((ab - total_variation(&b, &a).unwrap().0).abs() < 1e-15);
        prop_assert!(ab <= total_variation(&a, &cc).unwrap().0 + total_variation(&cc, &b).unwrap().0 + 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn fidelity_is_bounded_and_one_on_itself(xi in 0.0..2.0f64, a in 0.0..1.0f64, eta in 0.1..1.0f64) {
        let spec = GbsSpec::single_mode(c(xi, 0.0), c(a, 0.0));
        let target = prepare_target(&spec).unwrap();
        prop_assert!((fidelity(&target, &target).unwrap() - 1.0).abs() < 1e-12);
        let f = fidelity(&target, &propagate(&spec, &single_mode_loss(eta)).unwrap()).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn two_mode_engine_matches_fock_reference(
        x1 in 0.0..0.4f64, x2 in 0.0..0.4f64, a1 in 0.0..0.3f64, a2 in 0.0..0.3f64,
        theta in 0.0..3.14f64, gamma in 0.0..6.28f64,
        e1 in 0.3..1.0f64, e2 in 0.3..1.0f64, f1 in 0.3..1.0f64, f2 in 0.3..1.0f64,
    ) {
        let u = two_mode_unitary(theta, gamma);
        let spec = GbsSpec::new(vec![c(x1, 0.0), c(x2, 0.0)], vec![c(a1, 0.0), c(0.0, a2)], u.clone()).unwrap();
        let loss = build_loss_model(&u, &[e1, e2], None, &[f1, f2]).unwrap();
        let engine = pnd_gaussian(&propagate(&spec, &loss).unwrap(), &PndOptions::fixed(5)).unwrap();
        let reference = oracle_pnd(&spec, &loss, 5).unwrap();
        for (outcome, p) in engine.iter() {
            prop_assert!((p - reference.get(&outcome)).abs() < 1e-9, "{:?}", outcome);
        }
    }
}
