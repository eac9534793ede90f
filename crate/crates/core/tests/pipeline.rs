//! End-to-end use of the public API.

use qmean::applications::{distinguish_distributions, grover_demo, DistPair, Hypothesis};
use qmean::experiments::instance;
use qmean::instances::fig_aa;
use qmean::maintask::{main_task_shifted, Distinguisher, Route, Verdict};
use qmean::reductions::{estimate_mean, ReductionConfig};
use qmean::{trial_rng, Error, QueryLedger, RandVar, Transform};

#[test]
fn estimate_is_reproducible_and_fully_charged() {
    let rv = fig_aa();
    let run = |seed| {
        let mut ledger = QueryLedger::new();
        let r = estimate_mean(&rv, 16, &mut trial_rng(seed, 0), &mut ledger).unwrap();
        assert_eq!(r.queries, ledger.count());
        r
    };
    let (a, b) = (run(5), run(5));
    assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
    assert_eq!(a.queries, b.queries);
    assert!((a.estimate - rv.mean()).abs() <= rv.std_dev() / 16.0);
}

#[test]
fn estimate_is_translation_equivariant_in_accuracy() {
    let base = fig_aa();
    let shifted = base.transform(Transform::Shift(-40.0)).unwrap();
    let r = estimate_mean(&shifted, 16, &mut trial_rng(9, 0), &mut QueryLedger::new()).unwrap();
    assert!((r.estimate - shifted.mean()).abs() <= shifted.std_dev() / 16.0);
}

#[test]
fn budget_is_enforced_through_the_pipeline() {
    let mut ledger = QueryLedger::with_budget(1000);
    let err = estimate_mean(&fig_aa(), 16, &mut trial_rng(1, 0), &mut ledger).unwrap_err();
    assert!(matches!(err, Error::BudgetExhausted { .. }), "{err:?}");
    assert!(ledger.count() <= 1000);
}

#[test]
fn every_route_answers_the_promise_cases() {
    for route in [Route::Qpe, Route::Elementary, Route::Eleven] {
        let zero = RandVar::new(&[0.5, 0.5], &[-0.5, 0.5]).unwrap();
        let far = RandVar::new(&[0.5, 0.5], &[-0.3, 0.5]).unwrap();
        let eps = 0.05;
        assert!(Distinguisher::problem1(&zero, eps, route).unwrap().prob_small() >= 2.0 / 3.0, "{route}");
        assert!(Distinguisher::problem1(&far, eps, route).unwrap().prob_small() <= 1.0 / 3.0, "{route}");
    }
}

#[test]
fn shifted_task_centres_on_the_guess() {
    let rv = fig_aa();
    let mut small = 0;
    for t in 0..30 {
        let v = main_task_shifted(&rv, 0.1, rv.mean(), Route::Qpe, &mut trial_rng(3, t), &mut QueryLedger::new())
            .unwrap();
        small += (v.verdict == Verdict::Small) as u32;
    }
    assert!(small >= 20, "{small}");
}

#[test]
fn applications_run_from_public_api() {
    let pair = DistPair::new(&[0.8, 0.2], &[0.2, 0.8]).unwrap();
    let cfg = ReductionConfig::default();
    for truth in [Hypothesis::Q, Hypothesis::R] {
        let out = distinguish_distributions(&pair, truth, &cfg, &mut trial_rng(2, 0), &mut QueryLedger::new()).unwrap();
        assert_eq!(out.verdict, truth);
    }
    let hit = grover_demo(256, true, Route::Qpe, &mut trial_rng(4, 0), &mut QueryLedger::new()).unwrap();
    let miss = grover_demo(256, false, Route::Qpe, &mut trial_rng(4, 1), &mut QueryLedger::new()).unwrap();
    assert!(hit.found && !miss.found);
    assert_eq!(hit.queries, miss.queries);
}

#[test]
fn instances_roundtrip_through_json() {
    for name in ["fig-aa", "fig-eigs", "heavy-tail", "bernoulli-1/256", "grover-64", "uniform-10", "fig-aa+3"] {
        let rv = instance(name).unwrap();
        let back = RandVar::from_json(&rv.to_json()).unwrap();
        assert_eq!(back.values(), rv.values(), "{name}");
        assert_eq!(back.weights(), rv.weights(), "{name}");
    }
}
