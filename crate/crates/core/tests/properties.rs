//! Property tests for the hierarchy, shaking and estimator invariants.

use proptest::prelude::*;
use subsim_core::estimators::{combine_cov, estimate_cov, threshold_schedule_lemma, Correlation};
use subsim_core::hierarchy::{
    evaluate_at_level, ledger_merge, selective_evaluate, AccuracySchedule, CachedPoint, CostLedger, LimitStateModel,
    ParameterVector,
};
use subsim_core::models::{BrownianModel, Kappa, ToyModel};
use subsim_core::rng::derive_seed;
use subsim_core::shaking::shake;

fn toy(max_level: u32, seed: u64) -> ToyModel {
    ToyModel::new(AccuracySchedule::new(0.5, 2.0, max_level).unwrap(), -3.8, 1, Kappa::Hashed(seed))
}

fn ulps(a: f64, b: f64) -> f64 {
    4.0 * f64::EPSILON * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn toy_error_is_exactly_gamma_to_the_level(t in -8.0f64..8.0, level in 1u32..=12, seed in any::<u64>()) {
        let m = toy(12, seed);
        let theta = ParameterVector::new(vec![t]).unwrap();
        let v = evaluate_at_level(&m, &theta, level, &mut CostLedger::new()).unwrap().value;
        let g = m.exact(&theta).unwrap();
        prop_assert!(((v - g).abs() - 0.5f64.powi(level as i32)).abs() <= ulps(v, g));
    }

    #[test]
    fn selective_value_satisfies_the_certified_bound(
        g in -2.0f64..2.0, y in -1.0f64..1.0, level in 1u32..=10, seed in any::<u64>()
    ) {
        let m = toy(10, seed);
        let theta = ParameterVector::new(vec![g + m.barrier()]).unwrap();
        let g = m.exact(&theta).unwrap();
        let mut ledger = CostLedger::new();
        let v = selective_evaluate(&m, &theta, y, level, &mut ledger).unwrap();
        let bound = 0.5f64.powi(level as i32).max((v.value - y).abs());
        prop_assert!((g - v.value).abs() <= bound + ulps(g, v.value));
        if (g - y).abs() > 2.0 * 0.5f64.powi(level as i32) {
            prop_assert_eq!(v.value <= y, g <= y);
        }
        // cumulative cost of the visited levels, charged once each
        let visited: f64 = (1..=v.level).map(|l| m.level_cost(l)).sum();
        prop_assert_eq!(v.cost, visited);
        prop_assert_eq!(ledger.total_cost(), visited);
        prop_assert!(v.cost <= m.level_cost(level) * (1.0 + v.level as f64));
    }

    #[test]
    fn cached_point_never_charges_a_level_twice(t in -5.0f64..5.0, y in -1.0f64..1.0, level in 1u32..=8) {
        let m = toy(8, 3);
        let mut p = CachedPoint::new(ParameterVector::new(vec![t]).unwrap());
        let mut ledger = CostLedger::new();
        let a = p.selective(&m, y, level, &mut ledger).unwrap();
        let b = p.plain(&m, level, &mut ledger).unwrap();
        let c = p.selective(&m, y, level, &mut ledger).unwrap();
        prop_assert_eq!(a.value, c.value);
        prop_assert_eq!(b.value, m.level_value(p.theta(), level).unwrap());
        for l in 1..=level {
            prop_assert!(ledger.count(l) <= 1);
        }
    }

    #[test]
    fn ledger_totals_add_up(charges in prop::collection::vec((1u32..6, 0.0f64..100.0), 0..40), split in 0usize..40) {
        let mut all = CostLedger::new();
        let (mut a, mut b) = (CostLedger::new(), CostLedger::new());
        for (i, &(level, cost)) in charges.iter().enumerate() {
            all.charge(level, cost);
            if i < split { a.charge(level, cost) } else { b.charge(level, cost) }
        }
        let merged = ledger_merge(&a, &b);
        prop_assert_eq!(merged.per_level_counts(), all.per_level_counts());
        prop_assert_eq!(merged.total_count(), charges.len() as u64);
        let by_level: f64 = merged.per_level_cost().values().sum();
        prop_assert!((merged.total_cost() - by_level).abs() <= 1e-9 * by_level.max(1.0));
        prop_assert!((ledger_merge(&b, &a).total_cost() - merged.total_cost()).abs() <= 1e-9 * by_level.max(1.0));
    }

    #[test]
    fn shake_mixes_with_unit_variance_weights(
        x in prop::collection::vec(-4.0f64..4.0, 1..8), eta in 0.0f64..=1.0
    ) {
        let y: Vec<f64> = x.iter().map(|v| 0.5 - v).collect();
        let s = shake(&ParameterVector::new(x.clone()).unwrap(), &ParameterVector::new(y.clone()).unwrap(), eta).unwrap();
        let c = (1.0 - eta * eta).sqrt();
        prop_assert!((c * c + eta * eta - 1.0).abs() < 1e-12);
        for i in 0..x.len() {
            prop_assert!((s.coords()[i] - (c * x[i] + eta * y[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn lemma_schedules_keep_the_required_spacing(
        gamma in 0.1f64..0.9, raw in prop::collection::vec(1u32..6, 1..7)
    ) {
        let mut levels = raw.clone();
        levels.sort_unstable();
        let schedule = AccuracySchedule::new(gamma, 2.0, *levels.last().unwrap()).unwrap();
        let s = threshold_schedule_lemma(&schedule, &levels).unwrap();
        let y = s.thresholds();
        prop_assert_eq!(y[s.k()], 0.0);
        prop_assert!(s.check_lemma_spacing(gamma).is_ok());
        for j in 1..s.k() {
            let need = gamma.powi(levels[j - 1] as i32) + gamma.powi(levels[j] as i32);
            prop_assert!(y[j] - y[j + 1] >= need * (1.0 - 1e-12));
        }
    }

    #[test]
    fn cov_shrinks_with_samples_and_grows_with_correlation(
        p in 0.01f64..0.99, n in 10usize..10_000, phi in 0.0f64..10.0
    ) {
        prop_assert!(estimate_cov(p, 2 * n, phi) < estimate_cov(p, n, phi));
        prop_assert!(estimate_cov(p, n, phi) >= estimate_cov(p, n, 0.0));
    }

    #[test]
    fn correlated_combination_dominates(d in prop::collection::vec(0.0f64..1.0, 1..10)) {
        let s1 = combine_cov(&d, Correlation::Uncorrelated);
        let s2 = combine_cov(&d, Correlation::Correlated);
        prop_assert!(s2 >= s1 - 1e-12);
        prop_assert!(s1 >= d.iter().cloned().fold(0.0, f64::max) - 1e-12);
    }

    #[test]
    fn brownian_minimum_is_monotone_in_the_level(coords in prop::collection::vec(-3.0f64..3.0, 32)) {
        let m = BrownianModel::new(32, 8, 4.0).unwrap();
        let theta = ParameterVector::new(coords).unwrap();
        let mut prev = f64::INFINITY;
        for l in 1..=8 {
            let g = m.level_value(&theta, l).unwrap();
            prop_assert!(g <= prev);
            prev = g;
        }
    }

    #[test]
    fn derived_seeds_are_stable(base in any::<u64>(), tags in prop::collection::vec(any::<u64>(), 0..4)) {
        prop_assert_eq!(derive_seed(base, &tags), derive_seed(base, &tags));
    }
}
