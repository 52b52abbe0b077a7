//! Plain Monte Carlo at a fixed accuracy level.

use std::time::Instant;

use super::diagnostics::{estimate_cov, Correlation};
use super::{EstimateReport, SubsetSummary};
use crate::error::{Error, Result};
use crate::hierarchy::{CachedPoint, CostLedger, LimitStateModel, ParameterVector};
use crate::rng::stream;
use crate::shaking::{Membership, SubsetSpec};

/// Mean of `n` failure indicators at `level` (selective against `y = 0` when
/// `selective`). A zero estimate is reported with infinite c.o.v.
///
/// Samples come from the same stream as the first subset of a subset
/// simulation run with the same seed.
pub fn standard_mc<M: LimitStateModel + ?Sized>(
    model: &M,
    level: u32,
    n: usize,
    selective: bool,
    seed: u64,
) -> Result<EstimateReport> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    let max = model.schedule().max_level();
    if level < 1 || level > max {
        return Err(Error::InvalidLevel { level, min: 1, max });
    }
    let started = Instant::now();
    let membership = if selective { Membership::Selective } else { Membership::Plain };
    let failure = SubsetSpec::new(0.0, level, membership);
    let mut rng = stream(seed, &[1, 0]);
    let mut ledger = CostLedger::new();
    let mut hits = 0usize;
    for _ in 0..n {
        let mut p = CachedPoint::new(ParameterVector::standard_normal(model.dim(), &mut rng));
        if failure.contains(model, &mut p, &mut ledger)? {
            hits += 1;
        }
    }
    let p_hat = hits as f64 / n as f64;
    let summary = SubsetSummary {
        threshold: 0.0,
        level,
        p_hat,
        n,
        acceptance: None,
        phi: 0.0,
        cov: estimate_cov(p_hat, n, 0.0),
        cost: ledger.total_cost(),
    };
    Ok(EstimateReport::from_subsets(vec![summary], ledger, Correlation::Uncorrelated, seed, 0, started))
}

/// Samples and cost plain Monte Carlo needs for c.o.v. `tol` at probability
/// `p`: `N = tol^-2 p^-1` (rounded up) times the per-sample cost.
pub fn projected_mc_cost(tol: f64, p: f64, cost_per_sample: f64) -> (f64, f64) {
    let n = (1.0 / (tol * tol * p)).ceil();
    (n, n * cost_per_sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::AccuracySchedule;

    struct Constant(f64, AccuracySchedule);

    impl LimitStateModel for Constant {
        fn dim(&self) -> usize {
            2
        }
        fn schedule(&self) -> &AccuracySchedule {
            &self.1
        }
        fn level_value(&self, _: &ParameterVector, _: u32) -> Result<f64> {
            Ok(self.0)
        }
    }

    fn constant(v: f64) -> Constant {
        Constant(v, AccuracySchedule::new(0.5, 2.0, 4).unwrap())
    }

    #[test]
    fn never_failing_model_reports_infinite_cov() {
        let r = standard_mc(&constant(1.0), 4, 50, false, 1).unwrap();
        assert_eq!(r.p_hat, 0.0);
        assert!(r.cov_hat.is_infinite());
        assert_eq!(r.ledger.count(4), 50);
    }

    #[test]
    fn always_failing_model_is_certain() {
        let r = standard_mc(&constant(-1.0), 4, 50, true, 1).unwrap();
        assert_eq!(r.p_hat, 1.0);
        assert_eq!(r.cov_hat, 0.0);
        // far from the threshold: level 1 certifies every sample
        assert_eq!(r.ledger.count(1), 50);
        assert_eq!(r.ledger.count(4), 0);
    }

    #[test]
    fn projection() {
        let (n, c) = projected_mc_cost(0.1, 1e-4, 16.0);
        assert_eq!(n, 1e6);
        assert_eq!(c, 1.6e7);
    }
}
