//! Subset simulation at a fixed accuracy level, with fixed or adaptively
//! chosen intermediate thresholds.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::stage::{run_stage, Scorer, StageResult, StageSpec};
use super::thresholds::ThresholdSchedule;
use super::{EstimateReport, EstimatorConfig};
use crate::error::{Error, Result};
use crate::hierarchy::{CachedPoint, CostLedger, LimitStateModel};
use crate::shaking::{Membership, SubsetSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SusMode {
    /// Given thresholds and levels.
    Fixed(ThresholdSchedule),
    /// Thresholds at the `p0` quantile of plain level-`level` values. The
    /// budget is split over `expected_subsets`.
    AdaptiveP0 { level: u32, expected_subsets: usize },
}

/// Accumulates stages into a report.
pub(crate) struct Run {
    pub subsets: Vec<super::SubsetSummary>,
    pub ledger: CostLedger,
    pub violations: u64,
}

impl Run {
    pub fn new() -> Self {
        Self { subsets: Vec::new(), ledger: CostLedger::new(), violations: 0 }
    }

    pub fn push(&mut self, r: &StageResult) {
        self.subsets.push(r.summary.clone());
        self.ledger.absorb(&r.ledger);
        self.violations += r.violations;
    }
}

/// Runs subset simulation over the given fixed subsets, starting with
/// i.i.d. sampling for the first one. Returns the stage results in order.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_fixed_stages<M: LimitStateModel + ?Sized>(
    model: &M,
    cfg: &EstimatorConfig,
    subsets: &[SubsetSpec],
    first_index: usize,
    mut seeds: Vec<CachedPoint>,
    mut current: SubsetSpec,
    mut previous: Option<SubsetSpec>,
    budget: f64,
    seed: u64,
    run: &mut Run,
) -> Result<()> {
    let n_chains = cfg.chains();
    for (i, next) in subsets.iter().enumerate() {
        let last = i + 1 == subsets.len();
        let spec = StageSpec {
            index: first_index + i,
            current,
            previous: if cfg.check_subset_property { previous } else { None },
            scorer: Scorer::Fixed(*next),
            budget,
        };
        let r = run_stage(model, cfg, &spec, seeds, if last { 0 } else { n_chains }, seed)?;
        run.push(&r);
        seeds = r.seeds;
        previous = (!current.is_whole_space()).then_some(current);
        current = *next;
    }
    Ok(())
}

/// Adaptive stages until the `p0` quantile reaches `final_spec.threshold`.
/// Returns the seeds for the subset after `final_spec` and the index of the
/// next stage.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_adaptive_stages<M: LimitStateModel + ?Sized>(
    model: &M,
    cfg: &EstimatorConfig,
    level: u32,
    final_spec: SubsetSpec,
    n_seeds_after: usize,
    budget: f64,
    max_stages: usize,
    seed: u64,
    run: &mut Run,
) -> Result<(Vec<CachedPoint>, usize)> {
    let mut seeds = Vec::new();
    let mut current = SubsetSpec::whole_space();
    let mut previous = None;
    for index in 1..=max_stages {
        let spec = StageSpec {
            index,
            current,
            previous: if cfg.check_subset_property { previous } else { None },
            scorer: Scorer::Adaptive { level, p0: cfg.p0, target: final_spec.threshold, final_spec },
            budget,
        };
        // the final stage's seeds feed the next subset, which may use a
        // different chain count than the adaptive stages
        let r = run_stage(model, cfg, &spec, seeds, cfg.chains().max(n_seeds_after), seed)?;
        run.push(&r);
        if r.is_final {
            let mut s = r.seeds;
            s.truncate(n_seeds_after);
            return Ok((s, index + 1));
        }
        seeds = r.seeds;
        previous = (!current.is_whole_space()).then_some(current);
        current = r.next;
    }
    Err(Error::Aborted {
        subset: max_stages,
        reason: format!("adaptive thresholds did not reach {} within {max_stages} subsets", final_spec.threshold),
    })
}

/// Subset simulation; with `cfg.selective` every membership test refines
/// the sample only as far as its threshold requires.
pub fn run_sus<M: LimitStateModel + ?Sized>(
    model: &M,
    cfg: &EstimatorConfig,
    mode: &SusMode,
    seed: u64,
) -> Result<EstimateReport> {
    cfg.check()?;
    let started = Instant::now();
    let mut run = Run::new();
    match mode {
        SusMode::Fixed(schedule) => {
            if cfg.selective {
                schedule.check_selective_spacing(model.schedule().gamma())?;
            }
            let subsets: Vec<SubsetSpec> = (1..=schedule.k()).map(|j| schedule.subset(j, cfg.membership())).collect();
            let budget = cfg.subset_budget(schedule.k());
            run_fixed_stages(model, cfg, &subsets, 1, Vec::new(), SubsetSpec::whole_space(), None, budget, seed, &mut run)?;
        }
        SusMode::AdaptiveP0 { level, expected_subsets } => {
            let final_spec = SubsetSpec::new(0.0, *level, Membership::Plain);
            let budget = cfg.subset_budget(*expected_subsets);
            run_adaptive_stages(model, cfg, *level, final_spec, 0, budget, 64, seed, &mut run)?;
        }
    }
    Ok(EstimateReport::from_subsets(run.subsets, run.ledger, cfg.correlation, seed, run.violations, started))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::standard_mc;
    use crate::estimators::thresholds::ThresholdSchedule;
    use crate::hierarchy::{AccuracySchedule, ParameterVector};
    use crate::models::ToyModel;
    use statrs::distribution::{ContinuousCDF, Normal};

    struct Constant(f64, AccuracySchedule);

    impl LimitStateModel for Constant {
        fn dim(&self) -> usize {
            1
        }
        fn schedule(&self) -> &AccuracySchedule {
            &self.1
        }
        fn level_value(&self, _: &ParameterVector, _: u32) -> Result<f64> {
            Ok(self.0)
        }
    }

    #[test]
    fn single_subset_matches_monte_carlo_on_the_same_stream() {
        let mut cfg = EstimatorConfig::with_tol(0.3);
        cfg.selective = false;
        let schedule = AccuracySchedule::new(0.5, 2.0, 3).unwrap();
        let model = ToyModel::new(schedule, -1.0, 1, crate::models::Kappa::Hashed(9));
        let sus = run_sus(&model, &cfg, &SusMode::Fixed(ThresholdSchedule::classical(&[0.0], 3).unwrap()), 17).unwrap();
        let n = sus.per_subset[0].n;
        let mc = standard_mc(&model, 3, n, false, 17).unwrap();
        assert_eq!(sus.p_hat, mc.p_hat);
        assert_eq!(sus.ledger, mc.ledger);
    }

    #[test]
    fn fixed_thresholds_recover_the_toy_probability() {
        let model = ToyModel::standard(4, 3).unwrap();
        let cfg = EstimatorConfig::with_tol(0.1);
        let mode = SusMode::Fixed(ThresholdSchedule::classical(&[2.5, 1.8, 1.0, 0.5, 0.0], 4).unwrap());
        let reps: Vec<EstimateReport> = (0..6).map(|s| run_sus(&model, &cfg, &mode, s).unwrap()).collect();
        let mean = reps.iter().map(|r| r.p_hat).sum::<f64>() / reps.len() as f64;
        let p = Normal::standard().cdf(-3.8);
        // 6 replicates at c.o.v. about 0.1 put the mean within 0.05 of p at 1 s.e.
        assert!((mean / p - 1.0).abs() < 0.2, "{mean} vs {p}");
        for r in &reps {
            assert_eq!(r.violations, 0);
            assert_eq!(r.per_subset.len(), 5);
            let prod: f64 = r.per_subset.iter().map(|s| s.p_hat).product();
            assert!((prod - r.p_hat).abs() <= 1e-15 * r.p_hat.max(1e-300));
            assert!((r.ledger.total_cost() - r.per_subset.iter().map(|s| s.cost).sum::<f64>()).abs() < 1e-6);
        }
    }

    #[test]
    fn adaptive_thresholds_stop_at_the_target() {
        let model = ToyModel::standard(4, 3).unwrap();
        let cfg = EstimatorConfig::with_tol(0.2);
        let r = run_sus(&model, &cfg, &SusMode::AdaptiveP0 { level: 4, expected_subsets: 6 }, 2).unwrap();
        let ys: Vec<f64> = r.per_subset.iter().map(|s| s.threshold).collect();
        assert_eq!(*ys.last().unwrap(), 0.0);
        assert!(ys.windows(2).all(|w| w[0] > w[1]));
        for s in &r.per_subset[..r.per_subset.len() - 1] {
            assert!((s.p_hat - 0.2).abs() < 0.05, "{}", s.p_hat);
        }
        let p = Normal::standard().cdf(-3.8);
        assert!(r.p_hat > p / 3.0 && r.p_hat < 3.0 * p);
    }

    #[test]
    fn empty_subset_aborts() {
        let model = Constant(1.0, AccuracySchedule::new(0.5, 1.0, 2).unwrap());
        let mut cfg = EstimatorConfig::with_tol(0.5);
        cfg.n_max = 400;
        let mode = SusMode::Fixed(ThresholdSchedule::classical(&[0.0], 2).unwrap());
        assert!(matches!(run_sus(&model, &cfg, &mode, 1), Err(Error::Aborted { subset: 1, .. })));
    }

    #[test]
    fn certain_failure_gives_one_everywhere() {
        let model = Constant(-1.0, AccuracySchedule::new(0.5, 1.0, 2).unwrap());
        let cfg = EstimatorConfig::with_tol(0.5);
        let mode = SusMode::Fixed(ThresholdSchedule::classical(&[0.5, 0.0], 2).unwrap());
        let r = run_sus(&model, &cfg, &mode, 1).unwrap();
        assert_eq!(r.p_hat, 1.0);
        assert_eq!(r.cov_hat, 0.0);
    }
}
