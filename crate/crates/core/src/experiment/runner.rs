//! Replicated runs of every configured estimator at every tolerance.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use super::config::{Benchmark, EstimatorKind, ExperimentConfig};
use super::output::{summarize_records, SummaryRow};
use crate::error::{Error, Result};
use crate::estimators::mc::projected_mc_cost;
use crate::estimators::{
    run_ml_sus, run_sus, standard_mc, threshold_schedule_lemma, EstimateReport, FirstSubset, SusMode,
    ThresholdSchedule,
};
use crate::hierarchy::{AccuracySchedule, LimitStateModel};
use crate::models::{BrownianModel, DarcyModel, Kappa, ToyModel};
use crate::rng::derive_seed;

const KAPPA_TAG: u64 = 0x6b_6170_7061;

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Aborted(String),
    /// Cost extrapolated from `N = TOL^-2 P^-1`; no samples drawn.
    Projected,
}

/// One replicate of one estimator at one tolerance.
#[derive(Debug, Clone)]
pub struct RawRecord {
    pub replicate: usize,
    pub estimator: EstimatorKind,
    pub benchmark: Benchmark,
    pub tol: f64,
    pub seed: u64,
    pub status: RunStatus,
    pub report: Option<EstimateReport>,
    /// Filled for projected rows only.
    pub projection: Option<Projection>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub p: f64,
    pub samples: f64,
    pub cost: f64,
}

impl RawRecord {
    /// Name in the estimator column; projected MC is distinguished.
    pub fn estimator_label(&self) -> &'static str {
        match self.status {
            RunStatus::Projected => "mc-projected",
            _ => self.estimator.name(),
        }
    }

    pub fn p_hat(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.p_hat).or(self.projection.map(|p| p.p))
    }

    pub fn cov_hat(&self) -> Option<f64> {
        match self.status {
            RunStatus::Projected => Some(self.tol),
            _ => self.report.as_ref().map(|r| r.cov_hat),
        }
    }

    pub fn total_cost(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.ledger.total_cost()).or(self.projection.map(|p| p.cost))
    }
}

pub struct ExperimentResults {
    pub records: Vec<RawRecord>,
    pub summary: Vec<SummaryRow>,
    pub reference_probability: Option<f64>,
    pub wall_clock: f64,
}

/// Models and schedules for one tolerance.
pub struct TolerancePlan {
    pub tol: f64,
    pub model: Arc<dyn LimitStateModel>,
    /// Level of the single-level estimators.
    pub level: u32,
    pub sus: ThresholdSchedule,
    pub ml: ThresholdSchedule,
    pub first: FirstSubset,
}

/// Default reference probabilities: `Phi(barrier)` for the toy problem and
/// the reflection-principle value `2 Phi(-barrier)` for the Brownian one.
pub fn default_reference(cfg: &ExperimentConfig) -> Option<f64> {
    let n = Normal::standard();
    match cfg.benchmark {
        Benchmark::Toy => Some(n.cdf(cfg.toy.barrier)),
        Benchmark::Brownian => Some(2.0 * n.cdf(-cfg.brownian.barrier)),
        Benchmark::Darcy => None,
    }
}

pub fn plan(cfg: &ExperimentConfig, tol: f64, darcy: Option<&Arc<DarcyModel>>) -> Result<TolerancePlan> {
    match cfg.benchmark {
        Benchmark::Toy => {
            let t = &cfg.toy;
            let level = AccuracySchedule::new(t.gamma, t.q, 1)?.level_for_tolerance(tol).max(1);
            let schedule = AccuracySchedule::new(t.gamma, t.q, level)?;
            let kappa = Kappa::Hashed(derive_seed(cfg.seed, &[KAPPA_TAG]));
            let model = ToyModel::new(schedule, t.barrier, 1, kappa);
            let levels: Vec<u32> = (1..=level).collect();
            Ok(TolerancePlan {
                tol,
                model: Arc::new(model),
                level,
                sus: ThresholdSchedule::classical(&t.sus_thresholds, level)?,
                ml: threshold_schedule_lemma(&schedule, &levels)?,
                first: t.first_subset,
            })
        }
        Benchmark::Brownian => {
            let b = &cfg.brownian;
            let level = AccuracySchedule::new(std::f64::consts::FRAC_1_SQRT_2, 2.0, 1)?
                .level_for_tolerance(tol)
                .max(1);
            let k = (level as usize).saturating_sub(1).max(b.ml_min_subsets).max(1);
            let levels: Vec<u32> = (1..=k as u32).map(|j| (j + 1).max(b.ml_min_level)).collect();
            let max_level = levels.last().copied().unwrap_or(level).max(level);
            let model = BrownianModel::new(b.kl_terms, max_level, b.barrier)?;
            let ml = threshold_schedule_lemma(model.schedule(), &levels)?;
            Ok(TolerancePlan {
                tol,
                level,
                sus: ThresholdSchedule::classical(&b.sus_thresholds, level)?,
                ml,
                model: Arc::new(model),
                first: b.first_subset,
            })
        }
        Benchmark::Darcy => {
            let d = &cfg.darcy;
            let model = match darcy {
                Some(m) => Arc::clone(m),
                None => Arc::new(DarcyModel::new(d.model.clone())?),
            };
            let level = d.model.max_level;
            Ok(TolerancePlan {
                tol,
                level,
                sus: ThresholdSchedule::classical(&d.sus_thresholds, level)?,
                ml: threshold_schedule_lemma(model.schedule(), &d.ml_levels)?,
                model,
                first: d.first_subset,
            })
        }
    }
}

fn run_one(cfg: &ExperimentConfig, plan: &TolerancePlan, kind: EstimatorKind, replicate: usize) -> Result<RawRecord> {
    let seed = derive_seed(cfg.seed, &[replicate as u64]);
    let model: &dyn LimitStateModel = plan.model.as_ref();
    let result = match kind {
        EstimatorKind::Mc => {
            let n = match cfg.mc.samples {
                Some(n) => n,
                None => {
                    let p = cfg.reference_probability.or_else(|| default_reference(cfg)).ok_or_else(|| {
                        Error::Config("executed Monte Carlo needs `mc.samples` or a reference probability".into())
                    })?;
                    projected_mc_cost(plan.tol, p, 1.0).0 as usize
                }
            };
            standard_mc(model, plan.level, n, false, seed)
        }
        EstimatorKind::Sus => {
            run_sus(model, &cfg.estimator.to_config(plan.tol, false), &SusMode::Fixed(plan.sus.clone()), seed)
        }
        EstimatorKind::SusSr => {
            run_sus(model, &cfg.estimator.to_config(plan.tol, true), &SusMode::Fixed(plan.sus.clone()), seed)
        }
        EstimatorKind::MlSusSr => run_ml_sus(model, &cfg.estimator.to_config(plan.tol, true), &plan.ml, plan.first, seed),
    };
    let (status, report) = match result {
        Ok(mut r) => {
            r.replicate_id = replicate;
            (RunStatus::Completed, Some(r))
        }
        Err(Error::Aborted { subset, reason }) => (RunStatus::Aborted(format!("subset {subset}: {reason}")), None),
        Err(e) => return Err(e),
    };
    Ok(RawRecord { replicate, estimator: kind, benchmark: cfg.benchmark, tol: plan.tol, seed, status, report, projection: None })
}

/// Runs every (estimator, tolerance, replicate) combination on a pool of
/// `cfg.workers()` threads. Aborted replicates are recorded, not fatal.
///
/// Rows come back sorted by estimator, tolerance (config order) and
/// replicate, and do not depend on the number of workers.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let started = Instant::now();
    let darcy = match cfg.benchmark {
        Benchmark::Darcy => Some(Arc::new(DarcyModel::new(cfg.darcy.model.clone())?)),
        _ => None,
    };
    let plans: Vec<TolerancePlan> =
        cfg.tolerances.iter().map(|&t| plan(cfg, t, darcy.as_ref())).collect::<Result<_>>()?;

    let mut kinds = cfg.estimators.clone();
    kinds.sort();
    let projected_mc = cfg.mc.projected && kinds.contains(&EstimatorKind::Mc);
    let jobs: Vec<(EstimatorKind, usize, usize)> = kinds
        .iter()
        .filter(|k| !(projected_mc && **k == EstimatorKind::Mc))
        .flat_map(|&k| (0..plans.len()).flat_map(move |t| (0..cfg.replicates).map(move |r| (k, t, r))))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut records: Vec<RawRecord> = pool.install(|| {
        jobs.par_iter().map(|&(k, t, r)| run_one(cfg, &plans[t], k, r)).collect::<Result<Vec<_>>>()
    })?;

    let reference = cfg.reference_probability.or_else(|| default_reference(cfg));
    if projected_mc {
        let mut projected = Vec::with_capacity(plans.len());
        for plan in &plans {
            let p = reference.or_else(|| mean_completed(&records, plan.tol)).ok_or_else(|| {
                Error::Config("projected Monte Carlo needs a reference probability or another estimator".into())
            })?;
            let (samples, cost) = projected_mc_cost(plan.tol, p, plan.model.level_cost(plan.level));
            projected.push(RawRecord {
                replicate: 0,
                estimator: EstimatorKind::Mc,
                benchmark: cfg.benchmark,
                tol: plan.tol,
                seed: cfg.seed,
                status: RunStatus::Projected,
                report: None,
                projection: Some(Projection { p, samples, cost }),
            });
        }
        projected.append(&mut records);
        records = projected;
    }

    let summary = summarize_records(&records, reference);
    Ok(ExperimentResults { records, summary, reference_probability: reference, wall_clock: started.elapsed().as_secs_f64() })
}

/// Mean estimate of the multilevel runs at `tol`, falling back to any
/// completed estimator.
fn mean_completed(records: &[RawRecord], tol: f64) -> Option<f64> {
    let by = |kind: Option<EstimatorKind>| {
        let v: Vec<f64> = records
            .iter()
            .filter(|r| r.tol == tol && kind.is_none_or(|k| r.estimator == k))
            .filter_map(|r| r.report.as_ref().map(|x| x.p_hat))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    by(Some(EstimatorKind::MlSusSr)).or_else(|| by(None))
}
