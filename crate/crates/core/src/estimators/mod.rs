//! Failure-probability estimators: plain Monte Carlo, subset simulation with
//! fixed or adaptive thresholds (optionally with selective refinement), and
//! multilevel subset simulation.
//!
//! Every subset is sampled until its estimated c.o.v. meets the per-subset
//! budget `TOL^2 / K^s`, checked at geometrically spaced checkpoints between
//! `n_min` and `n_max` samples.

pub mod diagnostics;
pub mod mc;
pub mod mlsus;
mod stage;
pub mod sus;
pub mod thresholds;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::CostLedger;
use crate::shaking::Membership;

pub use diagnostics::{combine_cov, estimate_autocorrelation, estimate_cov, Autocorrelation, Correlation};
pub use mc::standard_mc;
pub use mlsus::{run_ml_sus, FirstSubset};
pub use sus::{run_sus, SusMode};
pub use thresholds::{
    adaptive_threshold, adaptive_thresholds_p0, threshold_schedule_lemma, AdaptiveThreshold, ScheduleMode,
    ThresholdSchedule,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Target c.o.v. of the final estimate.
    pub tol: f64,
    /// Target conditional probability for adaptive thresholds.
    pub p0: f64,
    pub correlation: Correlation,
    pub n_min: usize,
    pub n_max: usize,
    pub selective: bool,
    /// Parallel chains per subset; defaults to `max(1, floor(p0 n_min))`.
    pub n_chains: Option<usize>,
    pub eta: f64,
    /// Test accepted states against the enclosing subset and count failures.
    pub check_subset_property: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            tol: 0.1,
            p0: 0.2,
            correlation: Correlation::Correlated,
            n_min: 100,
            n_max: 1_000_000,
            selective: true,
            n_chains: None,
            eta: 0.6,
            check_subset_property: true,
        }
    }
}

impl EstimatorConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            errs.push(format!("tol must be > 0, got {}", self.tol));
        }
        if !(0.1..=0.3).contains(&self.p0) {
            errs.push(format!("p0 must lie in [0.1, 0.3], got {}", self.p0));
        }
        if self.n_min == 0 || self.n_min > self.n_max {
            errs.push(format!("need 1 <= n_min <= n_max, got {} and {}", self.n_min, self.n_max));
        }
        if self.n_chains == Some(0) {
            errs.push("n_chains must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.eta) {
            errs.push(format!("eta must lie in [0,1], got {}", self.eta));
        }
        errs
    }

    pub(crate) fn check(&self) -> Result<()> {
        let errs = self.validate();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn chains(&self) -> usize {
        self.n_chains.unwrap_or(((self.p0 * self.n_min as f64).floor() as usize).max(1))
    }

    pub fn membership(&self) -> Membership {
        if self.selective {
            Membership::Selective
        } else {
            Membership::Plain
        }
    }

    /// `TOL^2 / K^s`.
    pub fn subset_budget(&self, k: usize) -> f64 {
        self.tol * self.tol / (k.max(1) as f64).powi(self.correlation.s())
    }
}

/// Conditional estimate of one subset given the previous one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSummary {
    pub threshold: f64,
    pub level: u32,
    pub p_hat: f64,
    pub n: usize,
    /// Mean acceptance rate of the chains; `None` for i.i.d. sampling.
    pub acceptance: Option<f64>,
    pub phi: f64,
    pub cov: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub p_hat: f64,
    pub per_subset: Vec<SubsetSummary>,
    pub cov_hat: f64,
    pub ledger: CostLedger,
    pub replicate_id: usize,
    pub seed: u64,
    pub violations: u64,
    /// Seconds; informational only.
    pub wall_clock: f64,
}

impl EstimateReport {
    pub(crate) fn from_subsets(
        per_subset: Vec<SubsetSummary>,
        ledger: CostLedger,
        correlation: Correlation,
        seed: u64,
        violations: u64,
        started: std::time::Instant,
    ) -> Self {
        let p_hat = per_subset.iter().map(|s| s.p_hat).product();
        let covs: Vec<f64> = per_subset.iter().map(|s| s.cov).collect();
        Self {
            p_hat,
            cov_hat: combine_cov(&covs, correlation),
            per_subset,
            ledger,
            replicate_id: 0,
            seed,
            violations,
            wall_clock: started.elapsed().as_secs_f64(),
        }
    }

    /// Running products `P_1, P_1 P_2, ...`.
    pub fn partial_products(&self) -> Vec<f64> {
        self.per_subset
            .iter()
            .scan(1.0, |acc, s| {
                *acc *= s.p_hat;
                Some(*acc)
            })
            .collect()
    }
}
