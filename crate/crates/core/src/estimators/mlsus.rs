//! Multilevel subset simulation: subset `j` is tested at accuracy level
//! `l_j`, and the thresholds are spaced so that the subsets stay nested
//! despite the change of level.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::sus::{run_adaptive_stages, run_fixed_stages, Run};
use super::thresholds::ThresholdSchedule;
use super::{EstimateReport, EstimatorConfig};
use crate::error::{Error, Result};
use crate::hierarchy::LimitStateModel;
use crate::shaking::SubsetSpec;

/// How the probability of the first (coarsest) subset is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FirstSubset {
    MonteCarlo,
    /// Adaptive subset simulation at level `l_1` with intermediate
    /// probability `p0`; the budget assumes `expected_stages` stages.
    SubsetSimulation { p0: f64, expected_stages: usize },
    /// Monte Carlo if the prior guess `hint` of the first probability is at
    /// least 0.05, otherwise subset simulation with `p0 = 0.2`.
    Auto { hint: f64 },
}

impl FirstSubset {
    pub fn resolve(self) -> FirstSubset {
        match self {
            FirstSubset::Auto { hint } if hint >= 0.05 => FirstSubset::MonteCarlo,
            FirstSubset::Auto { hint } => {
                let stages = (hint.max(1e-300).ln() / 0.2f64.ln()).ceil().max(1.0) as usize;
                FirstSubset::SubsetSimulation { p0: 0.2, expected_stages: stages }
            }
            other => other,
        }
    }
}

pub fn run_ml_sus<M: LimitStateModel + ?Sized>(
    model: &M,
    cfg: &EstimatorConfig,
    schedule: &ThresholdSchedule,
    first: FirstSubset,
    seed: u64,
) -> Result<EstimateReport> {
    cfg.check()?;
    let gamma = model.schedule().gamma();
    schedule.check_lemma_spacing(gamma)?;
    if schedule.finest_level() > model.schedule().max_level() {
        return Err(Error::Config(format!(
            "finest subset level {} exceeds the model's {}",
            schedule.finest_level(),
            model.schedule().max_level()
        )));
    }
    let started = Instant::now();
    let k = schedule.k();
    let membership = cfg.membership();
    let subsets: Vec<SubsetSpec> = (1..=k).map(|j| schedule.subset(j, membership)).collect();
    let mut run = Run::new();
    match first.resolve() {
        FirstSubset::MonteCarlo | FirstSubset::Auto { .. } => {
            let budget = cfg.subset_budget(k);
            run_fixed_stages(model, cfg, &subsets, 1, Vec::new(), SubsetSpec::whole_space(), None, budget, seed, &mut run)?;
        }
        FirstSubset::SubsetSimulation { p0, expected_stages } => {
            let budget = cfg.subset_budget(k - 1 + expected_stages.max(1));
            let inner = EstimatorConfig { p0, ..cfg.clone() };
            inner.check()?;
            let n_after = if k > 1 { cfg.chains() } else { 0 };
            let (seeds, next_index) =
                run_adaptive_stages(model, &inner, schedule.levels()[0], subsets[0], n_after, budget, 64, seed, &mut run)?;
            if k > 1 {
                run_fixed_stages(model, cfg, &subsets[1..], next_index, seeds, subsets[0], None, budget, seed, &mut run)?;
            }
        }
    }
    Ok(EstimateReport::from_subsets(run.subsets, run.ledger, cfg.correlation, seed, run.violations, started))
}
