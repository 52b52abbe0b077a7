//! Rare-event probability estimation over hierarchies of limit-state
//! approximations.
//!
//! The crate provides four estimators for `P(G <= 0)`:
//!
//! - plain Monte Carlo at a fixed accuracy level,
//! - classical subset simulation (fixed or adaptive intermediate thresholds),
//! - subset simulation where each membership test refines the sample only as
//!   far as needed to certify the indicator ("selective refinement"),
//! - adaptive multilevel subset simulation, where successive subsets carry
//!   increasing accuracy levels and thresholds are spaced so that the nested
//!   subset property survives the change of resolution.
//!
//! Conditional probabilities are estimated with Markov chains driven by the
//! Gaussian shaking transformation (the pCN proposal) and a rejection step.
//! Every model evaluation is charged to a [`CostLedger`] in abstract work
//! units, which is the cost measure used throughout.
//!
//! Three benchmark models live in [`models`]: a Gaussian toy problem, the
//! running minimum of a Brownian path, and a Darcy-flow problem with a
//! log-normal permeability field solved by P1 finite elements.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod experiment;
pub mod hierarchy;
pub mod models;
pub mod rng;
pub mod shaking;

pub use error::{Error, Result};
pub use hierarchy::{
    evaluate_at_level, indicator_selective, ledger_merge, selective_evaluate, AccuracySchedule,
    CachedPoint, CostLedger, LevelledValue, LimitStateModel, ParameterVector,
};
