//! Hierarchies of limit-state approximations, selective refinement and cost
//! accounting.
//!
//! A [`LimitStateModel`] exposes approximations `G_l` of a limit-state
//! function `G` for accuracy levels `l = 1..=L`, where level `l` is accurate
//! to `gamma^l` and costs roughly `gamma^(-l q)` work units. Failure is
//! `G <= 0`.
//!
//! Selective refinement evaluates a sample only as finely as needed to decide
//! on which side of a threshold `y` it lies: levels are visited from the
//! coarsest upwards and the walk stops as soon as the error bound at the
//! current level is no larger than the distance to `y`, or the target
//! accuracy has been reached.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Error-reduction factor, cost exponent and finest level of a hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracySchedule {
    gamma: f64,
    q: f64,
    max_level: u32,
}

impl AccuracySchedule {
    pub fn new(gamma: f64, q: f64, max_level: u32) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidInput(format!("gamma must lie in (0,1), got {gamma}")));
        }
        if !(q >= 0.0 && q.is_finite()) {
            return Err(Error::InvalidInput(format!("q must be finite and >= 0, got {q}")));
        }
        if max_level < 1 {
            return Err(Error::InvalidInput("max_level must be >= 1".into()));
        }
        Ok(Self { gamma, q, max_level })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    /// `gamma^level`.
    pub fn error_bound(&self, level: u32) -> f64 {
        self.gamma.powi(level as i32)
    }

    /// `gamma^(-level q)`.
    pub fn nominal_cost(&self, level: u32) -> f64 {
        self.gamma.powf(-(level as f64) * self.q)
    }

    /// Smallest level whose nominal error bound is at most `tol`.
    pub fn level_for_tolerance(&self, tol: f64) -> u32 {
        let l = (tol.ln() / self.gamma.ln()).ceil();
        if l.is_finite() && l >= 1.0 {
            l as u32
        } else {
            1
        }
    }
}

/// A point in the standard-Gaussian parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("parameter vector must have dim >= 1".into()));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("coordinate {i} is not finite")));
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim.max(1)])
    }

    pub fn standard_normal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        Self((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for ParameterVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One evaluation of the limit state at some accuracy level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelledValue {
    pub value: f64,
    pub level: u32,
    /// Bound (certified or estimated, depending on the model) on `|G - value|`.
    pub error_bound: f64,
    /// Work units charged for producing this value.
    pub cost: f64,
}

/// Evaluation counts and work units per accuracy level.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    per_level_counts: BTreeMap<u32, u64>,
    per_level_cost: BTreeMap<u32, f64>,
    total_cost: f64,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, level: u32, cost: f64) {
        debug_assert!(cost >= 0.0);
        *self.per_level_counts.entry(level).or_insert(0) += 1;
        *self.per_level_cost.entry(level).or_insert(0.0) += cost;
        self.total_cost += cost;
    }

    pub fn absorb(&mut self, other: &CostLedger) {
        for (&l, &n) in &other.per_level_counts {
            *self.per_level_counts.entry(l).or_insert(0) += n;
        }
        for (&l, &c) in &other.per_level_cost {
            *self.per_level_cost.entry(l).or_insert(0.0) += c;
        }
        self.total_cost += other.total_cost;
    }

    pub fn total_cost(&self) -> f64 {
        self.total_cost
    }

    pub fn count(&self, level: u32) -> u64 {
        self.per_level_counts.get(&level).copied().unwrap_or(0)
    }

    pub fn cost(&self, level: u32) -> f64 {
        self.per_level_cost.get(&level).copied().unwrap_or(0.0)
    }

    pub fn total_count(&self) -> u64 {
        self.per_level_counts.values().sum()
    }

    pub fn per_level_counts(&self) -> &BTreeMap<u32, u64> {
        &self.per_level_counts
    }

    pub fn per_level_cost(&self) -> &BTreeMap<u32, f64> {
        &self.per_level_cost
    }

    pub fn is_empty(&self) -> bool {
        self.per_level_counts.is_empty()
    }
}

/// Entrywise sum of two ledgers.
pub fn ledger_merge(a: &CostLedger, b: &CostLedger) -> CostLedger {
    let mut out = a.clone();
    out.absorb(b);
    out
}

/// A hierarchy of approximations `G_l` of a limit-state function.
///
/// Implementations must be pure: the same `(theta, level)` always produces
/// the same value, so that revisiting a level during selective refinement is
/// idempotent.
pub trait LimitStateModel: Send + Sync {
    fn dim(&self) -> usize;

    fn schedule(&self) -> &AccuracySchedule;

    /// Raw approximation at `level`. Levels below 1 are only meaningful for
    /// models that override [`LimitStateModel::min_level`].
    fn level_value(&self, theta: &ParameterVector, level: u32) -> Result<f64>;

    /// Lowest level the model can evaluate internally.
    fn min_level(&self) -> u32 {
        1
    }

    /// Work units for one evaluation at `level`.
    fn level_cost(&self, level: u32) -> f64 {
        self.schedule().nominal_cost(level)
    }

    /// Whether [`LimitStateModel::estimated_error`] needs the value one level
    /// below to produce its estimate.
    fn uses_coarser_estimate(&self) -> bool {
        false
    }

    /// Error bound used by selective refinement for a level-`level` value.
    fn estimated_error(&self, level: u32, _value: f64, _coarser: Option<f64>) -> f64 {
        self.schedule().error_bound(level)
    }

    /// The exact limit state, when known in closed form.
    fn exact(&self, _theta: &ParameterVector) -> Option<f64> {
        None
    }
}

fn check_level<M: LimitStateModel + ?Sized>(model: &M, level: u32, min: u32) -> Result<()> {
    let max = model.schedule().max_level();
    if level < min || level > max {
        return Err(Error::InvalidLevel { level, min, max });
    }
    Ok(())
}

fn check_dim<M: LimitStateModel + ?Sized>(model: &M, theta: &ParameterVector) -> Result<()> {
    if theta.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: theta.dim() });
    }
    Ok(())
}

/// A parameter point together with every level value computed for it so far.
///
/// Levels are charged to the ledger the first time they are computed; later
/// requests for the same level are free.
#[derive(Debug, Clone)]
pub struct CachedPoint {
    theta: ParameterVector,
    values: Vec<Option<f64>>,
}

impl CachedPoint {
    pub fn new(theta: ParameterVector) -> Self {
        Self { theta, values: Vec::new() }
    }

    pub fn theta(&self) -> &ParameterVector {
        &self.theta
    }

    pub fn into_theta(self) -> ParameterVector {
        self.theta
    }

    pub fn cached(&self, level: u32) -> Option<f64> {
        self.values.get(level as usize).copied().flatten()
    }

    /// Value at `level`, computing and charging it if not yet cached.
    pub fn value_at<M: LimitStateModel + ?Sized>(
        &mut self,
        model: &M,
        level: u32,
        ledger: &mut CostLedger,
    ) -> Result<f64> {
        if let Some(v) = self.cached(level) {
            return Ok(v);
        }
        check_level(model, level, model.min_level())?;
        check_dim(model, &self.theta)?;
        let v = model.level_value(&self.theta, level)?;
        ledger.charge(level, model.level_cost(level));
        let idx = level as usize;
        if self.values.len() <= idx {
            self.values.resize(idx + 1, None);
        }
        self.values[idx] = Some(v);
        Ok(v)
    }

    /// Plain evaluation at `level` with the nominal bound `gamma^level`.
    pub fn plain<M: LimitStateModel + ?Sized>(
        &mut self,
        model: &M,
        level: u32,
        ledger: &mut CostLedger,
    ) -> Result<LevelledValue> {
        check_level(model, level, 1)?;
        let before = ledger.total_cost();
        let value = self.value_at(model, level, ledger)?;
        Ok(LevelledValue {
            value,
            level,
            error_bound: model.schedule().error_bound(level),
            cost: ledger.total_cost() - before,
        })
    }

    /// Selective evaluation targeting accuracy `target` relative to `y`.
    ///
    /// Walks `j = 1, 2, ...` and stops at the first level whose error bound
    /// `e_j` satisfies `e_j <= gamma^target` or `e_j <= |G_j - y|`, or when
    /// `j == target`. Ties stop the walk.
    pub fn selective<M: LimitStateModel + ?Sized>(
        &mut self,
        model: &M,
        y: f64,
        target: u32,
        ledger: &mut CostLedger,
    ) -> Result<LevelledValue> {
        check_level(model, target, 1)?;
        let before = ledger.total_cost();
        let full = model.schedule().error_bound(target);
        for j in 1..=target {
            let coarser = if model.uses_coarser_estimate() && j > model.min_level() {
                Some(self.value_at(model, j - 1, ledger)?)
            } else {
                None
            };
            let value = self.value_at(model, j, ledger)?;
            let bound = model.estimated_error(j, value, coarser);
            if j == target || bound <= full || bound <= (value - y).abs() {
                return Ok(LevelledValue {
                    value,
                    level: j,
                    error_bound: bound,
                    cost: ledger.total_cost() - before,
                });
            }
        }
        unreachable!("loop returns at j == target")
    }
}

/// `G_level(theta)` with its nominal error bound; the cost is charged to `ledger`.
pub fn evaluate_at_level<M: LimitStateModel + ?Sized>(
    model: &M,
    theta: &ParameterVector,
    level: u32,
    ledger: &mut CostLedger,
) -> Result<LevelledValue> {
    check_level(model, level, 1)?;
    check_dim(model, theta)?;
    CachedPoint::new(theta.clone()).plain(model, level, ledger)
}

/// Selective evaluation from scratch: the returned cost covers every level
/// visited.
pub fn selective_evaluate<M: LimitStateModel + ?Sized>(
    model: &M,
    theta: &ParameterVector,
    y: f64,
    target_level: u32,
    ledger: &mut CostLedger,
) -> Result<LevelledValue> {
    check_level(model, target_level, 1)?;
    check_dim(model, theta)?;
    CachedPoint::new(theta.clone()).selective(model, y, target_level, ledger)
}

/// `1{G^y_target <= y}` and the work units it cost.
pub fn indicator_selective<M: LimitStateModel + ?Sized>(
    model: &M,
    theta: &ParameterVector,
    y: f64,
    target_level: u32,
    ledger: &mut CostLedger,
) -> Result<(bool, f64)> {
    let v = selective_evaluate(model, theta, y, target_level, ledger)?;
    Ok((v.value <= y, v.cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::toy::{Kappa, ToyModel};

    fn toy(kappa: Kappa) -> ToyModel {
        ToyModel::new(AccuracySchedule::new(0.5, 2.0, 10).unwrap(), 0.0, 1, kappa)
    }

    fn theta(x: f64) -> ParameterVector {
        ParameterVector::new(vec![x]).unwrap()
    }

    #[test]
    fn toy_level_two_value_and_bound() {
        let m = toy(Kappa::Fixed(1));
        let mut ledger = CostLedger::new();
        let v = evaluate_at_level(&m, &theta(-3.9), 2, &mut ledger).unwrap();
        assert!((v.value - (-3.65)).abs() < 1e-15);
        assert_eq!(v.error_bound, 0.25);
        assert_eq!(v.cost, 16.0);
        assert_eq!(ledger.count(2), 1);
    }

    #[test]
    fn finest_level_bound_is_gamma_to_max() {
        let m = toy(Kappa::Hashed(3));
        let mut ledger = CostLedger::new();
        let v = evaluate_at_level(&m, &theta(0.3), 10, &mut ledger).unwrap();
        assert_eq!(v.error_bound, 0.5f64.powi(10));
    }

    #[test]
    fn level_three_costs_sixty_four() {
        let m = toy(Kappa::Fixed(-1));
        let mut ledger = CostLedger::new();
        let v = evaluate_at_level(&m, &theta(1.0), 3, &mut ledger).unwrap();
        assert_eq!(v.cost, 64.0);
        assert_eq!(ledger.total_cost(), 64.0);
    }

    #[test]
    fn invalid_level_and_input_are_rejected() {
        let m = toy(Kappa::Fixed(1));
        let mut ledger = CostLedger::new();
        assert!(matches!(
            evaluate_at_level(&m, &theta(0.0), 0, &mut ledger),
            Err(Error::InvalidLevel { .. })
        ));
        assert!(matches!(
            evaluate_at_level(&m, &theta(0.0), 11, &mut ledger),
            Err(Error::InvalidLevel { .. })
        ));
        assert!(ParameterVector::new(vec![f64::NAN]).is_err());
        assert!(ParameterVector::new(vec![]).is_err());
        let wrong = ParameterVector::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            evaluate_at_level(&m, &wrong, 1, &mut ledger),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(ledger.is_empty());
    }

    #[test]
    fn selective_stops_once_certified() {
        let m = toy(Kappa::Fixed(1));
        let mut ledger = CostLedger::new();
        let v = selective_evaluate(&m, &theta(2.0), 0.0, 10, &mut ledger).unwrap();
        assert_eq!(v.level, 1);
        assert_eq!(v.value, 2.5);
        assert_eq!(v.cost, 4.0);
    }

    #[test]
    fn selective_tie_counts_as_certified() {
        // |G_1 - y| = gamma^1 exactly: ties stop the walk at level 1.
        for k in [Kappa::Fixed(1), Kappa::Fixed(-1)] {
            let m = toy(k);
            let mut ledger = CostLedger::new();
            let v = selective_evaluate(&m, &theta(0.0), 0.0, 10, &mut ledger).unwrap();
            assert_eq!(v.level, 1);
            assert_eq!(v.error_bound, 0.5);
            assert!((m.exact(&theta(0.0)).unwrap() - v.value).abs() <= v.error_bound);
        }
    }

    #[test]
    fn selective_refines_near_threshold_and_charges_every_level() {
        let m = toy(Kappa::Fixed(1));
        let mut ledger = CostLedger::new();
        // G = 0.01, y = 0: |G_j - y| = 0.01 + 2^-j, certified once 2^-j <= 0.01 + 2^-j: j = 1.
        // Use a point just on the other side of y so that G_j crosses it.
        let v = selective_evaluate(&m, &theta(-0.3), 0.0, 6, &mut ledger).unwrap();
        // j=1: G_1 = 0.2, |0.2| < 0.5; j=2: G_2 = -0.05, |.| < 0.25; j=3: G_3 = -0.175 >= 0.125.
        assert_eq!(v.level, 3);
        assert_eq!(v.cost, 4.0 + 16.0 + 64.0);
        assert_eq!(ledger.count(1), 1);
        assert_eq!(ledger.count(2), 1);
        assert_eq!(ledger.count(3), 1);
    }

    #[test]
    fn indicator_far_from_threshold_stops_at_level_one() {
        let m = toy(Kappa::Hashed(11));
        let mut ledger = CostLedger::new();
        let (ind, cost) = indicator_selective(&m, &theta(-5.0), 0.0, 8, &mut ledger).unwrap();
        assert!(ind);
        assert_eq!(cost, 4.0);
        let (ind, cost) = indicator_selective(&m, &theta(5.0), 0.0, 8, &mut ledger).unwrap();
        assert!(!ind);
        assert_eq!(cost, 4.0);
    }

    #[test]
    fn cached_point_charges_each_level_once() {
        let m = toy(Kappa::Hashed(1));
        let mut ledger = CostLedger::new();
        let mut p = CachedPoint::new(theta(0.01));
        p.selective(&m, 0.0, 5, &mut ledger).unwrap();
        let after_first = ledger.total_cost();
        p.selective(&m, 0.0, 5, &mut ledger).unwrap();
        p.plain(&m, 2, &mut ledger).unwrap();
        assert_eq!(ledger.total_cost(), after_first);
    }

    #[test]
    fn ledger_merge_examples() {
        let empty = CostLedger::new();
        assert_eq!(ledger_merge(&empty, &empty), empty);
        let mut x = CostLedger::new();
        x.charge(1, 4.0);
        x.charge(1, 4.0);
        x.charge(1, 4.0);
        assert_eq!(ledger_merge(&x, &empty), x);
        let mut y = CostLedger::new();
        y.charge(1, 4.0);
        y.charge(1, 4.0);
        let m = ledger_merge(&x, &y);
        assert_eq!(m.count(1), 5);
        assert_eq!(m.total_cost(), 20.0);
        assert_eq!(m.cost(1), 20.0);
    }

    #[test]
    fn level_for_tolerance_matches_nominal_bound() {
        let s = AccuracySchedule::new(0.5, 2.0, 20).unwrap();
        assert_eq!(s.level_for_tolerance(0.4), 2);
        assert_eq!(s.level_for_tolerance(0.2), 3);
        assert_eq!(s.level_for_tolerance(0.1), 4);
        assert_eq!(s.level_for_tolerance(0.05), 5);
        assert_eq!(s.level_for_tolerance(2.0), 1);
    }
}
