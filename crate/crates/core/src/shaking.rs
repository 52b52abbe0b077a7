//! Gaussian shaking transformation and Parallel One-Path chains.
//!
//! `S_eta(x, y) = sqrt(1 - eta^2) x + eta y` maps a pair of independent
//! standard normals to a standard normal and is exchangeable with its input,
//! so the rejection chain `x -> S(x, Y)` if the proposal stays in the
//! current subset (and `x` otherwise) leaves `N(0, I)` conditioned on that
//! subset invariant.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{CachedPoint, CostLedger, LimitStateModel, ParameterVector};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShakingConfig {
    pub eta: f64,
    pub rng_seed: u64,
    pub dim: usize,
}

impl ShakingConfig {
    pub fn new(eta: f64, rng_seed: u64, dim: usize) -> Result<Self> {
        check_eta(eta)?;
        Ok(Self { eta, rng_seed, dim })
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidInput(format!("eta must lie in [0,1], got {eta}")));
    }
    Ok(())
}

/// `sqrt(1 - eta^2) theta + eta noise`, componentwise.
pub fn shake(theta: &ParameterVector, noise: &ParameterVector, eta: f64) -> Result<ParameterVector> {
    check_eta(eta)?;
    if theta.dim() != noise.dim() {
        return Err(Error::DimensionMismatch { expected: theta.dim(), found: noise.dim() });
    }
    let c = (1.0 - eta * eta).sqrt();
    ParameterVector::new(theta.coords().iter().zip(noise.coords()).map(|(x, y)| c * x + eta * y).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Membership {
    /// `G_level <= y`.
    Plain,
    /// `G^y_level <= y` with selective refinement.
    Selective,
}

/// `{G <= threshold}` evaluated at `level`; an infinite threshold is the
/// whole space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub threshold: f64,
    pub level: u32,
    pub membership: Membership,
}

impl SubsetSpec {
    pub fn new(threshold: f64, level: u32, membership: Membership) -> Self {
        Self { threshold, level, membership }
    }

    pub fn whole_space() -> Self {
        Self { threshold: f64::INFINITY, level: 1, membership: Membership::Plain }
    }

    pub fn is_whole_space(&self) -> bool {
        self.threshold == f64::INFINITY
    }

    /// Membership of `point`, charging any new evaluations to `ledger`.
    pub fn contains<M: LimitStateModel + ?Sized>(
        &self,
        model: &M,
        point: &mut CachedPoint,
        ledger: &mut CostLedger,
    ) -> Result<bool> {
        if self.is_whole_space() {
            return Ok(true);
        }
        let v = match self.membership {
            Membership::Plain => point.plain(model, self.level, ledger)?,
            Membership::Selective => point.selective(model, self.threshold, self.level, ledger)?,
        };
        Ok(v.value <= self.threshold)
    }
}

/// One rejection step from a member of `subset`: returns the proposal if it
/// is a member, `theta` otherwise, with the membership-test cost.
pub fn rejection_step<M: LimitStateModel + ?Sized>(
    theta: &ParameterVector,
    noise: &ParameterVector,
    eta: f64,
    subset: &SubsetSpec,
    model: &M,
    ledger: &mut CostLedger,
) -> Result<(ParameterVector, bool, f64)> {
    let before = ledger.total_cost();
    let mut proposal = CachedPoint::new(shake(theta, noise, eta)?);
    let accepted = subset.contains(model, &mut proposal, ledger)?;
    let cost = ledger.total_cost() - before;
    if accepted {
        Ok((proposal.into_theta(), true, cost))
    } else {
        Ok((theta.clone(), false, cost))
    }
}

/// Trajectory of one chain on one subset.
///
/// `indicators[k]` is membership of `states[k]` in the next subset. When a
/// chain runs without state retention `states` is empty.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ChainRecord {
    pub states: Vec<ParameterVector>,
    pub indicators: Vec<bool>,
    pub accepted: u64,
    pub costs: CostLedger,
    pub first_inner_index: Option<usize>,
}

impl ChainRecord {
    pub fn len(&self) -> usize {
        self.indicators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicators.is_empty()
    }

    /// Mean of the indicators.
    pub fn estimate(&self) -> f64 {
        if self.indicators.is_empty() {
            return 0.0;
        }
        self.indicators.iter().filter(|&&b| b).count() as f64 / self.indicators.len() as f64
    }

    /// Accepted transitions over attempted transitions.
    pub fn acceptance_rate(&self) -> Option<f64> {
        let steps = self.indicators.len().saturating_sub(1);
        (steps > 0).then(|| self.accepted as f64 / steps as f64)
    }
}

/// What a chain scores at every visited state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scoring {
    /// Indicator of membership in the given subset.
    Subset(SubsetSpec),
    /// Plain value at the given level; indicators are left unset until a
    /// threshold is chosen.
    Value(u32),
}

/// What a chain retains besides indicators and costs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChainOptions {
    /// Keep every recorded state with its evaluation cache.
    pub keep_points: bool,
    /// Buffer inner states for [`Chain::take_inner`].
    pub collect_inner: bool,
}

/// A POP chain that can be advanced incrementally.
#[derive(Debug)]
pub struct Chain<'m, M: LimitStateModel + ?Sized> {
    model: &'m M,
    current: SubsetSpec,
    scoring: Scoring,
    previous: Option<SubsetSpec>,
    eta: f64,
    rng: ChaCha8Rng,
    state: CachedPoint,
    state_indicator: bool,
    state_value: f64,
    keep_points: bool,
    points: Vec<CachedPoint>,
    collect_inner: bool,
    inner: Vec<CachedPoint>,
    first_inner: Option<CachedPoint>,
    values: Vec<f64>,
    record: ChainRecord,
    violations: u64,
}

impl<'m, M: LimitStateModel + ?Sized> Chain<'m, M> {
    /// Starts from `seed`, which must belong to `current`. The seed is the
    /// first recorded state.
    ///
    /// With `previous` set, every accepted proposal is also tested against
    /// that enclosing subset (free of charge) and failures are counted as
    /// subset-property violations.
    #[allow(clippy::too_many_arguments)]
    pub fn start(
        model: &'m M,
        seed: CachedPoint,
        current: SubsetSpec,
        scoring: Scoring,
        previous: Option<SubsetSpec>,
        eta: f64,
        rng: ChaCha8Rng,
        options: ChainOptions,
    ) -> Result<Self> {
        check_eta(eta)?;
        let mut chain = Self {
            model,
            current,
            scoring,
            previous,
            eta,
            rng,
            state: seed,
            state_indicator: false,
            state_value: f64::NAN,
            keep_points: options.keep_points,
            points: Vec::new(),
            collect_inner: options.collect_inner,
            inner: Vec::new(),
            first_inner: None,
            values: Vec::new(),
            record: ChainRecord::default(),
            violations: 0,
        };
        if !chain.current.contains(model, &mut chain.state, &mut chain.record.costs)? {
            return Err(Error::Precondition("chain seed is not a member of the current subset".into()));
        }
        chain.score()?;
        chain.push();
        Ok(chain)
    }

    fn score(&mut self) -> Result<()> {
        match self.scoring {
            Scoring::Subset(next) => {
                self.state_indicator = next.contains(self.model, &mut self.state, &mut self.record.costs)?;
            }
            Scoring::Value(level) => {
                self.state_value = self.state.plain(self.model, level, &mut self.record.costs)?.value;
            }
        }
        Ok(())
    }

    fn push(&mut self) {
        let k = self.record.indicators.len();
        if self.state_indicator {
            if self.record.first_inner_index.is_none() {
                self.record.first_inner_index = Some(k);
                self.first_inner = Some(self.state.clone());
            }
            if self.collect_inner {
                self.inner.push(self.state.clone());
            }
        }
        self.record.indicators.push(self.state_indicator);
        if let Scoring::Value(_) = self.scoring {
            self.values.push(self.state_value);
        }
        if self.keep_points {
            self.points.push(self.state.clone());
        }
    }

    /// Performs one transition and records the resulting state.
    pub fn step(&mut self) -> Result<()> {
        let dim = self.state.theta().dim();
        let noise = ParameterVector::standard_normal(dim, &mut self.rng);
        let mut proposal = CachedPoint::new(shake(self.state.theta(), &noise, self.eta)?);
        if self.current.contains(self.model, &mut proposal, &mut self.record.costs)? {
            if let Some(prev) = self.previous {
                let mut probe = proposal.clone();
                if !prev.contains(self.model, &mut probe, &mut CostLedger::new())? {
                    self.violations += 1;
                }
            }
            self.state = proposal;
            self.record.accepted += 1;
            self.score()?;
        }
        self.push();
        Ok(())
    }

    pub fn advance(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.record.indicators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.record.indicators.is_empty()
    }

    pub fn record(&self) -> &ChainRecord {
        &self.record
    }

    pub fn indicators(&self) -> &[bool] {
        &self.record.indicators
    }

    /// Plain values recorded under [`Scoring::Value`].
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Retained states with their evaluation caches.
    pub fn points(&self) -> &[CachedPoint] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [CachedPoint] {
        &mut self.points
    }

    pub fn violations(&self) -> u64 {
        self.violations
    }

    /// The first recorded state scored as a member of the next subset.
    pub fn first_inner(&self) -> Option<&CachedPoint> {
        self.first_inner.as_ref()
    }

    /// Inner states recorded since the last call.
    pub fn take_inner(&mut self) -> Vec<CachedPoint> {
        std::mem::take(&mut self.inner)
    }

    pub fn into_record(self) -> ChainRecord {
        let mut record = self.record;
        record.states = self.points.into_iter().map(CachedPoint::into_theta).collect();
        record
    }
}

/// Runs a chain of `n_steps` recorded states (the seed plus `n_steps - 1`
/// transitions) inside `current`, scoring membership in `next`.
pub fn run_chain<M: LimitStateModel + ?Sized>(
    seed_state: ParameterVector,
    n_steps: usize,
    current: &SubsetSpec,
    next: &SubsetSpec,
    config: &ShakingConfig,
    model: &M,
) -> Result<ChainRecord> {
    if n_steps == 0 {
        return Err(Error::InvalidInput("n_steps must be >= 1".into()));
    }
    if config.dim != seed_state.dim() {
        return Err(Error::DimensionMismatch { expected: config.dim, found: seed_state.dim() });
    }
    let mut chain = Chain::start(
        model,
        CachedPoint::new(seed_state),
        *current,
        Scoring::Subset(*next),
        None,
        config.eta,
        stream(config.rng_seed, &[]),
        ChainOptions { keep_points: true, collect_inner: false },
    )?;
    chain.advance(n_steps - 1)?;
    Ok(chain.into_record())
}

/// Draws `n` standard normal vectors from `rng`.
pub fn draw_iid<R: Rng + ?Sized>(dim: usize, n: usize, rng: &mut R) -> Vec<ParameterVector> {
    (0..n).map(|_| ParameterVector::standard_normal(dim, rng)).collect()
}
