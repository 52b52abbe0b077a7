//! Sampling one conditional level: i.i.d. draws for the first subset, POP
//! chains for the others, grown in lockstep until the c.o.v. budget is met.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::diagnostics::{estimate_autocorrelation, estimate_cov};
use super::thresholds::adaptive_threshold;
use super::{EstimatorConfig, SubsetSummary};
use crate::error::{Error, Result};
use crate::hierarchy::{CachedPoint, CostLedger, LimitStateModel, ParameterVector};
use crate::rng::stream;
use crate::shaking::{Chain, ChainOptions, Membership, Scoring, SubsetSpec};

const RESERVOIR_TAG: u64 = u64::MAX;

/// What the samples of a stage are scored against.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Scorer {
    /// Membership in a known subset.
    Fixed(SubsetSpec),
    /// Plain values at `level`; the threshold is the `p0` quantile unless
    /// that falls to `target`, in which case membership in `final_spec`
    /// is scored instead.
    Adaptive { level: u32, p0: f64, target: f64, final_spec: SubsetSpec },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct StageSpec {
    /// Subset number `j >= 1`, used for stream tags and diagnostics.
    pub index: usize,
    pub current: SubsetSpec,
    pub previous: Option<SubsetSpec>,
    pub scorer: Scorer,
    pub budget: f64,
}

#[derive(Debug)]
pub(crate) struct StageResult {
    pub summary: SubsetSummary,
    pub is_final: bool,
    /// The subset whose membership was scored.
    pub next: SubsetSpec,
    pub seeds: Vec<CachedPoint>,
    pub ledger: CostLedger,
    pub violations: u64,
}

/// Uniform sample of fixed size from a stream of inner states.
struct Reservoir {
    cap: usize,
    seen: usize,
    items: Vec<CachedPoint>,
    rng: ChaCha8Rng,
}

impl Reservoir {
    fn new(cap: usize, rng: ChaCha8Rng) -> Self {
        Self { cap, seen: 0, items: Vec::with_capacity(cap), rng }
    }

    fn offer(&mut self, p: CachedPoint) {
        self.seen += 1;
        if self.items.len() < self.cap {
            self.items.push(p);
        } else {
            let k = self.rng.random_range(0..self.seen);
            if k < self.cap {
                self.items[k] = p;
            }
        }
    }
}

/// `n` items drawn uniformly, without replacement when possible.
fn choose(pool: Vec<CachedPoint>, n: usize, rng: &mut ChaCha8Rng) -> Vec<CachedPoint> {
    if pool.is_empty() || n == 0 {
        return Vec::new();
    }
    if pool.len() >= n {
        let idx = sample(rng, pool.len(), n);
        idx.into_iter().map(|i| pool[i].clone()).collect()
    } else {
        let mut out = pool.clone();
        while out.len() < n {
            out.push(pool[rng.random_range(0..pool.len())].clone());
        }
        out
    }
}

struct Scored {
    p_hat: f64,
    phi: f64,
    threshold: f64,
    level: u32,
    next: SubsetSpec,
}

/// Runs one stage. An empty `seeds` list means i.i.d. sampling from the
/// whole space; otherwise one chain is started per seed.
pub(crate) fn run_stage<M: LimitStateModel + ?Sized>(
    model: &M,
    cfg: &EstimatorConfig,
    spec: &StageSpec,
    seeds: Vec<CachedPoint>,
    n_seeds: usize,
    seed: u64,
) -> Result<StageResult> {
    let j = spec.index as u64;
    let iid = seeds.is_empty();
    let scoring = match spec.scorer {
        Scorer::Fixed(next) => Scoring::Subset(next),
        Scorer::Adaptive { level, .. } => Scoring::Value(level),
    };
    let adaptive = matches!(spec.scorer, Scorer::Adaptive { .. });
    let options = ChainOptions { keep_points: adaptive, collect_inner: !adaptive && n_seeds > 1 };
    let mut chains = Vec::new();
    if iid {
        let mut rng = stream(seed, &[j, 0]);
        let first = CachedPoint::new(ParameterVector::standard_normal(model.dim(), &mut rng));
        chains.push(Chain::start(model, first, SubsetSpec::whole_space(), scoring, None, 1.0, rng, options)?);
    } else {
        for (c, s) in seeds.into_iter().enumerate() {
            let rng = stream(seed, &[j, c as u64]);
            chains.push(Chain::start(model, s, spec.current, scoring, spec.previous, cfg.eta, rng, options)?);
        }
    }
    let n_c = chains.len();
    let mut reservoir = Reservoir::new(n_seeds, stream(seed, &[j, RESERVOIR_TAG]));
    let mut ledger = CostLedger::new();
    let mut final_inds: Vec<Vec<bool>> = vec![Vec::new(); n_c];
    let mut is_final = false;
    let mut target_total = cfg.n_min.max(n_c);

    let (scored, total, cov) = loop {
        let len = target_total.div_ceil(n_c).max(1);
        for chain in chains.iter_mut() {
            if chain.len() < len {
                chain.advance(len - chain.len())?;
            }
            for p in chain.take_inner() {
                reservoir.offer(p);
            }
        }
        let total = n_c * len;
        let scored = match spec.scorer {
            Scorer::Fixed(next) => {
                let inds: Vec<&[bool]> = chains.iter().map(|c| c.indicators()).collect();
                let hits: usize = inds.iter().map(|c| c.iter().filter(|&&b| b).count()).sum();
                let phi = if iid { 0.0 } else { estimate_autocorrelation(&inds)?.phi };
                Scored { p_hat: hits as f64 / total as f64, phi, threshold: next.threshold, level: next.level, next }
            }
            Scorer::Adaptive { level, p0, target, final_spec } => {
                if !is_final {
                    let all: Vec<f64> = chains.iter().flat_map(|c| c.values().iter().copied()).collect();
                    let t = adaptive_threshold(&all, p0, target)?;
                    is_final = t.is_final;
                    if !is_final {
                        let inds: Vec<Vec<bool>> =
                            chains.iter().map(|c| c.values().iter().map(|&v| v <= t.y).collect()).collect();
                        let hits: usize = inds.iter().map(|c| c.iter().filter(|&&b| b).count()).sum();
                        let phi = if iid { 0.0 } else { estimate_autocorrelation(&inds)?.phi };
                        let next = SubsetSpec::new(t.y, level, Membership::Plain);
                        Scored { p_hat: hits as f64 / total as f64, phi, threshold: t.y, level, next }
                    } else {
                        score_final(model, &mut chains, &mut final_inds, final_spec, iid, total, &mut ledger)?
                    }
                } else {
                    score_final(model, &mut chains, &mut final_inds, final_spec, iid, total, &mut ledger)?
                }
            }
        };
        let cov = estimate_cov(scored.p_hat, total, scored.phi);
        if cov * cov <= spec.budget || total >= cfg.n_max {
            break (scored, total, cov);
        }
        let next = if scored.p_hat > 0.0 {
            let required = (total as f64 * cov * cov / spec.budget * 1.05).ceil() as usize;
            required.clamp(total + total / 10 + 1, 4 * total)
        } else {
            4 * total
        };
        target_total = next.min(cfg.n_max).max(total + 1);
    };

    if scored.p_hat == 0.0 {
        return Err(Error::Aborted {
            subset: spec.index,
            reason: format!("no sample reached y = {} after {total} samples", scored.threshold),
        });
    }

    let mut violations = 0;
    let mut accepted = 0u64;
    let mut transitions = 0usize;
    for chain in &chains {
        ledger.absorb(&chain.record().costs);
        violations += chain.violations();
        accepted += chain.record().accepted;
        transitions += chain.len() - 1;
    }
    let mut pick_rng = stream(seed, &[j, RESERVOIR_TAG, 1]);
    let out_seeds = if n_seeds == 0 {
        Vec::new()
    } else if adaptive {
        let mut pool = Vec::new();
        for (c, chain) in chains.iter().enumerate() {
            for (k, p) in chain.points().iter().enumerate() {
                let inner = if is_final { final_inds[c][k] } else { chain.values()[k] <= scored.threshold };
                if inner {
                    pool.push(p.clone());
                }
            }
        }
        choose(pool, n_seeds, &mut pick_rng)
    } else if n_seeds == 1 {
        chains.iter().find_map(|c| c.first_inner().cloned()).into_iter().collect()
    } else {
        choose(reservoir.items, n_seeds, &mut pick_rng)
    };

    let summary = SubsetSummary {
        threshold: scored.threshold,
        level: scored.level,
        p_hat: scored.p_hat,
        n: total,
        acceptance: (!iid && transitions > 0).then(|| accepted as f64 / transitions as f64),
        phi: scored.phi,
        cov,
        cost: ledger.total_cost(),
    };
    Ok(StageResult {
        summary,
        is_final: !adaptive || is_final,
        next: scored.next,
        seeds: out_seeds,
        ledger,
        violations,
    })
}

fn score_final<M: LimitStateModel + ?Sized>(
    model: &M,
    chains: &mut [Chain<'_, M>],
    final_inds: &mut [Vec<bool>],
    final_spec: SubsetSpec,
    iid: bool,
    total: usize,
    ledger: &mut CostLedger,
) -> Result<Scored> {
    for (chain, inds) in chains.iter_mut().zip(final_inds.iter_mut()) {
        let points = chain.points_mut();
        for k in inds.len()..points.len() {
            // a rejected move repeats the previous state: reuse its result
            if k > 0 && points[k].theta() == points[k - 1].theta() {
                points[k] = points[k - 1].clone();
                let prev = inds[k - 1];
                inds.push(prev);
            } else {
                inds.push(final_spec.contains(model, &mut points[k], ledger)?);
            }
        }
    }
    let hits: usize = final_inds.iter().map(|c| c.iter().filter(|&&b| b).count()).sum();
    let phi = if iid { 0.0 } else { estimate_autocorrelation(final_inds)?.phi };
    Ok(Scored {
        p_hat: hits as f64 / total as f64,
        phi,
        threshold: final_spec.threshold,
        level: final_spec.level,
        next: final_spec,
    })
}
