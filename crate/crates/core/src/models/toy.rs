//! Gaussian toy model: `G(theta) = theta_1 - barrier` and
//! `G_l = G + kappa * gamma^l` with `kappa` uniform on `{-1, +1}`.
//!
//! The sign `kappa` is a pure function of `(seed, theta, level)`, drawn by
//! hashing the bit pattern of the point, so repeated evaluations agree.

use crate::error::Result;
use crate::hierarchy::{AccuracySchedule, LimitStateModel, ParameterVector};
use crate::rng::{derive_seed, mix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kappa {
    /// Pseudo-random sign keyed by (seed, theta, level).
    Hashed(u64),
    /// The same sign everywhere; for hand-checked examples.
    Fixed(i8),
}

#[derive(Debug, Clone)]
pub struct ToyModel {
    schedule: AccuracySchedule,
    barrier: f64,
    dim: usize,
    kappa: Kappa,
}

impl ToyModel {
    /// `barrier` is the failure level of `theta_1`; `dim` may exceed one, in
    /// which case the extra coordinates are inert.
    pub fn new(schedule: AccuracySchedule, barrier: f64, dim: usize, kappa: Kappa) -> Self {
        Self { schedule, barrier, dim: dim.max(1), kappa }
    }

    /// `gamma = 1/2`, `q = 2`, failure when `theta_1 <= -3.8`.
    pub fn standard(max_level: u32, seed: u64) -> Result<Self> {
        Ok(Self::new(AccuracySchedule::new(0.5, 2.0, max_level)?, -3.8, 1, Kappa::Hashed(seed)))
    }

    pub fn barrier(&self) -> f64 {
        self.barrier
    }

    pub fn kappa(&self, theta: &ParameterVector, level: u32) -> f64 {
        match self.kappa {
            Kappa::Fixed(k) => {
                if k >= 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Kappa::Hashed(seed) => {
                let h = theta
                    .coords()
                    .iter()
                    .fold(derive_seed(seed, &[level as u64]), |acc, c| mix64(acc ^ c.to_bits()));
                if h >> 63 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

impl LimitStateModel for ToyModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn schedule(&self) -> &AccuracySchedule {
        &self.schedule
    }

    fn level_value(&self, theta: &ParameterVector, level: u32) -> Result<f64> {
        let g = theta[0] - self.barrier;
        Ok(g + self.kappa(theta, level) * self.schedule.error_bound(level))
    }

    fn exact(&self, theta: &ParameterVector) -> Option<f64> {
        Some(theta[0] - self.barrier)
    }
}
