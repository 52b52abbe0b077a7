//! Running minimum of a Brownian path on `[0, 1]`.
//!
//! The path is synthesised from a truncated Karhunen–Loève expansion
//!
//! ```text
//! B_t = sum_i xi_i phi_i(t),  xi_i ~ N(0, (i - 1/2)^-2),  phi_i(t) = sqrt(2)/pi sin((i - 1/2) pi t)
//! ```
//!
//! with `xi_i = theta_i / (i - 1/2)`. Level `l` takes the minimum over the
//! dyadic grid `{k / 2^l}`, so `G_l = min_{T_l} B + barrier` is non-increasing
//! in `l`.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::hierarchy::{AccuracySchedule, LimitStateModel, ParameterVector};

#[derive(Debug, Clone)]
pub struct BrownianModel {
    schedule: AccuracySchedule,
    kl_terms: usize,
    barrier: f64,
    // weights[k * kl_terms + i] = phi_i(k / 2^L) / (i - 1/2), k over the finest grid
    weights: Vec<f64>,
}

impl BrownianModel {
    /// `gamma = 2^-1/2`; cost per level is the number of grid points.
    pub fn new(kl_terms: usize, max_level: u32, barrier: f64) -> Result<Self> {
        if kl_terms == 0 {
            return Err(Error::InvalidInput("kl_terms must be >= 1".into()));
        }
        if max_level > 24 {
            return Err(Error::InvalidInput(format!("max_level {max_level} is too fine")));
        }
        let schedule = AccuracySchedule::new(SQRT_2.recip(), 2.0, max_level)?;
        let n = 1usize << max_level;
        let mut weights = Vec::with_capacity((n + 1) * kl_terms);
        for k in 0..=n {
            let t = k as f64 / n as f64;
            for i in 1..=kl_terms {
                let w = i as f64 - 0.5;
                weights.push(SQRT_2 / PI * (w * PI * t).sin() / w);
            }
        }
        Ok(Self { schedule, kl_terms, barrier, weights })
    }

    pub fn kl_terms(&self) -> usize {
        self.kl_terms
    }

    /// Path value at grid index `k` of the finest grid.
    fn path_at(&self, theta: &[f64], k: usize) -> f64 {
        let row = &self.weights[k * self.kl_terms..(k + 1) * self.kl_terms];
        dot(row, theta)
    }

    /// Path values on the level-`level` dyadic grid.
    pub fn path(&self, theta: &ParameterVector, level: u32) -> Result<Vec<f64>> {
        if level > self.schedule.max_level() {
            return Err(Error::InvalidLevel { level, min: 0, max: self.schedule.max_level() });
        }
        let stride = 1usize << (self.schedule.max_level() - level);
        let n = 1usize << self.schedule.max_level();
        Ok((0..=n).step_by(stride).map(|k| self.path_at(theta.coords(), k)).collect())
    }
}

/// Four independent partial sums so the loop vectorises.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (a4, b4) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = a4.remainder().iter().zip(b4.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in a4.zip(b4) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl LimitStateModel for BrownianModel {
    fn dim(&self) -> usize {
        self.kl_terms
    }

    fn schedule(&self) -> &AccuracySchedule {
        &self.schedule
    }

    fn level_value(&self, theta: &ParameterVector, level: u32) -> Result<f64> {
        let stride = 1usize << (self.schedule.max_level() - level);
        let n = 1usize << self.schedule.max_level();
        let min = (0..=n)
            .step_by(stride)
            .map(|k| self.path_at(theta.coords(), k))
            .fold(f64::INFINITY, f64::min);
        Ok(min + self.barrier)
    }

    fn level_cost(&self, level: u32) -> f64 {
        ((1u64 << level) + 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn zero_path_gives_barrier_at_every_level() {
        let m = BrownianModel::new(16, 8, 4.0).unwrap();
        let t = ParameterVector::zeros(16);
        for l in 1..=8 {
            assert_eq!(m.level_value(&t, l).unwrap(), 4.0);
        }
    }

    #[test]
    fn single_term_hand_values() {
        // xi_1 = -1 means theta_1 = -1/2.
        let m = BrownianModel::new(1, 1, 4.0).unwrap();
        let t = ParameterVector::new(vec![-0.5]).unwrap();
        let path = m.path(&t, 1).unwrap();
        assert!(path[0].abs() < 1e-15);
        assert!((path[1] + 1.0 / PI).abs() < 1e-14);
        assert!((path[2] + SQRT_2 / PI).abs() < 1e-14);
        let g = m.level_value(&t, 1).unwrap();
        assert!((g - (4.0 - SQRT_2 / PI)).abs() < 1e-14);
        assert!((g - 3.5498).abs() < 1e-4);
    }

    #[test]
    fn finer_grids_never_raise_the_minimum() {
        let m = BrownianModel::new(64, 10, 4.0).unwrap();
        let mut rng = stream(1, &[]);
        for _ in 0..200 {
            let t = ParameterVector::standard_normal(64, &mut rng);
            let mut prev = f64::INFINITY;
            for l in 1..=10 {
                let g = m.level_value(&t, l).unwrap();
                assert!(g <= prev);
                prev = g;
            }
        }
    }

    #[test]
    fn terminal_variance_is_one() {
        // Var B_1 = sum_i 2 / (pi^2 (i - 1/2)^2) -> 1.
        let m = BrownianModel::new(256, 4, 0.0).unwrap();
        let var: f64 = (1..=256)
            .map(|i| {
                let w = i as f64 - 0.5;
                let phi = SQRT_2 / PI * (w * PI).sin() / w;
                phi * phi
            })
            .sum();
        assert!((var - 1.0).abs() < 2e-3);
        let t = ParameterVector::zeros(256);
        assert_eq!(m.path(&t, 4).unwrap().len(), 17);
    }
}
