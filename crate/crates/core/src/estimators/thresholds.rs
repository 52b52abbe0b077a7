//! Intermediate failure thresholds and the accuracy levels attached to them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::AccuracySchedule;
use crate::shaking::{Membership, SubsetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    ClassicalFixed,
    ClassicalAdaptiveP0,
    MultilevelLemma,
}

/// Thresholds `y_0 = inf > y_1 > ... > y_K = 0` and levels `l_1..l_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSchedule {
    thresholds: Vec<f64>,
    levels: Vec<u32>,
    mode: ScheduleMode,
}

impl ThresholdSchedule {
    /// `thresholds` lists `y_1..y_K`; `y_0 = inf` is implied.
    pub fn new(thresholds: &[f64], levels: &[u32], mode: ScheduleMode) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::Config("a threshold schedule needs at least one subset".into()));
        }
        if thresholds.len() != levels.len() {
            return Err(Error::Config(format!(
                "{} thresholds but {} levels",
                thresholds.len(),
                levels.len()
            )));
        }
        if *thresholds.last().unwrap() != 0.0 {
            return Err(Error::Config("the last threshold must be 0".into()));
        }
        if thresholds.iter().any(|y| !y.is_finite()) || thresholds.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Config(format!("thresholds {thresholds:?} must be finite and strictly decreasing")));
        }
        if levels.windows(2).any(|w| w[0] > w[1]) || levels[0] < 1 {
            return Err(Error::Config(format!("levels {levels:?} must be >= 1 and non-decreasing")));
        }
        let mut all = Vec::with_capacity(thresholds.len() + 1);
        all.push(f64::INFINITY);
        all.extend_from_slice(thresholds);
        Ok(Self { thresholds: all, levels: levels.to_vec(), mode })
    }

    /// Fixed thresholds, all at the finest level `level`.
    pub fn classical(thresholds: &[f64], level: u32) -> Result<Self> {
        Self::new(thresholds, &vec![level; thresholds.len()], ScheduleMode::ClassicalFixed)
    }

    /// Number of subsets `K`.
    pub fn k(&self) -> usize {
        self.levels.len()
    }

    /// `y_0..y_K`.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// `l_1..l_K`.
    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn finest_level(&self) -> u32 {
        *self.levels.last().unwrap()
    }

    /// Subset `F_j` for `j = 0..=K`; `F_0` is the whole space.
    pub fn subset(&self, j: usize, membership: Membership) -> SubsetSpec {
        if j == 0 {
            SubsetSpec::whole_space()
        } else {
            SubsetSpec::new(self.thresholds[j], self.levels[j - 1], membership)
        }
    }

    /// Checks `y_{j-1} - y_j >= 2 gamma^{l_j}` for every finite pair.
    pub fn check_selective_spacing(&self, gamma: f64) -> Result<()> {
        for j in 2..=self.k() {
            let gap = self.thresholds[j - 1] - self.thresholds[j];
            let need = 2.0 * gamma.powi(self.levels[j - 1] as i32);
            if gap < need * (1.0 - 1e-12) {
                return Err(Error::Config(format!(
                    "thresholds y_{} = {} and y_{j} = {} are closer than 2 gamma^{} = {need}",
                    j - 1,
                    self.thresholds[j - 1],
                    self.thresholds[j],
                    self.levels[j - 1]
                )));
            }
        }
        Ok(())
    }

    /// Checks `y_j >= y_{j+1} + gamma^{l_j} + gamma^{l_{j+1}}`.
    pub fn check_lemma_spacing(&self, gamma: f64) -> Result<()> {
        for j in 1..self.k() {
            let need = gamma.powi(self.levels[j - 1] as i32) + gamma.powi(self.levels[j] as i32);
            if self.thresholds[j] - self.thresholds[j + 1] < need * (1.0 - 1e-12) {
                return Err(Error::Config(format!(
                    "y_{j} - y_{} = {} violates the multilevel spacing {need}",
                    j + 1,
                    self.thresholds[j] - self.thresholds[j + 1]
                )));
            }
        }
        Ok(())
    }
}

/// Thresholds that keep the multilevel subsets nested:
/// `y_K = 0`, `y_j = y_{j+1} + gamma^{l_j} + gamma^{l_{j+1}}`.
pub fn threshold_schedule_lemma(schedule: &AccuracySchedule, levels: &[u32]) -> Result<ThresholdSchedule> {
    let Some(&last) = levels.last() else {
        return Err(Error::Config("level list is empty".into()));
    };
    if last != schedule.max_level() {
        return Err(Error::Config(format!(
            "the last level {last} must equal the finest level {}",
            schedule.max_level()
        )));
    }
    let k = levels.len();
    let mut y = vec![0.0; k];
    for j in (0..k - 1).rev() {
        y[j] = y[j + 1] + schedule.error_bound(levels[j]) + schedule.error_bound(levels[j + 1]);
    }
    ThresholdSchedule::new(&y, levels, ScheduleMode::MultilevelLemma)
}

/// An intermediate threshold chosen from samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveThreshold {
    pub y: f64,
    /// The quantile reached the target; `y` was clamped to it.
    pub is_final: bool,
}

/// The `ceil(p0 N)`-th smallest sample, clamped to `target` from above.
pub fn adaptive_threshold(samples: &[f64], p0: f64, target: f64) -> Result<AdaptiveThreshold> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples to choose a threshold from".into()));
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::InvalidInput(format!("p0 must lie in (0,1), got {p0}")));
    }
    let rank = ((p0 * samples.len() as f64).ceil() as usize).clamp(1, samples.len());
    let mut v = samples.to_vec();
    let (_, q, _) = v.select_nth_unstable_by(rank - 1, f64::total_cmp);
    let q = *q;
    Ok(if q <= target { AdaptiveThreshold { y: target, is_final: true } } else { AdaptiveThreshold { y: q, is_final: false } })
}

/// [`adaptive_threshold`] with the failure threshold 0 as target.
pub fn adaptive_thresholds_p0(samples: &[f64], p0: f64) -> Result<AdaptiveThreshold> {
    adaptive_threshold(samples, p0, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn lemma_examples() {
        let s = AccuracySchedule::new(0.5, 2.0, 3).unwrap();
        let t = threshold_schedule_lemma(&s, &[1, 2, 3]).unwrap();
        assert_eq!(t.thresholds(), &[f64::INFINITY, 1.125, 0.375, 0.0]);
        let s = AccuracySchedule::new(0.25, 2.0, 4).unwrap();
        let t = threshold_schedule_lemma(&s, &[2, 3, 4]).unwrap();
        assert_eq!(t.thresholds()[2], 0.019_531_25);
        assert_eq!(t.thresholds()[1], 0.097_656_25);
        let s = AccuracySchedule::new(0.5, 2.0, 4).unwrap();
        let t = threshold_schedule_lemma(&s, &[4]).unwrap();
        assert_eq!(t.thresholds(), &[f64::INFINITY, 0.0]);
        assert!(threshold_schedule_lemma(&s, &[]).is_err());
        assert!(threshold_schedule_lemma(&s, &[1, 2]).is_err());
        assert!(threshold_schedule_lemma(&s, &[3, 2, 4]).is_err());
    }

    #[test]
    fn lemma_schedules_satisfy_both_spacings() {
        let s = AccuracySchedule::new(0.5, 2.0, 6).unwrap();
        let t = threshold_schedule_lemma(&s, &[1, 2, 3, 4, 5, 6]).unwrap();
        t.check_lemma_spacing(0.5).unwrap();
        t.check_selective_spacing(0.5).unwrap();
        let tight = ThresholdSchedule::new(&[0.1, 0.0], &[2, 2], ScheduleMode::ClassicalFixed).unwrap();
        assert!(tight.check_selective_spacing(0.5).is_err());
        assert!(tight.check_lemma_spacing(0.5).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(ThresholdSchedule::classical(&[1.0, 0.5], 3).is_err());
        assert!(ThresholdSchedule::classical(&[0.5, 1.0, 0.0], 3).is_err());
        assert!(ThresholdSchedule::classical(&[], 3).is_err());
        let t = ThresholdSchedule::classical(&[2.5, 1.8, 1.0, 0.5, 0.0], 4).unwrap();
        assert_eq!(t.k(), 5);
        assert!(t.subset(0, Membership::Plain).is_whole_space());
        assert_eq!(t.subset(3, Membership::Plain).threshold, 1.0);
    }

    #[test]
    fn adaptive_examples() {
        let s: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(adaptive_thresholds_p0(&s, 0.2).unwrap(), AdaptiveThreshold { y: 2.0, is_final: false });
        let neg = [-3.0, -1.0, -2.0];
        assert_eq!(adaptive_thresholds_p0(&neg, 0.5).unwrap(), AdaptiveThreshold { y: 0.0, is_final: true });
        assert!(adaptive_thresholds_p0(&[], 0.2).is_err());
    }

    #[test]
    fn adaptive_quantile_of_normal_draws() {
        let mut rng = stream(21, &[]);
        let s: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        // target far below the quantile so the clamp to the target stays inactive
        let a = adaptive_threshold(&s, 0.1, -10.0).unwrap();
        assert!(!a.is_final);
        let y = a.y;
        let z = Normal::new(0.0, 1.0).unwrap();
        let q = z.inverse_cdf(0.1);
        // asymptotic s.e. of a sample quantile: sqrt(p(1-p)/n) / pdf(q)
        let se = (0.1f64 * 0.9 / 500.0).sqrt() / (-q * q / 2.0).exp() * (2.0 * std::f64::consts::PI).sqrt();
        assert!((y - q).abs() < 3.0 * se, "{y} vs {q}");
    }
}
