//! Stationary Darcy flow with a log-normal permeability.
//!
//! `-div(A grad u) = 0` on the unit square, `u = 0` on the left edge, `u = 1`
//! on the right edge, no flux through top and bottom. The limit state is
//! `G = y_crit - mean_B(u)`, so failure means the mean pressure head over
//! the box `B` reaches `y_crit`.
//!
//! Mesh level `k` has edge length `2^-(k+2)`. Accuracy level `l` is mesh
//! level `l`; level 0 (`h = 1/4`) exists only as the coarse partner for the
//! two-level error estimate at level 1. The error of `G_k` is estimated by
//! `C gamma |G_k - G_{k-1}|`, i.e. the two-level estimate
//! `C |G_{k+1} - G_k|` with the unseen increment predicted by one factor of
//! `gamma`. The default `C = (1 - gamma)^-1`.

pub mod fem;
pub mod kl;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{AccuracySchedule, LevelledValue, LimitStateModel, ParameterVector};

pub use fem::{FemSolution, Mesh, Rect};
pub use kl::KlField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DarcyConfig {
    pub tau: f64,
    pub alpha: f64,
    /// Modes `0 <= i, j <= kl_max_index` are retained.
    pub kl_max_index: usize,
    pub y_crit: f64,
    pub gamma: f64,
    pub max_level: u32,
    pub qoi_box: [f64; 4],
    /// Multiplier of the two-level increment in the error estimate.
    pub error_constant: Option<f64>,
    /// Work units per solve on mesh levels `1..=max_level`; level 0 costs
    /// `costs[0] / 16`.
    pub costs: Vec<f64>,
}

impl Default for DarcyConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            alpha: 1.0,
            kl_max_index: 16,
            y_crit: 0.92,
            gamma: 0.25,
            max_level: 4,
            qoi_box: [0.4, 0.6, 0.9, 0.99],
            error_constant: None,
            costs: vec![1.0, 16.0, 256.0, 4096.0],
        }
    }
}

impl DarcyConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.tau > 0.0) {
            errs.push(format!("darcy.tau must be > 0, got {}", self.tau));
        }
        if !(self.alpha > 0.0) {
            errs.push(format!("darcy.alpha must be > 0, got {}", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            errs.push(format!("darcy.gamma must lie in (0,1), got {}", self.gamma));
        }
        if !(1..=7).contains(&self.max_level) {
            errs.push(format!("darcy.max_level must lie in 1..=7, got {}", self.max_level));
        }
        if self.costs.len() != self.max_level as usize {
            errs.push(format!("darcy.costs needs {} entries, got {}", self.max_level, self.costs.len()));
        }
        if self.costs.iter().any(|c| !(*c > 0.0)) {
            errs.push("darcy.costs must be positive".into());
        }
        let [x0, x1, y0, y1] = self.qoi_box;
        if !(0.0 <= x0 && x0 < x1 && x1 <= 1.0 && 0.0 <= y0 && y0 < y1 && y1 <= 1.0) {
            errs.push(format!("darcy.qoi_box {:?} is not a sub-rectangle of the unit square", self.qoi_box));
        }
        if let Some(c) = self.error_constant {
            if !(c > 0.0) {
                errs.push(format!("darcy.error_constant must be > 0, got {c}"));
            }
        }
        errs
    }
}

/// Mesh plus cosine tables at the element centroids for one level.
#[derive(Debug)]
struct LevelData {
    mesh: Mesh,
    table: Vec<f64>,
}

#[derive(Debug)]
pub struct DarcyModel {
    config: DarcyConfig,
    schedule: AccuracySchedule,
    field: KlField,
    error_constant: f64,
    levels: Vec<LevelData>,
}

/// Outcome of refining until the two-level estimate certifies the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeEvaluation {
    pub value: LevelledValue,
    pub certified: bool,
}

impl DarcyModel {
    pub fn new(config: DarcyConfig) -> Result<Self> {
        let errs = config.validate();
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        let schedule = AccuracySchedule::new(config.gamma, 2.0, config.max_level)?;
        let field = KlField::new(config.kl_max_index, config.tau, config.alpha)?;
        let [x0, x1, y0, y1] = config.qoi_box;
        let qoi = Rect { x0, x1, y0, y1 };
        let levels = (0..=config.max_level)
            .map(|k| {
                let mesh = Mesh::new(4usize << k, qoi)?;
                let table = field.basis_table(mesh.centroid_coords());
                Ok(LevelData { mesh, table })
            })
            .collect::<Result<Vec<_>>>()?;
        let error_constant = config.error_constant.unwrap_or(1.0 / (1.0 - config.gamma));
        Ok(Self { config, schedule, field, error_constant, levels })
    }

    pub fn config(&self) -> &DarcyConfig {
        &self.config
    }

    pub fn field(&self) -> &KlField {
        &self.field
    }

    pub fn mesh(&self, level: u32) -> Result<&Mesh> {
        self.levels
            .get(level as usize)
            .map(|l| &l.mesh)
            .ok_or(Error::InvalidLevel { level, min: 0, max: self.config.max_level })
    }

    pub fn error_constant(&self) -> f64 {
        self.error_constant
    }

    /// Permeability at the element centroids of mesh `level`.
    pub fn coefficients(&self, theta: &ParameterVector, level: u32) -> Result<Vec<f64>> {
        let data = self.levels.get(level as usize).ok_or(Error::InvalidLevel {
            level,
            min: 0,
            max: self.config.max_level,
        })?;
        let ncoord = data.mesh.centroid_coords().len();
        let log = self.field.log_on_grid(theta, &data.table, &data.table)?;
        Ok(data.mesh.centroid_index().iter().map(|&(a, b)| log[a * ncoord + b].exp()).collect())
    }

    pub fn fem_solve(&self, theta: &ParameterVector, level: u32) -> Result<FemSolution> {
        let coeff = self.coefficients(theta, level)?;
        self.mesh(level)?.solve(&coeff)
    }

    /// Mean of `u_h` over the box on mesh `level`.
    pub fn qoi(&self, theta: &ParameterVector, level: u32) -> Result<f64> {
        let sol = self.fem_solve(theta, level)?;
        Ok(self.mesh(level)?.box_mean(&sol.u))
    }

    /// `C |G_{k+1} - G_k|`.
    pub fn hierarchical_error_estimate(&self, theta: &ParameterVector, level: u32) -> Result<f64> {
        if level >= self.config.max_level {
            return Err(Error::InvalidLevel { level, min: 0, max: self.config.max_level - 1 });
        }
        let fine = self.level_value(theta, level + 1)?;
        let coarse = self.level_value(theta, level)?;
        Ok(self.increment_estimate(fine - coarse))
    }

    pub fn increment_estimate(&self, increment: f64) -> f64 {
        self.error_constant * increment.abs()
    }

    /// Refines from mesh level 1 until the estimated error of `G_k` is at
    /// most `gamma^level`, or at most `|G_k - y|` when a threshold is given.
    /// Reaching the finest mesh without either gives `certified = false`.
    pub fn pde_limit_state(&self, theta: &ParameterVector, level: u32, y: Option<f64>) -> Result<PdeEvaluation> {
        if level < 1 || level > self.config.max_level {
            return Err(Error::InvalidLevel { level, min: 1, max: self.config.max_level });
        }
        let target = self.schedule.error_bound(level);
        let mut cost = self.level_cost(0);
        let mut prev = self.level_value(theta, 0)?;
        for k in 1..=self.config.max_level {
            let v = self.level_value(theta, k)?;
            cost += self.level_cost(k);
            let est = self.estimated_error(k, v, Some(prev));
            let ok = est <= target || y.is_some_and(|y| est <= (v - y).abs());
            if ok || k == self.config.max_level {
                return Ok(PdeEvaluation {
                    value: LevelledValue { value: v, level: k, error_bound: est, cost },
                    certified: ok,
                });
            }
            prev = v;
        }
        unreachable!("loop returns on the finest level")
    }
}

impl LimitStateModel for DarcyModel {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn schedule(&self) -> &AccuracySchedule {
        &self.schedule
    }

    fn level_value(&self, theta: &ParameterVector, level: u32) -> Result<f64> {
        Ok(self.config.y_crit - self.qoi(theta, level)?)
    }

    fn min_level(&self) -> u32 {
        0
    }

    fn level_cost(&self, level: u32) -> f64 {
        match level {
            0 => self.config.costs[0] / 16.0,
            k => self.config.costs[k as usize - 1],
        }
    }

    fn uses_coarser_estimate(&self) -> bool {
        true
    }

    fn estimated_error(&self, level: u32, value: f64, coarser: Option<f64>) -> f64 {
        match coarser {
            Some(c) => self.schedule.gamma() * self.increment_estimate(value - c),
            None => self.schedule.error_bound(level),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::CostLedger;
    use crate::rng::stream;

    fn small() -> DarcyModel {
        DarcyModel::new(DarcyConfig { kl_max_index: 6, max_level: 3, costs: vec![1.0, 16.0, 256.0], ..Default::default() })
            .unwrap()
    }

    #[test]
    fn zero_field_gives_linear_solution_on_every_mesh() {
        let m = DarcyModel::new(DarcyConfig::default()).unwrap();
        let theta = ParameterVector::zeros(m.dim());
        for k in 0..=4 {
            let sol = m.fem_solve(&theta, k).unwrap();
            let mesh = m.mesh(k).unwrap();
            for (i, u) in sol.u.iter().enumerate() {
                assert!((u - mesh.node_coords(i).0).abs() < 1e-10);
            }
            assert!((m.qoi(&theta, k).unwrap() - 0.5).abs() < 1e-12);
            assert!((m.level_value(&theta, k).unwrap() - 0.42).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_coefficient_scaling_is_invisible() {
        let m = small();
        let mesh = m.mesh(2).unwrap();
        let sol = mesh.solve(&vec![3.7; mesh.num_elements()]).unwrap();
        for (i, u) in sol.u.iter().enumerate() {
            assert!((u - mesh.node_coords(i).0).abs() < 1e-10);
        }
    }

    #[test]
    fn random_field_conserves_flux_and_respects_max_principle() {
        let m = small();
        let mut rng = stream(5, &[]);
        for _ in 0..5 {
            let theta = ParameterVector::standard_normal(m.dim(), &mut rng);
            let sol = m.fem_solve(&theta, 3).unwrap();
            let (l, r) = m.mesh(3).unwrap().boundary_fluxes(&sol);
            assert!((l + r).abs() < 1e-8 * r.abs().max(1.0));
            assert!(sol.u.iter().all(|&u| (-1e-12..=1.0 + 1e-12).contains(&u)));
        }
    }

    #[test]
    fn table_costs_and_comparator_level() {
        let m = DarcyModel::new(DarcyConfig::default()).unwrap();
        let costs: Vec<f64> = (1..=4).map(|k| m.level_cost(k)).collect();
        assert_eq!(costs, vec![1.0, 16.0, 256.0, 4096.0]);
        assert_eq!(m.level_cost(0), 1.0 / 16.0);
        assert_eq!(m.dim(), 289);
    }

    #[test]
    fn error_estimate_constant() {
        let m = small();
        assert!((m.increment_estimate(0.03) - 0.04).abs() < 1e-15);
        assert_eq!(m.increment_estimate(0.0), 0.0);
        assert!(m.increment_estimate(-0.05) > m.increment_estimate(0.03));
    }

    #[test]
    fn certified_evaluation_stops_early_far_from_threshold() {
        let m = small();
        let theta = ParameterVector::zeros(m.dim());
        let e = m.pde_limit_state(&theta, 3, Some(0.0)).unwrap();
        // identical values on all meshes: the estimate vanishes at mesh 1
        assert_eq!(e.value.level, 1);
        assert!(e.certified);
        assert_eq!(e.value.cost, 1.0 / 16.0 + 1.0);
    }

    #[test]
    fn selective_walk_charges_the_comparator_once() {
        let m = small();
        let mut rng = stream(8, &[]);
        let theta = ParameterVector::standard_normal(m.dim(), &mut rng);
        let mut ledger = CostLedger::new();
        let v = crate::selective_evaluate(&m, &theta, 0.42, 3, &mut ledger).unwrap();
        assert_eq!(ledger.count(0), 1);
        assert_eq!(ledger.total_count() as u32, v.level + 1);
    }
}
