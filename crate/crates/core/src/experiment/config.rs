//! Experiment configuration: one JSON document per study.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Correlation, EstimatorConfig, FirstSubset};
use crate::models::DarcyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    Toy,
    Brownian,
    Darcy,
}

impl Benchmark {
    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Toy => "toy",
            Benchmark::Brownian => "brownian",
            Benchmark::Darcy => "darcy",
        }
    }
}

/// Declaration order is the row order of the outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "mc")]
    Mc,
    #[serde(rename = "sus")]
    Sus,
    #[serde(rename = "sus-sr")]
    SusSr,
    #[serde(rename = "ml-sus-sr")]
    MlSusSr,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Mc => "mc",
            EstimatorKind::Sus => "sus",
            EstimatorKind::SusSr => "sus-sr",
            EstimatorKind::MlSusSr => "ml-sus-sr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mc" | "mc-projected" => Some(EstimatorKind::Mc),
            "sus" => Some(EstimatorKind::Sus),
            "sus-sr" => Some(EstimatorKind::SusSr),
            "ml-sus-sr" => Some(EstimatorKind::MlSusSr),
            _ => None,
        }
    }
}

/// Estimator settings shared by all runs; `tol` and `selective` are set per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSettings {
    pub p0: f64,
    pub correlation: Correlation,
    pub n_min: usize,
    pub n_max: usize,
    pub n_chains: Option<usize>,
    pub eta: f64,
    pub check_subset_property: bool,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        let d = EstimatorConfig::default();
        Self {
            p0: d.p0,
            correlation: d.correlation,
            n_min: d.n_min,
            n_max: d.n_max,
            n_chains: d.n_chains,
            eta: d.eta,
            check_subset_property: d.check_subset_property,
        }
    }
}

impl EstimatorSettings {
    pub fn to_config(&self, tol: f64, selective: bool) -> EstimatorConfig {
        EstimatorConfig {
            tol,
            p0: self.p0,
            correlation: self.correlation,
            n_min: self.n_min,
            n_max: self.n_max,
            selective,
            n_chains: self.n_chains,
            eta: self.eta,
            check_subset_property: self.check_subset_property,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySettings {
    pub gamma: f64,
    pub q: f64,
    /// Failure is `theta_1 <= barrier`.
    pub barrier: f64,
    /// Thresholds of the fixed-threshold estimators, in shifted coordinates.
    pub sus_thresholds: Vec<f64>,
    pub first_subset: FirstSubset,
}

impl Default for ToySettings {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            q: 2.0,
            barrier: -3.8,
            sus_thresholds: vec![2.5, 1.8, 1.0, 0.5, 0.0],
            // plain Monte Carlo for the first subset, although P(F_1) is small here
            first_subset: FirstSubset::MonteCarlo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BrownianSettings {
    pub kl_terms: usize,
    /// Failure is `min B <= -barrier`.
    pub barrier: f64,
    pub sus_thresholds: Vec<f64>,
    /// Multilevel subsets use `l_j = max(ml_min_level, j + 1)` ...
    pub ml_min_level: u32,
    /// ... for `j = 1..=max(L - 1, ml_min_subsets)`.
    pub ml_min_subsets: usize,
    pub first_subset: FirstSubset,
}

impl Default for BrownianSettings {
    fn default() -> Self {
        Self {
            kl_terms: 256,
            barrier: 4.0,
            sus_thresholds: vec![2.5, 1.7, 1.0, 0.5, 0.0],
            ml_min_level: 4,
            ml_min_subsets: 8,
            // P(F_1) is about 0.07 for the default levels
            first_subset: FirstSubset::Auto { hint: 0.07 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DarcySettings {
    pub model: DarcyConfig,
    pub ml_levels: Vec<u32>,
    pub sus_thresholds: Vec<f64>,
    pub first_subset: FirstSubset,
}

impl Default for DarcySettings {
    fn default() -> Self {
        Self {
            model: DarcyConfig::default(),
            ml_levels: vec![2, 2, 2, 3, 4],
            sus_thresholds: vec![0.27, 0.15, 0.075, 0.027, 0.0],
            // P(F_1) is about 0.3 for levels (2,2,2,3,4)
            first_subset: FirstSubset::Auto { hint: 0.3 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSettings {
    /// Project `N = TOL^-2 P^-1` samples instead of running them.
    pub projected: bool,
    /// Samples per executed run; defaults to the projected count.
    pub samples: Option<usize>,
}

impl Default for McSettings {
    fn default() -> Self {
        Self { projected: true, samples: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub raw_csv: String,
    pub summary_json: String,
    pub cost_table_csv: String,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            raw_csv: "raw.csv".into(),
            summary_json: "summary.json".into(),
            cost_table_csv: "cost_vs_cov.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: Benchmark,
    #[serde(default = "all_estimators")]
    pub estimators: Vec<EstimatorKind>,
    pub tolerances: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Reference for the empirical c.o.v.; benchmark default when absent.
    #[serde(default)]
    pub reference_probability: Option<f64>,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    #[serde(default)]
    pub toy: ToySettings,
    #[serde(default)]
    pub brownian: BrownianSettings,
    #[serde(default)]
    pub darcy: DarcySettings,
    #[serde(default)]
    pub mc: McSettings,
    #[serde(default)]
    pub output: OutputSettings,
}

fn all_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Mc, EstimatorKind::Sus, EstimatorKind::SusSr, EstimatorKind::MlSusSr]
}

fn default_replicates() -> usize {
    100
}

const TOP_LEVEL_KEYS: &[&str] = &[
    "benchmark",
    "estimators",
    "tolerances",
    "replicates",
    "seed",
    "workers",
    "reference_probability",
    "estimator",
    "toy",
    "brownian",
    "darcy",
    "mc",
    "output",
];

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(benchmark: Benchmark, estimators: Vec<EstimatorKind>, tolerances: Vec<f64>, replicates: usize) -> Self {
        Self {
            benchmark,
            estimators,
            tolerances,
            replicates,
            seed: 0,
            workers: None,
            reference_probability: None,
            estimator: EstimatorSettings::default(),
            toy: ToySettings::default(),
            brownian: BrownianSettings::default(),
            darcy: DarcySettings::default(),
            mc: McSettings::default(),
            output: OutputSettings::default(),
        }
    }

    /// Parses and validates, reporting every problem found.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let Some(obj) = value.as_object() else {
            return Err(Error::Validation(vec!["config must be a JSON object".into()]));
        };
        let mut errs: Vec<String> = obj
            .keys()
            .filter(|k| !TOP_LEVEL_KEYS.contains(&k.as_str()))
            .map(|k| format!("unknown key `{k}`"))
            .collect();
        if !obj.contains_key("benchmark") {
            errs.push("missing `benchmark`".into());
        }
        if !obj.contains_key("tolerances") {
            errs.push("missing `tolerances`".into());
        }
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| Error::Validation(vec![e.to_string()]))?;
        let errs = cfg.validate();
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.estimators.is_empty() {
            errs.push("`estimators` is empty".into());
        }
        let unique: BTreeSet<_> = self.estimators.iter().collect();
        if unique.len() != self.estimators.len() {
            errs.push("`estimators` lists an estimator twice".into());
        }
        if self.tolerances.is_empty() {
            errs.push("`tolerances` is empty".into());
        }
        for t in &self.tolerances {
            if !(*t > 0.0 && t.is_finite()) {
                errs.push(format!("tolerance {t} is not strictly positive"));
            }
        }
        if self.replicates == 0 {
            errs.push("`replicates` must be >= 1".into());
        }
        if self.workers == Some(0) {
            errs.push("`workers` must be >= 1".into());
        }
        if let Some(p) = self.reference_probability {
            if !(p > 0.0 && p < 1.0) {
                errs.push(format!("reference_probability {p} outside (0,1)"));
            }
        }
        let probe = self.estimator.to_config(self.tolerances.first().copied().unwrap_or(0.1).max(f64::MIN_POSITIVE), true);
        errs.extend(probe.validate().into_iter().filter(|e| !e.starts_with("tol")).map(|e| format!("estimator: {e}")));
        if self.mc.samples == Some(0) {
            errs.push("mc.samples must be >= 1".into());
        }
        match self.benchmark {
            Benchmark::Toy => {
                let t = &self.toy;
                if !(t.gamma > 0.0 && t.gamma < 1.0) {
                    errs.push(format!("toy.gamma must lie in (0,1), got {}", t.gamma));
                }
                if !(t.q >= 0.0) {
                    errs.push(format!("toy.q must be >= 0, got {}", t.q));
                }
                check_thresholds("toy.sus_thresholds", &t.sus_thresholds, &mut errs);
                check_first("toy.first_subset", t.first_subset, &mut errs);
            }
            Benchmark::Brownian => {
                let b = &self.brownian;
                if b.kl_terms == 0 {
                    errs.push("brownian.kl_terms must be >= 1".into());
                }
                if b.ml_min_level == 0 {
                    errs.push("brownian.ml_min_level must be >= 1".into());
                }
                check_thresholds("brownian.sus_thresholds", &b.sus_thresholds, &mut errs);
                check_first("brownian.first_subset", b.first_subset, &mut errs);
            }
            Benchmark::Darcy => {
                let d = &self.darcy;
                errs.extend(d.model.validate());
                if d.ml_levels.is_empty() || d.ml_levels.windows(2).any(|w| w[0] > w[1]) {
                    errs.push("darcy.ml_levels must be non-empty and non-decreasing".into());
                } else if *d.ml_levels.last().unwrap() != d.model.max_level || d.ml_levels[0] < 1 {
                    errs.push("darcy.ml_levels must lie in 1..=max_level and end at max_level".into());
                }
                check_thresholds("darcy.sus_thresholds", &d.sus_thresholds, &mut errs);
                check_first("darcy.first_subset", d.first_subset, &mut errs);
            }
        }
        errs
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }

    pub fn raw_csv_path(&self) -> PathBuf {
        self.output.dir.join(&self.output.raw_csv)
    }

    pub fn summary_path(&self) -> PathBuf {
        self.output.dir.join(&self.output.summary_json)
    }

    pub fn cost_table_path(&self) -> PathBuf {
        self.output.dir.join(&self.output.cost_table_csv)
    }
}

fn check_thresholds(name: &str, y: &[f64], errs: &mut Vec<String>) {
    if y.is_empty() || *y.last().unwrap() != 0.0 || y.windows(2).any(|w| w[0] <= w[1]) {
        errs.push(format!("{name} must be strictly decreasing and end at 0"));
    }
}

fn check_first(name: &str, f: FirstSubset, errs: &mut Vec<String>) {
    match f {
        FirstSubset::SubsetSimulation { p0, expected_stages } => {
            if !(0.1..=0.3).contains(&p0) {
                errs.push(format!("{name}: p0 must lie in [0.1, 0.3]"));
            }
            if expected_stages == 0 {
                errs.push(format!("{name}: expected_stages must be >= 1"));
            }
        }
        FirstSubset::Auto { hint } if !(hint > 0.0 && hint <= 1.0) => {
            errs.push(format!("{name}: hint must lie in (0, 1]"));
        }
        _ => {}
    }
}
