//! Experiment configuration: a sectioned `key = value` file (TOML syntax).
//!
//! Every section and key is optional; missing values take the defaults
//! below. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::ValueHyper;
use crate::data::{RatingFormat, RatingScale, SplitFractions};
use crate::error::{Error, Result};
use crate::simulator::{MfHyper, SyntheticConfig};

/// Environment variable consulted for relative dataset paths.
pub const DATA_DIR_ENV: &str = "IRS_DATA_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub scale: RatingScale,
    pub split: SplitSection,
    pub simulator: SimulatorSection,
    pub agent: AgentSection,
    pub eval: EvalSection,
    pub oracle: OracleSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSection::default(),
            scale: RatingScale::five_star(),
            split: SplitSection::default(),
            simulator: SimulatorSection::default(),
            agent: AgentSection::default(),
            eval: EvalSection::default(),
            oracle: OracleSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
    pub format: RatingFormat,
    pub k_core: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            path: None,
            format: RatingFormat::DoubleColon,
            k_core: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        let f = SplitFractions::default();
        SplitSection {
            train: f.train,
            validation: f.validation,
            test: f.test,
            seed: 0,
        }
    }
}

impl SplitSection {
    pub fn fractions(&self) -> SplitFractions {
        SplitFractions {
            train: self.train,
            validation: self.validation,
            test: self.test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimulatorKind {
    Mf,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorSection {
    pub kind: SimulatorKind,
    pub mf: MfSection,
    pub synthetic: SyntheticSection,
}

impl Default for SimulatorSection {
    fn default() -> Self {
        SimulatorSection {
            kind: SimulatorKind::Mf,
            mf: MfSection::default(),
            synthetic: SyntheticSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfSection {
    pub dim: usize,
    pub lr: f64,
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Per-user chronological fraction held out for RMSE.
    pub holdout: f64,
    /// Select `lr` and `l2` from `lr_grid x l2_grid` on a validation carve.
    pub tune: bool,
    pub lr_grid: Vec<f64>,
    pub l2_grid: Vec<f64>,
}

impl Default for MfSection {
    fn default() -> Self {
        let h = MfHyper::default();
        MfSection {
            dim: h.dim,
            lr: h.lr,
            l2: h.l2,
            epochs: h.epochs,
            seed: h.seed,
            holdout: 0.1,
            tune: false,
            lr_grid: vec![0.01, 0.001, 0.0001],
            l2_grid: vec![0.001, 0.0001, 0.00001],
        }
    }
}

impl MfSection {
    pub fn hyper(&self) -> MfHyper {
        MfHyper {
            dim: self.dim,
            lr: self.lr,
            l2: self.l2,
            epochs: self.epochs,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub num_users: usize,
    pub num_items: usize,
    pub num_genres: usize,
    pub lambda: f64,
    pub window: usize,
    pub seed: u64,
    /// Length of each user's generated logged history.
    pub history_len: usize,
    pub log_seed: u64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let c = SyntheticConfig::default();
        SyntheticSection {
            num_users: c.num_users,
            num_items: c.num_items,
            num_genres: c.num_genres,
            lambda: c.lambda,
            window: c.window,
            seed: c.seed,
            history_len: 150,
            log_seed: 1,
        }
    }
}

impl SyntheticSection {
    pub fn config(&self, scale: RatingScale) -> SyntheticConfig {
        SyntheticConfig {
            num_users: self.num_users,
            num_items: self.num_items,
            num_genres: self.num_genres,
            lambda: self.lambda,
            window: self.window,
            scale,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub dim: usize,
    pub history_window: usize,
    /// Discount factor of the DQNR agent; GreedyRM always uses 0.
    pub gamma: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub grad_clip: f64,
    pub target_sync_interval: usize,
    pub init_scale: f64,
    pub seed: u64,
    /// Select `lr` and `weight_decay` on validation users.
    pub tune: bool,
    pub lr_grid: Vec<f64>,
    pub weight_decay_grid: Vec<f64>,
}

impl Default for AgentSection {
    fn default() -> Self {
        let h = ValueHyper::default();
        AgentSection {
            dim: h.dim,
            history_window: h.history_window,
            gamma: h.gamma,
            lr: h.lr,
            weight_decay: h.weight_decay,
            batch_size: h.batch_size,
            epochs: h.epochs,
            grad_clip: h.grad_clip,
            target_sync_interval: h.target_sync_interval,
            init_scale: h.init_scale,
            seed: h.seed,
            tune: false,
            lr_grid: vec![0.01, 0.001, 0.0001],
            weight_decay_grid: vec![0.001, 0.0001, 0.00001],
        }
    }
}

impl AgentSection {
    pub fn hyper(&self, gamma: f64) -> ValueHyper {
        ValueHyper {
            dim: self.dim,
            history_window: self.history_window,
            gamma,
            lr: self.lr,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            epochs: self.epochs,
            grad_clip: self.grad_clip,
            target_sync_interval: self.target_sync_interval,
            init_scale: self.init_scale,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UserPool {
    /// Test split only.
    Test,
    /// Every user (for generator-defined environments).
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub warmup: usize,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub mask_seen: bool,
    pub users: UserPool,
    pub max_users: Option<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            warmup: 40,
            horizon: 40,
            seeds: (0..10).collect(),
            mask_seen: true,
            users: UserPool::Test,
            max_users: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub k_values: Vec<usize>,
    pub k_ref: usize,
    pub horizon: usize,
    pub max_users: Option<usize>,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            k_values: vec![1, 10],
            k_ref: 10,
            horizon: 40,
            max_users: Some(200),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub gammas: Vec<f64>,
    /// Training seeds; one model per (gamma, seed).
    pub train_seeds: Vec<u64>,
    pub plot: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            gammas: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99],
            train_seeds: vec![0],
            plot: true,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::parse(&text)?, text))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.scale.validate().map_err(cfg_err)?;
        self.agent.hyper(self.agent.gamma).validate().map_err(cfg_err)?;
        if self.eval.seeds.is_empty() {
            return Err(Error::Config("eval.seeds must list at least one seed".into()));
        }
        if self.eval.horizon == 0 || self.oracle.horizon == 0 {
            return Err(Error::Config("horizons must be >= 1".into()));
        }
        if self.oracle.k_ref == 0 || self.oracle.k_values.contains(&0) {
            return Err(Error::Config("beam widths must be >= 1".into()));
        }
        if let Some(g) = self.sweep.gammas.iter().find(|g| !(0.0..1.0).contains(*g)) {
            return Err(Error::Config(format!("sweep gamma {g} outside [0, 1)")));
        }
        if self.sweep.train_seeds.is_empty() {
            return Err(Error::Config("sweep.train_seeds must list at least one seed".into()));
        }
        if !(0.0..1.0).contains(&self.simulator.mf.holdout) {
            return Err(Error::Config("simulator.mf.holdout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Replace every seed with values derived from `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.split.seed = seed;
        self.simulator.mf.seed = seed;
        self.simulator.synthetic.seed = seed;
        self.simulator.synthetic.log_seed = seed.wrapping_add(1);
        self.agent.seed = seed;
        let n = self.eval.seeds.len() as u64;
        self.eval.seeds = (0..n).map(|i| seed.wrapping_add(i)).collect();
        let n = self.sweep.train_seeds.len() as u64;
        self.sweep.train_seeds = (0..n).map(|i| seed.wrapping_add(i)).collect();
    }

    /// Locate the raw ratings file: as given, then relative to `base_dir`,
    /// then under `$IRS_DATA_DIR`.
    pub fn resolve_dataset_path(&self, base_dir: &Path) -> Result<PathBuf> {
        let p = self
            .dataset
            .path
            .as_ref()
            .ok_or_else(|| Error::Config("dataset.path is not set".into()))?;
        let data_dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
        resolve_path(p, base_dir, data_dir.as_deref())
    }
}

pub fn resolve_path(p: &Path, base_dir: &Path, data_dir: Option<&Path>) -> Result<PathBuf> {
    let mut tried = vec![p.to_path_buf()];
    if p.exists() {
        return Ok(p.to_path_buf());
    }
    if p.is_relative() {
        let c = base_dir.join(p);
        if c.exists() {
            return Ok(c);
        }
        tried.push(c);
        if let Some(d) = data_dir {
            let c = d.join(p);
            if c.exists() {
                return Ok(c);
            }
            tried.push(c);
        }
    }
    Err(Error::Config(format!(
        "dataset file not found (tried {})",
        tried.iter().map(|t| t.display().to_string()).collect::<Vec<_>>().join(", ")
    )))
}
