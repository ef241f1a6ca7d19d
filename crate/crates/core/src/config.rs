//! Declarative experiment description, parsed from TOML.
//!
//! Unknown keys are rejected everywhere so that a typo in a sweep axis fails
//! loudly instead of silently running the default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{CsvOptions, ToyKind};
use crate::device::{SynapseSpec, TrackGeometry};
use crate::energy::EnergyParams;
use crate::readout::{Policy, ReadoutParams};
use crate::wta::WtaConfig;

/// Environment variable naming the dataset root directory.
pub const DATA_ENV: &str = "DWMTJ_DATA";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("invalid `{field}`: {message}")]
    Invalid { field: &'static str, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Har,
    Mnist,
    Fmnist,
    /// IDX or CSV files named explicitly in `[data]`.
    Custom,
    /// Synthetic set described by `data.toy`.
    Toy,
}

impl Task {
    pub fn default_classes(self) -> Option<usize> {
        match self {
            Task::Har => Some(5),
            Task::Mnist | Task::Fmnist => Some(10),
            Task::Custom | Task::Toy => None,
        }
    }

    /// Labeled-sample defaults that reach the top reported accuracies.
    pub fn default_n_s(self) -> usize {
        match self {
            Task::Har => 15_000,
            Task::Mnist => 30_000,
            Task::Fmnist => 60_000,
            Task::Custom | Task::Toy => 1_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FirstLayerMode {
    /// Clustering weights trained by approximate STDP.
    Stdp,
    /// Clustering weights left at their random initialization.
    RandomFrozen,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset root; falls back to `$DWMTJ_DATA`, then `./data`.
    pub root: Option<PathBuf>,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub train_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
    pub csv: Option<CsvOptions>,
    pub toy: Option<ToyKind>,
}

impl DataConfig {
    pub fn resolved_root(&self) -> PathBuf {
        self.root
            .clone()
            .or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynapseConfig {
    pub g_on: f64,
    pub g_off: f64,
    pub bits: u32,
}

impl Default for SynapseConfig {
    /// 1 kOhm average device with a 2:1 on/off ratio and 6-bit resolution.
    fn default() -> Self {
        Self {
            g_on: 1.0 / 666.666_666_666_666_7,
            g_off: 1.0 / 1333.333_333_333_333_5,
            bits: 6,
        }
    }
}

impl SynapseConfig {
    pub fn spec(&self) -> crate::Result<SynapseSpec> {
        SynapseSpec::from_bits(self.g_on, self.g_off, self.bits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutConfig {
    #[serde(flatten)]
    pub synapse: SynapseConfig,
    /// Largest representable |w| in logit units; sets the output gain.
    pub max_weight: f64,
    pub eta: f64,
    pub eta_decay: Option<f64>,
    pub shadow_weights: bool,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self {
            synapse: SynapseConfig::default(),
            max_weight: 4.0,
            eta: 0.4,
            eta_decay: Some(3000.0),
            shadow_weights: true,
        }
    }
}

impl ReadoutConfig {
    pub fn params(&self) -> ReadoutParams {
        ReadoutParams {
            gain: self.max_weight / (self.synapse.g_on - self.synapse.g_off),
            eta: self.eta,
            eta_decay: self.eta_decay,
            shadow_weights: self.shadow_weights,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariationConfig {
    /// Relative spread of each device's on and off conductance (clustering layer).
    pub sigma_tmr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Keep stochastic pinning active while scoring the test set.
    pub pin_during_eval: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: String,
    pub values: Vec<f64>,
    #[serde(default = "one")]
    pub repeats: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySweepConfig {
    pub m_values: Vec<usize>,
    #[serde(default = "default_bits")]
    pub bits: Vec<u32>,
}

fn default_bits() -> Vec<u32> {
    (2..=10).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub geometry: TrackGeometry,
    /// Optional velocities (m/s) for the coupling-ratio calculator.
    pub v0: Option<f64>,
    pub v_inhib: Option<f64>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            geometry: TrackGeometry::default(),
            v0: None,
            v_inhib: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Hidden (clustering) neurons.
    pub m: usize,
    /// Output classes; resolved from the task when omitted.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_n_us")]
    pub n_us: usize,
    /// Labeled samples; resolved from the task when omitted.
    #[serde(default)]
    pub n_s: Option<usize>,
    /// Cap on evaluated test samples; all when omitted.
    #[serde(default)]
    pub n_test: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub first_layer_mode: FirstLayerMode,
    #[serde(default = "default_policy")]
    pub policy: Policy,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub wta: WtaConfig,
    #[serde(default)]
    pub cluster_synapse: SynapseConfig,
    #[serde(default)]
    pub readout: ReadoutConfig,
    #[serde(default)]
    pub variation: VariationConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub energy: EnergyParams,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub energy_sweep: Option<EnergySweepConfig>,
    #[serde(default)]
    pub design: Option<DesignConfig>,
}

fn default_n_us() -> usize {
    1000
}

fn default_seed() -> u64 {
    1
}

fn default_mode() -> FirstLayerMode {
    FirstLayerMode::Stdp
}

fn default_policy() -> Policy {
    Policy::AnaBp
}

impl ExperimentConfig {
    /// Config with every optional field at its default.
    pub fn new(task: Task, m: usize) -> Self {
        Self {
            task,
            m,
            n: None,
            n_us: default_n_us(),
            n_s: None,
            n_test: None,
            seed: default_seed(),
            first_layer_mode: default_mode(),
            policy: default_policy(),
            data: DataConfig::default(),
            wta: WtaConfig::default(),
            cluster_synapse: SynapseConfig::default(),
            readout: ReadoutConfig::default(),
            variation: VariationConfig::default(),
            evaluation: EvaluationConfig::default(),
            energy: EnergyParams::default(),
            sweep: None,
            energy_sweep: None,
            design: None,
        }
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.resolved()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn n_classes(&self) -> usize {
        self.n.expect("resolved config")
    }

    pub fn labeled_samples(&self) -> usize {
        self.n_s.expect("resolved config")
    }

    /// Fills task-dependent defaults and validates every field.
    pub fn resolved(mut self) -> Result<Self, ConfigError> {
        if self.n.is_none() {
            self.n = match self.task {
                Task::Toy => match &self.data.toy {
                    Some(ToyKind::Onehot { n }) => Some(*n),
                    Some(ToyKind::TwoGaussians { .. }) => Some(2),
                    Some(ToyKind::Blobs { classes, .. }) => Some(*classes),
                    None => None,
                },
                t => t.default_classes(),
            };
        }
        if self.n.is_none() {
            return Err(invalid("n", "class count required for custom tasks"));
        }
        self.n_s.get_or_insert(self.task.default_n_s());
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.n.unwrap_or(0);
        if n < 2 {
            return Err(invalid("n", format!("need at least 2 classes, got {n}")));
        }
        if self.m < n {
            return Err(invalid("m", format!("m = {} must be >= n = {n}", self.m)));
        }
        if self.n_s.unwrap_or(0) < 1 {
            return Err(invalid("n_s", "need at least one labeled sample"));
        }
        if self.n_test == Some(0) {
            return Err(invalid("n_test", "must be >= 1 when given"));
        }

        let w = &self.wta;
        if !(0.0..=1.0).contains(&w.gamma) {
            return Err(invalid("wta.gamma", format!("{} outside [0, 1]", w.gamma)));
        }
        if w.t_steps == 0 {
            return Err(invalid("wta.t_steps", "must be >= 1"));
        }
        if !(w.traverse_fraction > 0.0 && w.traverse_fraction <= 1.0) {
            return Err(invalid("wta.traverse_fraction", format!("{} outside (0, 1]", w.traverse_fraction)));
        }
        if !(w.rank_exponent.is_finite() && w.rank_exponent >= 0.0) {
            return Err(invalid("wta.rank_exponent", format!("{} must be >= 0", w.rank_exponent)));
        }
        if !(0.0..=1.0).contains(&w.p_pin) {
            return Err(invalid("wta.p_pin", format!("{} outside [0, 1]", w.p_pin)));
        }
        if !(0.0..=1.0).contains(&w.input_threshold) {
            return Err(invalid("wta.input_threshold", format!("{} outside [0, 1]", w.input_threshold)));
        }

        check_synapse("cluster_synapse", &self.cluster_synapse)?;
        check_synapse("readout", &self.readout.synapse)?;
        let r = &self.readout;
        if !(r.max_weight.is_finite() && r.max_weight > 0.0) {
            return Err(invalid("readout.max_weight", format!("{} must be > 0", r.max_weight)));
        }
        if !(r.eta.is_finite() && r.eta > 0.0) {
            return Err(invalid("readout.eta", format!("{} must be > 0", r.eta)));
        }
        if let Some(tau) = r.eta_decay {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(invalid("readout.eta_decay", format!("{tau} must be > 0")));
            }
        }
        if !(self.variation.sigma_tmr.is_finite() && self.variation.sigma_tmr >= 0.0) {
            return Err(invalid("variation.sigma_tmr", format!("{} must be >= 0", self.variation.sigma_tmr)));
        }
        self.energy
            .validate()
            .map_err(|e| invalid("energy", e.to_string()))?;

        if matches!(self.task, Task::Toy) && self.data.toy.is_none() {
            return Err(invalid("data.toy", "toy task needs a [data.toy] table"));
        }
        if matches!(self.task, Task::Custom) {
            let idx = self.data.train_images.is_some() && self.data.train_labels.is_some();
            if !idx && self.data.train_csv.is_none() {
                return Err(invalid("data", "custom task needs train_images/train_labels or train_csv"));
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(invalid("sweep.values", "must not be empty"));
            }
            if s.repeats == 0 {
                return Err(invalid("sweep.repeats", "must be >= 1"));
            }
            s.axis
                .parse::<crate::pipeline::SweepAxis>()
                .map_err(|e| invalid("sweep.axis", e.to_string()))?;
        }
        if let Some(e) = &self.energy_sweep {
            if e.m_values.is_empty() || e.bits.is_empty() {
                return Err(invalid("energy_sweep", "m_values and bits must not be empty"));
            }
            if e.bits.iter().any(|b| !(1..=16).contains(b)) {
                return Err(invalid("energy_sweep.bits", "each entry must lie in [1, 16]"));
            }
        }
        Ok(())
    }
}

fn check_synapse(field: &'static str, s: &SynapseConfig) -> Result<(), ConfigError> {
    if !(s.g_off.is_finite() && s.g_off > 0.0 && s.g_on.is_finite() && s.g_on > s.g_off) {
        return Err(invalid(field, format!("need g_on > g_off > 0, got g_on={}, g_off={}", s.g_on, s.g_off)));
    }
    if !(1..=16).contains(&s.bits) {
        return Err(invalid(field, format!("bits = {} outside [1, 16]", s.bits)));
    }
    Ok(())
}

/// Reads and resolves a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::from_toml_str(&text, &path.display().to_string())
}
