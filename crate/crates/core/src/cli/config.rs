use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{AdjacencySpec, CsvOptions, SplitSpec};
use crate::error::{Error, Result};
use crate::numerics::Activation;
use crate::sampler::{default_counts, SamplerConfig};
use crate::trainer::{ModelConfig, OptimizerConfig, OptimizerKind, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjacencyChoice {
    Gaussian,
    Binary,
}

/// Every knob of a run, as a flat key-value table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub signals: Option<PathBuf>,
    pub geometry: Option<PathBuf>,
    pub missing_sentinel: Option<f64>,
    pub out_dir: Option<PathBuf>,

    pub adjacency: AdjacencyChoice,
    pub sigma: Option<f64>,
    pub threshold: Option<f64>,

    pub train_fraction: f64,
    pub unsampled_fraction: f64,
    pub split_seed: u64,

    pub window: usize,
    pub order: usize,
    pub hidden: usize,
    pub activation: Activation,

    pub samples_per_iter: usize,
    pub iterations: usize,
    pub n_observed: Option<usize>,
    pub n_masked: Option<usize>,
    pub random_counts: bool,

    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,

    pub validation_fraction: f64,
    pub validation_every: usize,
    /// Write a checkpoint every this many iterations; 0 writes only the last.
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        let opt = OptimizerConfig::default();
        let sampler = SamplerConfig::for_sensors(4);
        let split = SplitSpec::default();
        Self {
            signals: None,
            geometry: None,
            missing_sentinel: None,
            out_dir: None,
            adjacency: AdjacencyChoice::Gaussian,
            sigma: None,
            threshold: None,
            train_fraction: split.train_fraction,
            unsampled_fraction: split.unsampled_fraction,
            split_seed: split.seed,
            window: sampler.window,
            order: model.order,
            hidden: model.hidden,
            activation: model.activation,
            samples_per_iter: sampler.samples_per_iter,
            iterations: sampler.iterations,
            n_observed: None,
            n_masked: None,
            random_counts: false,
            optimizer: opt.kind,
            lr: opt.lr,
            beta1: opt.beta1,
            beta2: opt.beta2,
            eps: opt.eps,
            validation_fraction: 0.0,
            validation_every: 50,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

fn config_err(msg: impl std::fmt::Display) -> Error {
    Error::Format {
        what: "run config",
        msg: msg.to_string(),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_err)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Overlay the keys present in `text` onto `self`.
    pub fn merge_toml(&mut self, text: &str) -> Result<()> {
        let overlay: toml::Table = toml::from_str(text).map_err(config_err)?;
        self.merge_table(overlay)
    }

    fn merge_table(&mut self, overlay: toml::Table) -> Result<()> {
        let mut base = toml::Table::try_from(&*self).map_err(config_err)?;
        base.extend(overlay);
        *self = base.try_into().map_err(config_err)?;
        Ok(())
    }

    /// Apply one `key=value` override; the value is read as TOML, falling
    /// back to a plain string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| config_err(format!("override {assignment:?} is not key=value")))?;
        let (key, value) = (key.trim(), value.trim());
        let parsed: toml::Value = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let mut table = toml::Table::new();
        table.insert(key.to_string(), parsed);
        self.merge_table(table)
    }

    /// The configuration stored inside checkpoints: everything but paths
    /// that only locate outputs.
    pub fn portable(&self) -> Self {
        Self {
            out_dir: None,
            ..self.clone()
        }
    }

    pub fn adjacency_spec(&self) -> AdjacencySpec {
        match self.adjacency {
            AdjacencyChoice::Gaussian => AdjacencySpec::Gaussian { sigma: self.sigma },
            AdjacencyChoice::Binary => AdjacencySpec::Binary {
                threshold: self.threshold,
            },
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            unsampled_fraction: self.unsampled_fraction,
            seed: self.split_seed,
        }
    }

    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            missing_sentinel: self.missing_sentinel,
        }
    }

    /// Training configuration for a network of `n` training sensors.
    pub fn train_config(&self, n: usize) -> TrainConfig {
        let (n_o, n_m) = default_counts(n);
        TrainConfig {
            sampler: SamplerConfig {
                window: self.window,
                samples_per_iter: self.samples_per_iter,
                iterations: self.iterations,
                n_observed: self.n_observed.unwrap_or(n_o),
                n_masked: self.n_masked.unwrap_or(n_m),
                random_counts: self.random_counts,
                seed: self.seed,
            },
            model: ModelConfig {
                order: self.order,
                hidden: self.hidden,
                activation: self.activation,
            },
            optimizer: OptimizerConfig {
                kind: self.optimizer,
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            },
            normalization: None,
            validation_fraction: self.validation_fraction,
            validation_every: self.validation_every,
        }
    }
}
