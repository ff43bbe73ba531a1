//! Experiment configuration file.
//!
//! A flat TOML table. Every key is optional and unknown keys are rejected.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    Point, DEFAULT_DEVICE_CENTER, DEFAULT_DEVICE_RADIUS, DEFAULT_EXPONENT_DIRECT, DEFAULT_EXPONENT_RIS,
    DEFAULT_REFERENCE_GAIN, DEFAULT_RIS_POSITION, DEFAULT_SERVER_POSITION,
};
use crate::solvers::{SdpBackend, SolverOptions};
use crate::trainer::{LearningParams, Scenario, SyntheticSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("`{first}` conflicts with `{second}`: {reason}")]
    Conflict {
        first: &'static str,
        second: &'static str,
        reason: String,
    },
}

impl ConfigError {
    /// Keys named by the error, if any.
    pub fn keys(&self) -> Vec<&'static str> {
        match self {
            ConfigError::Invalid { key, .. } => vec![key],
            ConfigError::Conflict { first, second, .. } => vec![first, second],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Synthetic,
    Cifar10,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub devices: usize,
    pub antennas: usize,
    pub ris_elements: usize,
    /// Per-device transmit power (W).
    pub tx_power: f64,
    /// Receiver noise power (W).
    pub noise_power: f64,
    pub reference_gain: f64,
    pub pathloss_direct: f64,
    pub pathloss_ris: f64,
    pub server_position: [f64; 2],
    pub ris_position: [f64; 2],
    pub device_center: [f64; 2],
    pub device_radius: f64,

    pub dc_penalty: f64,
    pub dc_max_iters: usize,
    pub sdp_max_iters: usize,
    pub alt_max_iters: usize,
    pub sdp_tol: f64,
    pub dc_rank_tol: f64,
    pub alt_tol: f64,
    pub randomization_count: usize,
    pub sdp_backend: SdpBackend,

    pub rounds: usize,
    pub lr: f64,
    pub lambda: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection_target: Option<f64>,

    pub dataset: DatasetKind,
    pub synthetic_features: usize,
    pub synthetic_train: usize,
    pub synthetic_test: usize,
    pub synthetic_margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cifar_dir: Option<PathBuf>,
    /// `class_a` maps to +1, `class_b` to -1.
    pub cifar_classes: [u8; 2],
    /// Train one-vs-rest heads over all ten classes instead of a pair.
    pub cifar_multiclass: bool,

    pub scenarios: Vec<Scenario>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let solver = SolverOptions::default();
        let learning = LearningParams::default();
        let synthetic = SyntheticSpec::default();
        let xy = |p: Point| [p.x, p.y];
        Self {
            devices: 20,
            antennas: 4,
            ris_elements: 30,
            tx_power: 0.1,
            noise_power: 1e-8,
            reference_gain: DEFAULT_REFERENCE_GAIN,
            pathloss_direct: DEFAULT_EXPONENT_DIRECT,
            pathloss_ris: DEFAULT_EXPONENT_RIS,
            server_position: xy(DEFAULT_SERVER_POSITION),
            ris_position: xy(DEFAULT_RIS_POSITION),
            device_center: xy(DEFAULT_DEVICE_CENTER),
            device_radius: DEFAULT_DEVICE_RADIUS,
            dc_penalty: solver.dc_penalty,
            dc_max_iters: solver.dc_max_iters,
            sdp_max_iters: solver.sdp_max_iters,
            alt_max_iters: solver.alt_max_iters,
            sdp_tol: solver.sdp_tol,
            dc_rank_tol: solver.dc_rank_tol,
            alt_tol: solver.alt_tol,
            randomization_count: solver.randomization_count,
            sdp_backend: solver.sdp_backend,
            rounds: learning.rounds,
            lr: learning.lr,
            lambda: learning.lambda,
            local_epochs: learning.epochs,
            batch_size: learning.batch_size,
            selection_target: None,
            dataset: DatasetKind::Synthetic,
            synthetic_features: synthetic.features,
            synthetic_train: synthetic.train,
            synthetic_test: synthetic.test,
            synthetic_margin: synthetic.margin,
            cifar_dir: None,
            cifar_classes: [3, 5],
            cifar_multiclass: false,
            scenarios: Scenario::ALL.to_vec(),
            seeds: (0..10).collect(),
            output_dir: PathBuf::from("results"),
        }
    }
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

fn positive(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be a positive number, got {v}")))
    }
}

fn nonnegative(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be a nonnegative number, got {v}")))
    }
}

fn at_least_one(key: &'static str, v: usize) -> Result<(), ConfigError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(invalid(key, "must be at least 1"))
    }
}

fn finite_point(key: &'static str, p: [f64; 2]) -> Result<(), ConfigError> {
    if p.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(invalid(key, "coordinates must be finite"))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            dc_penalty: self.dc_penalty,
            dc_max_iters: self.dc_max_iters,
            sdp_max_iters: self.sdp_max_iters,
            alt_max_iters: self.alt_max_iters,
            sdp_tol: self.sdp_tol,
            dc_rank_tol: self.dc_rank_tol,
            alt_tol: self.alt_tol,
            randomization_count: self.randomization_count,
            sdp_backend: self.sdp_backend,
        }
    }

    pub fn learning(&self) -> LearningParams {
        LearningParams {
            rounds: self.rounds,
            lr: self.lr,
            lambda: self.lambda,
            epochs: self.local_epochs,
            batch_size: self.batch_size,
        }
    }

    pub fn synthetic(&self) -> SyntheticSpec {
        SyntheticSpec {
            features: self.synthetic_features,
            train: self.synthetic_train,
            test: self.synthetic_test,
            margin: self.synthetic_margin,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        at_least_one("devices", self.devices)?;
        at_least_one("antennas", self.antennas)?;
        positive("tx_power", self.tx_power)?;
        nonnegative("noise_power", self.noise_power)?;
        positive("reference_gain", self.reference_gain)?;
        positive("pathloss_direct", self.pathloss_direct)?;
        positive("pathloss_ris", self.pathloss_ris)?;
        finite_point("server_position", self.server_position)?;
        finite_point("ris_position", self.ris_position)?;
        finite_point("device_center", self.device_center)?;
        nonnegative("device_radius", self.device_radius)?;

        positive("dc_penalty", self.dc_penalty)?;
        at_least_one("dc_max_iters", self.dc_max_iters)?;
        at_least_one("sdp_max_iters", self.sdp_max_iters)?;
        at_least_one("alt_max_iters", self.alt_max_iters)?;
        positive("sdp_tol", self.sdp_tol)?;
        positive("dc_rank_tol", self.dc_rank_tol)?;
        positive("alt_tol", self.alt_tol)?;
        at_least_one("randomization_count", self.randomization_count)?;

        nonnegative("lr", self.lr)?;
        nonnegative("lambda", self.lambda)?;
        at_least_one("batch_size", self.batch_size)?;
        if let Some(t) = self.selection_target {
            positive("selection_target", t)?;
        }

        match self.dataset {
            DatasetKind::Synthetic => {
                at_least_one("synthetic_features", self.synthetic_features)?;
                at_least_one("synthetic_test", self.synthetic_test)?;
                nonnegative("synthetic_margin", self.synthetic_margin)?;
                if self.synthetic_train < self.devices {
                    return Err(ConfigError::Conflict {
                        first: "synthetic_train",
                        second: "devices",
                        reason: format!(
                            "{} training rows cannot give each of {} devices a sample",
                            self.synthetic_train, self.devices
                        ),
                    });
                }
            }
            DatasetKind::Cifar10 => {
                if self.cifar_dir.is_none() {
                    return Err(ConfigError::Conflict {
                        first: "dataset",
                        second: "cifar_dir",
                        reason: "dataset = \"cifar10\" requires cifar_dir".into(),
                    });
                }
                let [a, b] = self.cifar_classes;
                if a > 9 || b > 9 || a == b {
                    return Err(invalid("cifar_classes", "must be two distinct labels in 0..=9"));
                }
            }
        }

        if self.scenarios.is_empty() {
            return Err(invalid("scenarios", "must list at least one scenario"));
        }
        if self.scenarios.iter().collect::<HashSet<_>>().len() != self.scenarios.len() {
            return Err(invalid("scenarios", "contains duplicates"));
        }
        if self.ris_elements == 0 {
            if let Some(s) = self.scenarios.iter().find(|s| s.uses_ris()) {
                return Err(ConfigError::Conflict {
                    first: "ris_elements",
                    second: "scenarios",
                    reason: format!("scenario {s} needs at least one RIS element"),
                });
            }
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "must list at least one seed"));
        }
        if self.seeds.iter().collect::<HashSet<_>>().len() != self.seeds.len() {
            return Err(invalid("seeds", "contains duplicates"));
        }
        Ok(())
    }
}

/// Read, parse and validate a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::from_toml_str(&text)
}
