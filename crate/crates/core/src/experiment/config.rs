//! Experiment configuration, read from TOML.
//!
//! ```toml
//! [channel]
//! num_wds = 10
//! num_antennas = 5
//! noise_variance = 1e-20
//!
//! [learner]
//! distill_weight = 3.0
//! rounds = 200
//!
//! [bound]
//! l1 = 1.0
//!
//! [data]
//! num_classes = 3
//! partition = { mode = "dirichlet", concentration = 1.0 }
//!
//! [experiment]
//! methods = ["proposed", "uniform", "error_free"]
//! trials = 5
//! seed = 1
//! ```
//!
//! Every key is optional; missing keys, including keys missing from a
//! section that is present, take the values of `ExperimentConfig::default()`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dataset::DatasetSpec;
use super::partition::PartitionMode;
use crate::channel::ChannelConfig;
use crate::error::{Error, Result};
use crate::learner::LearnerConfig;
use crate::metrics::BoundConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    Uniform,
    Orthogonal,
    ErrorFree,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Proposed, Method::Uniform, Method::Orthogonal, Method::ErrorFree];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Uniform => "uniform",
            Method::Orthogonal => "orthogonal",
            Method::ErrorFree => "error_free",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    #[serde(flatten)]
    pub spec: DatasetSpec,
    pub partition: PartitionMode,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            spec: DatasetSpec::default(),
            partition: PartitionMode::Dirichlet { concentration: 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Evaluate test accuracy every this many rounds (and after the last).
    pub eval_every: usize,
    pub solver_tol: f64,
    /// Scale the CSI error of each device by its path-loss amplitude.
    pub scaled_csi_error: bool,
    /// Noise draws for the Monte-Carlo `Φ₂²` column; 0 disables it.
    pub monte_carlo_draws: usize,
    /// Write measured wall-clock times; off keeps reruns byte-identical.
    pub record_wall_clock: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Proposed, Method::Uniform, Method::ErrorFree],
            trials: 1,
            seed: 1,
            out_dir: PathBuf::from("out"),
            eval_every: 10,
            solver_tol: 1e-8,
            scaled_csi_error: true,
            monte_carlo_draws: 0,
            record_wall_clock: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub channel: ChannelConfig,
    pub learner: LearnerConfig,
    pub bound: BoundConfig,
    pub data: DataConfig,
    pub experiment: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig {
                noise_variance: 1e-20,
                ..ChannelConfig::default()
            },
            learner: LearnerConfig {
                distill_weight: 3.0,
                hidden: 8,
                ..LearnerConfig::default()
            },
            bound: BoundConfig::default(),
            data: DataConfig::default(),
            experiment: RunConfig::default(),
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if key != "partition" => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(Self::default()).expect("config is always serializable");
        merge(&mut merged, user);
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.learner.validate()?;
        self.bound.validate()?;
        self.data.spec.validate()?;
        if let PartitionMode::Dirichlet { concentration } = self.data.partition {
            if !(concentration > 0.0) {
                return Err(Error::Config("Dirichlet concentration must be positive".into()));
            }
        }
        let e = &self.experiment;
        if e.methods.is_empty() {
            return Err(Error::Config("at least one method required".into()));
        }
        if e.trials == 0 || e.eval_every == 0 {
            return Err(Error::Config("trials and eval_every must be positive".into()));
        }
        if !(e.solver_tol > 0.0) {
            return Err(Error::Config("solver_tol must be positive".into()));
        }
        if self.data.spec.train_samples < self.channel.num_wds {
            return Err(Error::Config("fewer training samples than devices".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment.methods = vec![Method::Orthogonal];
        cfg.data.partition = PartitionMode::Iid;
        cfg.channel.csi_quality = 0.8;
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn sections_are_read() {
        let cfg = ExperimentConfig::from_toml(
            "[channel]\nnum_antennas = 3\n[data]\npartition = { mode = \"dirichlet\", concentration = 0.1 }\nseparation = 5.0\n[experiment]\nmethods = [\"uniform\"]\n",
        )
        .unwrap();
        assert_eq!(cfg.channel.num_antennas, 3);
        assert_eq!(cfg.data.spec.separation, 5.0);
        assert_eq!(cfg.data.partition, PartitionMode::Dirichlet { concentration: 0.1 });
        assert_eq!(cfg.experiment.methods, vec![Method::Uniform]);
    }

    #[test]
    fn partial_sections_keep_preset_defaults() {
        let cfg = ExperimentConfig::from_toml("[learner]\nrounds = 7\n[data]\npartition = { mode = \"iid\" }\n").unwrap();
        let d = ExperimentConfig::default();
        assert_eq!(cfg.learner.rounds, 7);
        assert_eq!(cfg.learner.hidden, d.learner.hidden);
        assert_eq!(cfg.learner.distill_weight, d.learner.distill_weight);
        assert_eq!(cfg.channel.noise_variance, d.channel.noise_variance);
        assert_eq!(cfg.data.partition, PartitionMode::Iid);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(ExperimentConfig::from_toml("[experiment]\nmethods = []\n").is_err());
        assert!(ExperimentConfig::from_toml("[experiment]\nmethods = [\"magic\"]\n").is_err());
        assert!(ExperimentConfig::from_toml("[learner]\ninit_lr = -1.0\n").is_err());
    }
}
