//! Run configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::harness::{make_static_tasks, make_temporal_tasks, PipelineConfig, TaskStream};
use crate::scalar::Scalar;

/// How the dataset is cut into tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtocolConfig {
    /// One task per held-out class.
    StaticLoco {
        /// Classes to hold out; all classes when absent.
        #[serde(default)]
        holdouts: Option<Vec<usize>>,
        #[serde(default = "default_fractions")]
        fractions: [f64; 3],
    },
    /// One task per pair of consecutive years from `t0` on.
    Temporal { t0: i64 },
}

fn default_fractions() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

impl ProtocolConfig {
    /// Builds the task stream for `g`; `seed` drives the static split.
    pub fn build<T: Scalar>(&self, g: &Graph<T>, seed: u64) -> Result<TaskStream<T>> {
        match self {
            ProtocolConfig::StaticLoco { holdouts, fractions } => {
                let all: Vec<usize> = (0..g.num_classes()).collect();
                make_static_tasks(g, holdouts.as_deref().unwrap_or(&all), *fractions, seed)
            }
            ProtocolConfig::Temporal { t0 } => make_temporal_tasks(g, *t0),
        }
    }
}

/// A complete run: data, protocol, pipeline and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Bundle directory. Relative paths are resolved against the directory
    /// holding the config file.
    pub dataset: PathBuf,
    pub protocol: ProtocolConfig,
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        if let ProtocolConfig::StaticLoco { fractions, .. } = &self.protocol {
            let sum: f64 = fractions.iter().sum();
            if fractions.iter().any(|f| *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
            }
        }
        Ok(())
    }

    /// Parses and validates a config document. `base` anchors a relative
    /// dataset path.
    pub fn from_json(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("run config: {e}")))?;
        if let Some(base) = base {
            if cfg.dataset.is_relative() {
                cfg.dataset = base.join(&cfg.dataset);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path.parent())
    }
}
