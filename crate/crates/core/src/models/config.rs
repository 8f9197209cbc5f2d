use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    Gcn,
    SageMean,
    GraphMlp,
}

impl BackboneKind {
    pub const ALL: [BackboneKind; 3] = [BackboneKind::Gcn, BackboneKind::SageMean, BackboneKind::GraphMlp];
}

/// Neighborhood-contrastive settings, used only by Graph-MLP.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastiveConfig {
    /// Adjacency power defining positive pairs.
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default = "default_one")]
    pub tau: f64,
    /// Weight of the contrastive term in the total loss.
    #[serde(default = "default_one")]
    pub beta: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_r() -> usize {
    2
}
fn default_one() -> f64 {
    1.0
}
fn default_batch() -> usize {
    2000
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            r: default_r(),
            tau: 1.0,
            beta: 1.0,
            batch_size: default_batch(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    #[serde(default = "default_layers")]
    pub layers: usize,
    pub hidden_dim: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub contrastive: ContrastiveConfig,
}

fn default_layers() -> usize {
    2
}

impl BackboneConfig {
    pub fn new(kind: BackboneKind, layers: usize, hidden_dim: usize, dropout: f64) -> Self {
        Self {
            kind,
            layers,
            hidden_dim,
            dropout,
            contrastive: ContrastiveConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 2 {
            return Err(Error::InvalidConfig(format!(
                "backbone needs at least 2 layers, got {}",
                self.layers
            )));
        }
        if self.hidden_dim == 0 {
            return Err(Error::InvalidConfig("hidden_dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        let c = &self.contrastive;
        if !(1..=3).contains(&c.r) {
            return Err(Error::InvalidConfig(format!("r = {} outside 1..=3", c.r)));
        }
        if c.tau <= 0.0 || !c.tau.is_finite() {
            return Err(Error::InvalidConfig(format!("tau = {} must be positive", c.tau)));
        }
        if c.beta < 0.0 || !c.beta.is_finite() {
            return Err(Error::InvalidConfig(format!("beta = {} must be non-negative", c.beta)));
        }
        if c.batch_size < 2 {
            return Err(Error::InvalidConfig("contrastive batch_size must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    SoftmaxCe,
    SigmoidBceWeighted,
    IsomaxPlus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    pub kind: HeadKind,
    /// Training-time entropic scale of the prototype head; inference uses 1.
    #[serde(default = "default_entropic")]
    pub entropic_scale: f64,
}

fn default_entropic() -> f64 {
    10.0
}

impl HeadConfig {
    pub fn new(kind: HeadKind) -> Self {
        Self {
            kind,
            entropic_scale: default_entropic(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.entropic_scale >= 1.0) || !self.entropic_scale.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "entropic scale {} must be at least 1",
                self.entropic_scale
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
    /// Weight positive BCE terms by `(n - n_k)/n` (sigmoid head only).
    #[serde(default = "default_true")]
    pub class_weighting: bool,
}

fn default_true() -> bool {
    true
}

impl TrainConfig {
    pub fn new(epochs: usize, learning_rate: f64, seed: u64) -> Self {
        Self {
            epochs,
            learning_rate,
            seed,
            class_weighting: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        Ok(())
    }
}
