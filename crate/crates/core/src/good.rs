//! Neighborhood aggregation of OOD scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{neighbor_mean, Graph};
use crate::scalar::Scalar;
use crate::scores::ScoreVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoodConfig {
    /// Weight of the neighbor mean, in `[0, 1]`.
    pub alpha_ood: f64,
}

impl GoodConfig {
    pub fn new(alpha_ood: f64) -> Result<Self> {
        let cfg = Self { alpha_ood };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha_ood) {
            return Err(Error::InvalidConfig(format!(
                "alpha_ood {} outside [0, 1]",
                self.alpha_ood
            )));
        }
        Ok(())
    }
}

/// `(1 - α)·S_v + α·mean_{w ∈ N(v)} S_w` for every vertex of `g`. Isolated
/// vertices keep their own score.
pub fn good_aggregate<T: Scalar>(
    g: &Graph<T>,
    base: &ScoreVector<T>,
    cfg: &GoodConfig,
) -> Result<ScoreVector<T>> {
    cfg.validate()?;
    let own = base.as_slice();
    let means = neighbor_mean(g, own)?;
    let alpha = T::lit(cfg.alpha_ood);
    let keep = T::one() - alpha;
    let mixed = own
        .iter()
        .zip(&means)
        .map(|(&s, &m)| (keep * s + alpha * m).max(T::zero()).min(T::one()))
        .collect();
    ScoreVector::new(mixed)
}
