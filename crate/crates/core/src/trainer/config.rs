use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the per-window dense trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Width `d` of the dense embeddings.
    pub dim: usize,
    /// Base learning rate, scaled per record by the intra-agreement damping.
    pub learning_rate: f64,
    /// Weight of the intra-agreement term in the adaptive learning rate.
    pub tau: f64,
    /// Negatives drawn per positive unit.
    pub negatives: usize,
    /// Passes over each window; 0 leaves the vectors as hydrated.
    pub epochs: usize,
    /// AdaGrad stabilizer added to the squared-gradient history.
    pub epsilon: f64,
    /// Visit records in a seeded random order each epoch instead of arrival order.
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 300,
            learning_rate: 0.05,
            tau: 0.1,
            negatives: 3,
            epochs: 50,
            epsilon: 1.0,
            shuffle: false,
        }
    }
}

impl TrainConfig {
    /// Fewer epochs per window for streams with high record rates.
    pub fn high_rate() -> Self {
        TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.tau >= 0.0
            && self.negatives >= 1
            && self.epsilon > 0.0
            && self.dim >= 1
            && self.learning_rate.is_finite()
            && self.tau.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "invalid training config {self:?}"
            )))
        }
    }
}
