//! Flat TOML run configuration. Every key is optional; unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::{LossWeights, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub aspects: usize,
    pub sub_aspects: usize,
    pub hidden: usize,
    pub tau_z: f64,
    pub tau_psi: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub weight_gen: f64,
    pub weight_mse: f64,
    pub weight_kl_z: f64,
    pub weight_kl_psi: f64,
    /// Defaults to the corpus rating range when either bound is absent.
    pub rating_min: Option<f64>,
    pub rating_max: Option<f64>,
    pub validation_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::new(1, 3, 2);
        let t = TrainConfig::default();
        Self {
            aspects: m.aspects,
            sub_aspects: m.sub_aspects,
            hidden: m.hidden,
            tau_z: m.tau_z,
            tau_psi: m.tau_psi,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            seed: t.seed,
            weight_gen: t.loss_weights.gen,
            weight_mse: t.loss_weights.mse,
            weight_kl_z: t.loss_weights.kl_z,
            weight_kl_psi: t.loss_weights.kl_psi,
            rating_min: None,
            rating_max: None,
            validation_fraction: t.validation_fraction,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let m = ModelConfig {
            vocab_size,
            aspects: self.aspects,
            sub_aspects: self.sub_aspects,
            hidden: self.hidden,
            tau_z: self.tau_z,
            tau_psi: self.tau_psi,
        };
        m.validate()?;
        Ok(m)
    }

    /// `corpus_range` fills whichever rating bound the file leaves unset.
    pub fn train_config(&self, corpus_range: (f64, f64)) -> Result<TrainConfig> {
        let scale = (
            self.rating_min.unwrap_or(corpus_range.0),
            self.rating_max.unwrap_or(corpus_range.1),
        );
        let t = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            seed: self.seed,
            loss_weights: LossWeights {
                gen: self.weight_gen,
                mse: self.weight_mse,
                kl_z: self.weight_kl_z,
                kl_psi: self.weight_kl_psi,
            },
            rating_scale: Some(scale),
            validation_fraction: self.validation_fraction,
        };
        t.validate()?;
        Ok(t)
    }
}
