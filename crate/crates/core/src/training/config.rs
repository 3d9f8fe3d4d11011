use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Ablation, ModelConfig};

/// Hyperparameters for one training run. Missing keys in a config document
/// take these defaults; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub kernels: usize,
    pub preconv_channels: usize,
    pub time_embed_dim: usize,
    pub hidden: usize,
    pub heads: usize,
    pub rff_dim: usize,
    pub blocks: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Global gradient-norm clip applied before each Adam step.
    pub clip_norm: f64,
    pub per_variate_time_norm: bool,
    pub ablation: Ablation,
    /// Write measured wall time into the history `seconds` column. Off by
    /// default so that history files are reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kernels: 8,
            preconv_channels: 16,
            time_embed_dim: 16,
            hidden: 32,
            heads: 4,
            rff_dim: 64,
            blocks: 1,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 200,
            patience: 50,
            seed: 0,
            clip_norm: 5.0,
            per_variate_time_norm: false,
            ablation: Ablation::default(),
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            kernels: self.kernels,
            preconv_channels: self.preconv_channels,
            time_embed_dim: self.time_embed_dim,
            hidden: self.hidden,
            heads: self.heads,
            rff_dim: self.rff_dim,
            blocks: self.blocks,
            init_seed: self.seed,
            per_variate_time_norm: self.per_variate_time_norm,
            ablation: self.ablation.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model().validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be >= 1".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::InvalidConfig("clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = self.model().warnings();
        if ![1e-3, 1e-2].contains(&self.learning_rate) {
            w.push(format!(
                "learning_rate = {} is outside the reference grid [0.001, 0.01]",
                self.learning_rate
            ));
        }
        w
    }
}

/// Cartesian sweep over the reference hyperparameter grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperGrid {
    pub kernels: Vec<usize>,
    pub preconv_channels: Vec<usize>,
    pub time_embed_dim: Vec<usize>,
    pub hidden: Vec<usize>,
    pub blocks: Vec<usize>,
    pub learning_rate: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            kernels: vec![2, 4, 8, 16],
            preconv_channels: vec![8, 16, 32, 64],
            time_embed_dim: vec![16, 32, 64],
            hidden: vec![32, 64, 128, 256],
            blocks: vec![1, 2, 3, 4],
            learning_rate: vec![1e-3, 1e-2],
        }
    }
}

impl HyperGrid {
    pub fn len(&self) -> usize {
        self.kernels.len()
            * self.preconv_channels.len()
            * self.time_embed_dim.len()
            * self.hidden.len()
            * self.blocks.len()
            * self.learning_rate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every combination applied on top of `base`, in lexicographic order of
    /// the fields above.
    pub fn configs(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &kernels in &self.kernels {
            for &preconv_channels in &self.preconv_channels {
                for &time_embed_dim in &self.time_embed_dim {
                    for &hidden in &self.hidden {
                        for &blocks in &self.blocks {
                            for &learning_rate in &self.learning_rate {
                                out.push(TrainConfig {
                                    kernels,
                                    preconv_channels,
                                    time_embed_dim,
                                    hidden,
                                    blocks,
                                    learning_rate,
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
