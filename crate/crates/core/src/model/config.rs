use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters and ablation switches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of Gaussian kernels in temporal kernel aggregation.
    pub kernels: usize,
    /// Channel width of the pre-convolution.
    pub preconv_channels: usize,
    /// Time-embedding width.
    pub time_embed_dim: usize,
    /// Hidden width `d`.
    pub hidden: usize,
    pub heads: usize,
    /// Random Fourier feature count `R` (cos and sin halves together).
    pub rff_dim: usize,
    /// Number of stacked frequency attention blocks.
    pub blocks: usize,
    /// Seed for parameter initialization and the fixed RFF draws.
    pub init_seed: u64,
    /// Normalize each variate's timeline by its own observed extremes
    /// instead of the shared grid endpoints.
    #[serde(default)]
    pub per_variate_time_norm: bool,
    #[serde(default)]
    pub ablation: Ablation,
}

/// Toy-scale ablation switches. All off is the full model.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ablation {
    /// Skip the convolution branch; the time term is kept.
    #[serde(default)]
    pub no_preconv: bool,
    /// Use raw kernel summaries without the sigmoid gate.
    #[serde(default)]
    pub no_tka_gate: bool,
    /// Exact softmax attention over variates instead of the RFF kernel.
    #[serde(default)]
    pub softmax_attention: bool,
    /// Feed raw grid times to the Gaussian kernels.
    #[serde(default)]
    pub no_time_norm: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kernels: 8,
            preconv_channels: 16,
            time_embed_dim: 16,
            hidden: 32,
            heads: 4,
            rff_dim: 64,
            blocks: 1,
            init_seed: 0,
            per_variate_time_norm: false,
            ablation: Ablation::default(),
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    /// Width of the FLA feed-forward hidden layer.
    pub fn mlp_dim(&self) -> usize {
        2 * self.hidden
    }

    /// Sin-branch width of the time embedding; the cos branch takes the rest
    /// after the single linear entry.
    pub fn sin_dim(&self) -> usize {
        (self.time_embed_dim - 1) / 2
    }

    pub fn cos_dim(&self) -> usize {
        self.time_embed_dim - 1 - self.sin_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.kernels < 2 {
            return fail(format!("kernels must be >= 2, got {}", self.kernels));
        }
        if self.preconv_channels == 0 {
            return fail("preconv_channels must be positive".into());
        }
        if self.time_embed_dim < 3 {
            return fail(format!(
                "time_embed_dim must be >= 3, got {}",
                self.time_embed_dim
            ));
        }
        if self.hidden < 2 || !self.hidden.is_multiple_of(2) {
            return fail(format!(
                "hidden width must be even and >= 2, got {}",
                self.hidden
            ));
        }
        if self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return fail(format!(
                "heads ({}) must divide the hidden width ({})",
                self.heads, self.hidden
            ));
        }
        if self.rff_dim < 2 || !self.rff_dim.is_multiple_of(2) {
            return fail(format!(
                "rff_dim must be even and >= 2, got {}",
                self.rff_dim
            ));
        }
        if self.blocks == 0 {
            return fail("blocks must be >= 1".into());
        }
        Ok(())
    }

    /// Non-fatal notes about values outside the reference sweep.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: &str, v: usize, grid: &[usize]| {
            if !grid.contains(&v) {
                out.push(format!(
                    "{name} = {v} is outside the reference grid {grid:?}"
                ));
            }
        };
        check("kernels", self.kernels, &[2, 4, 8, 16]);
        check("preconv_channels", self.preconv_channels, &[8, 16, 32, 64]);
        check("time_embed_dim", self.time_embed_dim, &[16, 32, 64]);
        check("hidden", self.hidden, &[32, 64, 128, 256]);
        check("blocks", self.blocks, &[1, 2, 3, 4]);
        if !self.hidden.is_power_of_two() {
            out.push(format!(
                "hidden = {} is not a power of two; the FFT falls back to direct summation",
                self.hidden
            ));
        }
        out
    }

    /// Closed-form trainable parameter count from the configured shapes.
    pub fn analytic_param_count(&self) -> usize {
        let c = self.preconv_channels;
        let te = self.time_embed_dim;
        let k = self.kernels;
        let d = self.hidden;
        let preconv = 3 * c + c + c + 1;
        // w_s, b_s, sin and cos branches (weight + bias each), W_t.
        let time_embed = 2 + 2 * (te - 1) + te;
        let tka = k + k + (k + 1) * d;
        let block = 3 * d * d + 4 * d + (d * 2 * d + 2 * d) + (2 * d * d + d);
        let w_a = d * d;
        let head = (d + te) * d + d + d * d + d + d + 1;
        preconv + time_embed + tka + self.blocks * block + w_a + head
    }
}
