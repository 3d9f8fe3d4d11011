//! The forecaster: pre-convolution with time embedding, temporal kernel
//! aggregation, frequency linear attention blocks and a query-conditioned
//! output head.

mod config;
mod layers;
mod params;
#[cfg(test)]
mod tests;

pub use config::{Ablation, ModelConfig};
pub use layers::{
    attention_weights, fla_block, kernel_centers, linear_attention, linear_attention_with_eps,
    preconv, rff_map, time_embed, tka_aggregate, tka_weights, ATTENTION_EPS,
    DEGENERATE_DENOMINATOR,
};
pub use params::{
    FlaBlockParams, HeadParams, ModelParams, OutputHeadParams, PreConvParams, TimeEmbedParams,
    TkaParams,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::imts::{align, normalize_times, AlignedTriplet, ImtsSample};
use layers::{
    conv_branch_tape, conv_windows, fla_block_tape, kernel_affinity_tape, time_embed_tape,
    tka_aggregate_tape, tka_coefficients_tape,
};

/// Handles to the interesting nodes of one recorded forward pass.
pub struct ForwardTrace {
    /// `Q x 1`, queries in variate-major order.
    pub predictions: Var,
    /// `N x d` variate summaries after the final projection.
    pub encoded: Var,
    /// Registered parameter handles.
    pub params: ModelParams<Var>,
    /// Per block, per head: `(q, k, v, out)`.
    pub heads: Vec<Vec<(Var, Var, Var, Var)>>,
    /// Linear-attention rows whose denominator collapsed below
    /// [`DEGENERATE_DENOMINATOR`] before epsilon.
    pub degenerate_denominators: usize,
}

/// One attention map for inspection: `N x N`, rows sum to one.
#[derive(Clone, Debug)]
pub struct AttentionMap {
    pub block: usize,
    pub head: usize,
    pub weights: Tensor,
    /// The head's inputs and its linear-order output, for consistency checks
    /// against `weights`.
    pub queries: Tensor,
    pub keys: Tensor,
    pub values: Tensor,
    pub output: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Kafnet {
    config: ModelConfig,
    params: ModelParams,
}

impl Kafnet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let params = ModelParams::init(&config)?;
        Ok(Self { config, params })
    }

    /// Wraps existing parameters after checking every shape against the
    /// configuration.
    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Self> {
        let reference = ModelParams::init(&config)?;
        let want = reference.named();
        let got = params.named();
        if want.len() != got.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameter tensors, found {}",
                want.len(),
                got.len()
            )));
        }
        for ((wn, wt), (gn, gt)) in want.iter().zip(&got) {
            if wn != gn || wt.shape() != gt.shape() {
                return Err(Error::InvalidConfig(format!(
                    "parameter {gn} has shape {:?}, expected {wn} with {:?}",
                    gt.shape(),
                    wt.shape()
                )));
            }
        }
        for ((ro, rp), (go, gp)) in reference.rff_buffers().iter().zip(params.rff_buffers()) {
            if ro.shape() != go.shape() || rp.shape() != gp.shape() {
                return Err(Error::InvalidConfig("RFF buffer shape mismatch".into()));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn into_parts(self) -> (ModelConfig, ModelParams) {
        (self.config, self.params)
    }

    /// Copy with `U(-scale, scale)` noise added to every trainable leaf.
    /// Fresh models have exactly zero query/key gradients (value weights
    /// start at zero); a perturbed copy exercises every path.
    pub fn perturbed(&self, scale: f64, seed: u64) -> Result<Self> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "perturbation scale must be finite and >= 0, got {scale}"
            )));
        }
        let mut out = self.clone();
        if scale > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for t in out.params.leaves_mut() {
                t.data_mut()
                    .iter_mut()
                    .for_each(|v| *v += rng.random_range(-scale..scale));
            }
        }
        Ok(out)
    }

    /// Runtime-enumerated trainable parameter count.
    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Registers every trainable tensor on `tape` and records a forward pass.
    pub fn record(&self, tape: &mut Tape, sample: &ImtsSample) -> Result<ForwardTrace> {
        let pv = self
            .params
            .try_map(&mut |name, t| tape.param(name, t.clone()))?;
        self.record_with(tape, pv, sample)
    }

    /// Records a forward pass using already-registered parameter handles.
    pub fn record_with(
        &self,
        tape: &mut Tape,
        params: ModelParams<Var>,
        sample: &ImtsSample,
    ) -> Result<ForwardTrace> {
        let triplet = align(sample)?;
        let queries: Vec<(usize, f64)> = sample
            .flat_queries()
            .into_iter()
            .map(|(n, q)| (n, q.time))
            .collect();
        record_aligned(tape, &self.config, params, &triplet, &queries)
    }

    /// Predictions for every query of `sample`, variate-major order.
    pub fn forward(&self, sample: &ImtsSample) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let trace = self.record(&mut tape, sample)?;
        Ok(tape.value(trace.predictions).data().to_vec())
    }

    /// Predictions for explicit `(variate, time)` queries on an aligned grid.
    pub fn forward_aligned(
        &self,
        triplet: &AlignedTriplet,
        queries: &[(usize, f64)],
    ) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let pv = self
            .params
            .try_map(&mut |name, t| tape.param(name, t.clone()))?;
        let trace = record_aligned(&mut tape, &self.config, pv, triplet, queries)?;
        Ok(tape.value(trace.predictions).data().to_vec())
    }

    /// The `N x d` variate summaries fed to the output head.
    pub fn encode(&self, sample: &ImtsSample) -> Result<Tensor> {
        let mut tape = Tape::new();
        let trace = self.record(&mut tape, sample)?;
        Ok(tape.value(trace.encoded).clone())
    }

    /// Materialized attention maps, one per block and head, computed from the
    /// same queries and keys the forward pass used.
    pub fn attention_maps(&self, sample: &ImtsSample) -> Result<Vec<AttentionMap>> {
        let mut tape = Tape::new();
        let trace = self.record(&mut tape, sample)?;
        let mut out = Vec::new();
        for (b, heads) in trace.heads.iter().enumerate() {
            let block = &self.params.blocks[b];
            for (h, &(q, k, v, o)) in heads.iter().enumerate() {
                let weights = if self.config.ablation.softmax_attention {
                    softmax_weights(tape.value(q), tape.value(k))?
                } else {
                    attention_weights(
                        tape.value(q),
                        tape.value(k),
                        &block.rff_omega,
                        &block.rff_phase,
                    )?
                };
                out.push(AttentionMap {
                    block: b,
                    head: h,
                    weights,
                    queries: tape.value(q).clone(),
                    keys: tape.value(k).clone(),
                    values: tape.value(v).clone(),
                    output: tape.value(o).clone(),
                });
            }
        }
        Ok(out)
    }
}

impl AttentionMap {
    /// Largest entry of `|weights V - O|`, where `O` is the linear-order
    /// evaluation without the denominator epsilon. The map and `O` are
    /// two association orders of the same product.
    pub fn consistency_error(&self, model: &Kafnet) -> Result<f64> {
        let block = &model.params().blocks[self.block];
        let direct = self.weights.matmul(&self.values)?;
        let linear = if model.config().ablation.softmax_attention {
            self.output.clone()
        } else {
            linear_attention_with_eps(
                &self.queries,
                &self.keys,
                &self.values,
                &block.rff_omega,
                &block.rff_phase,
                0.0,
            )?
            .0
        };
        Ok(direct.max_abs_diff(&linear))
    }
}

fn softmax_weights(q: &Tensor, k: &Tensor) -> Result<Tensor> {
    let scale = 1.0 / (q.cols() as f64).sqrt();
    let mut s = q.matmul(&k.transpose())?;
    for i in 0..s.rows() {
        let row = s.row_slice(i).to_vec();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|x| ((x - max) * scale).exp()).collect();
        let total: f64 = e.iter().sum();
        for (j, v) in e.into_iter().enumerate() {
            s.set(i, j, v / total);
        }
    }
    Ok(s)
}

/// Full forward pass over an aligned sample.
pub fn record_aligned(
    tape: &mut Tape,
    cfg: &ModelConfig,
    params: ModelParams<Var>,
    triplet: &AlignedTriplet,
    queries: &[(usize, f64)],
) -> Result<ForwardTrace> {
    let l = triplet.grid_len();
    let n = triplet.n_variates();
    if let Some(&(bad, _)) = queries.iter().find(|(v, _)| *v >= n) {
        return Err(Error::InvalidSample(format!(
            "query on variate {bad} but sample has {n} variates"
        )));
    }

    // Time term W_t TE(t), shared by all variates on the common grid.
    let grid = tape.input(Tensor::column(triplet.times().to_vec()))?;
    let te_grid = time_embed_tape(tape, grid, &params.time_embed)?;
    let time_term = tape.matmul(te_grid, params.time_embed.projection)?;

    let conv = if cfg.ablation.no_preconv {
        None
    } else {
        let mut windows = Vec::with_capacity(n * l * 3);
        for v in 0..n {
            windows.extend_from_slice(conv_windows(&triplet.value_column(v)).data());
        }
        let windows = tape.input(Tensor::matrix(n * l, 3, windows)?)?;
        Some(conv_branch_tape(tape, windows, &params.preconv)?)
    };

    let shared_timeline = cfg.ablation.no_time_norm || !cfg.per_variate_time_norm;
    let normalized = normalize_times(triplet, cfg.per_variate_time_norm);
    let timeline = |v: usize| -> Vec<f64> {
        if cfg.ablation.no_time_norm {
            triplet.times().to_vec()
        } else {
            normalized.column(v).to_vec()
        }
    };
    let shared_affinity = if shared_timeline {
        Some(kernel_affinity_tape(
            tape,
            &timeline(0),
            params.tka.log_alpha,
        )?)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(n);
    for v in 0..n {
        let smoothed = match conv {
            Some(c) => tape.slice_rows(c, v * l, (v + 1) * l)?,
            None => tape.input(Tensor::column(triplet.value_column(v)))?,
        };
        let x_hat = tape.add(smoothed, time_term)?;
        let mask_col = triplet.mask_column(v);
        let observed = mask_col.iter().any(|&m| m > 0.0);
        let mask = tape.input(Tensor::column(mask_col))?;
        let affinity = match shared_affinity {
            Some(a) => a,
            None => kernel_affinity_tape(tape, &timeline(v), params.tka.log_alpha)?,
        };
        let coeffs = tka_coefficients_tape(tape, affinity, mask)?;
        rows.push(tka_aggregate_tape(
            tape,
            x_hat,
            coeffs,
            observed,
            &params.tka,
            !cfg.ablation.no_tka_gate,
        )?);
    }
    let mut z = tape.concat_rows(&rows)?;

    let mut heads = Vec::with_capacity(params.blocks.len());
    let mut degenerate = 0;
    for block in &params.blocks {
        let out = fla_block_tape(tape, z, block, cfg.ablation.softmax_attention)?;
        z = out.out;
        degenerate += out.degenerate;
        heads.push(out.heads.iter().map(|h| (h.q, h.k, h.v, h.out)).collect());
    }
    let encoded = tape.matmul(z, params.mix)?;

    let idx: Vec<usize> = queries.iter().map(|(v, _)| *v).collect();
    let qt = tape.input(Tensor::column(queries.iter().map(|(_, t)| *t).collect()))?;
    let te_q = time_embed_tape(tape, qt, &params.time_embed)?;
    let head = &params.head;
    // [summary, te] W1 = summary W1_top + te W1_bottom; the summary half is
    // computed once per variate rather than once per query.
    let d = tape.value(encoded).cols();
    let w1_rows = tape.value(head.w1).rows();
    let w1_top = tape.slice_rows(head.w1, 0, d)?;
    let w1_bottom = tape.slice_rows(head.w1, d, w1_rows)?;
    let per_variate = tape.matmul(encoded, w1_top)?;
    let summary = tape.gather_rows(per_variate, &idx)?;
    let time_part = tape.matmul(te_q, w1_bottom)?;
    let x = tape.add(summary, time_part)?;
    let x = tape.add(x, head.b1)?;
    let x = tape.relu(x)?;
    let x = tape.matmul(x, head.w2)?;
    let x = tape.add(x, head.b2)?;
    let x = tape.relu(x)?;
    let x = tape.matmul(x, head.w3)?;
    let predictions = tape.add(x, head.b3)?;

    Ok(ForwardTrace {
        predictions,
        encoded,
        params,
        heads,
        degenerate_denominators: degenerate,
    })
}

impl ModelParams {
    /// Rebuilds the layout from handles given in canonical leaf order.
    pub fn with_leaves(&self, leaves: &[Var]) -> Result<ModelParams<Var>> {
        let mut it = leaves.iter();
        self.try_map(&mut |name, _| {
            it.next()
                .copied()
                .ok_or_else(|| Error::InvalidConfig(format!("missing handle for parameter {name}")))
        })
    }
}
