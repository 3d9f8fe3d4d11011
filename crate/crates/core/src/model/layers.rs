//! Layer computations recorded on a [`Tape`], plus plain-tensor entry points
//! that run them on a throwaway tape.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::params::{FlaBlockParams, PreConvParams, TimeEmbedParams, TkaParams};

/// Added to the linear-attention denominator.
pub const ATTENTION_EPS: f64 = 1e-6;

/// Pre-epsilon denominators below this magnitude are counted as degenerate.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

/// Evenly spaced kernel centers `k / (K - 1)`, endpoints included.
pub fn kernel_centers(k: usize) -> Vec<f64> {
    (0..k).map(|i| i as f64 / (k - 1) as f64).collect()
}

/// `[w_s t + b_s, sin(W_p t + b_p), cos(W_c t + b_c)]` for a column of times.
pub(crate) fn time_embed_tape(tape: &mut Tape, t: Var, p: &TimeEmbedParams<Var>) -> Result<Var> {
    let lin = tape.mul(t, p.linear_weight)?;
    let lin = tape.add(lin, p.linear_bias)?;
    let s = tape.mul(t, p.sin_weight)?;
    let s = tape.add(s, p.sin_bias)?;
    let s = tape.sin(s)?;
    let c = tape.mul(t, p.cos_weight)?;
    let c = tape.add(c, p.cos_bias)?;
    let c = tape.cos(c)?;
    tape.concat_cols(&[lin, s, c])
}

/// Zero-padded `L x 3` window matrix: row `l` is `[x_{l-1}, x_l, x_{l+1}]`.
pub(crate) fn conv_windows(x: &[f64]) -> Tensor {
    let l = x.len();
    let mut data = Vec::with_capacity(3 * l);
    for i in 0..l {
        data.push(if i > 0 { x[i - 1] } else { 0.0 });
        data.push(x[i]);
        data.push(if i + 1 < l { x[i + 1] } else { 0.0 });
    }
    Tensor::matrix(l, 3, data).expect("window shape")
}

/// `Conv1x1(ReLU(Conv1x3(x)))` over a stack of window matrices. Returns a
/// column with one entry per window row.
pub(crate) fn conv_branch_tape(
    tape: &mut Tape,
    windows: Var,
    p: &PreConvParams<Var>,
) -> Result<Var> {
    let k = tape.transpose(p.depth_kernel)?;
    let h = tape.matmul(windows, k)?;
    let h = tape.add(h, p.depth_bias)?;
    let h = tape.relu(h)?;
    let out = tape.matmul(h, p.point_kernel)?;
    tape.add(out, p.point_bias)
}

/// Gaussian affinities `exp(-(t_l - c_k)^2 / 2 sigma_k^2)` before masking,
/// `L x K`.
pub(crate) fn kernel_affinity_tape(tape: &mut Tape, t_hat: &[f64], log_alpha: Var) -> Result<Var> {
    let k = tape.value(log_alpha).len();
    let centers = kernel_centers(k);
    let mut sq = Vec::with_capacity(t_hat.len() * k);
    for &t in t_hat {
        sq.extend(centers.iter().map(|c| (t - c) * (t - c)));
    }
    let sq = tape.input(Tensor::matrix(t_hat.len(), k, sq)?)?;
    // 1 / sigma^2 = exp(-2 log_alpha)
    let inv_var = tape.scale(log_alpha, -2.0)?;
    let inv_var = tape.exp(inv_var)?;
    let e = tape.mul(sq, inv_var)?;
    let e = tape.scale(e, -0.5)?;
    tape.exp(e)
}

/// Column-normalized masked kernel weights `a_{l,k}`. Columns with no
/// observed mass are all zero.
pub(crate) fn tka_coefficients_tape(tape: &mut Tape, affinity: Var, mask: Var) -> Result<Var> {
    let w = tape.mul(affinity, mask)?;
    let total = tape.sum_rows(w)?;
    tape.safe_div(w, total)
}

/// Kernel pooling, gating, presence flag and projection to width `d`.
pub(crate) fn tka_aggregate_tape(
    tape: &mut Tape,
    x_hat: Var,
    coeffs: Var,
    observed: bool,
    p: &TkaParams<Var>,
    gated: bool,
) -> Result<Var> {
    let xt = tape.transpose(x_hat)?;
    let h = tape.matmul(xt, coeffs)?;
    let h = if gated {
        let g = tape.sigmoid(p.gate)?;
        tape.mul(g, h)?
    } else {
        h
    };
    let flag = tape.input(Tensor::scalar(if observed { 1.0 } else { 0.0 }))?;
    let hf = tape.concat_cols(&[h, flag])?;
    tape.matmul(hf, p.projection)
}

/// `(1/sqrt(R)) [cos(X Omega + b), sin(X Omega + b)]`.
pub(crate) fn rff_map_tape(tape: &mut Tape, x: Var, omega: Var, phase: Var) -> Result<Var> {
    let r = 2 * tape.value(omega).cols();
    let proj = tape.matmul(x, omega)?;
    let proj = tape.add(proj, phase)?;
    let c = tape.cos(proj)?;
    let s = tape.sin(proj)?;
    let phi = tape.concat_cols(&[c, s])?;
    tape.scale(phi, 1.0 / (r as f64).sqrt())
}

/// Kernelized attention in linear-cost association order. Returns the
/// output and the number of rows whose denominator was degenerate.
pub(crate) fn linear_attention_tape(
    tape: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    omega: Var,
    phase: Var,
    eps: f64,
) -> Result<(Var, usize)> {
    let pq = rff_map_tape(tape, q, omega, phase)?;
    let pk = rff_map_tape(tape, k, omega, phase)?;
    let pkt = tape.transpose(pk)?;
    let kv = tape.matmul(pkt, v)?;
    let num = tape.matmul(pq, kv)?;
    let ksum = tape.sum_cols(pkt)?;
    let den = tape.matmul(pq, ksum)?;
    let degenerate = tape
        .value(den)
        .data()
        .iter()
        .filter(|d| d.abs() < DEGENERATE_DENOMINATOR)
        .count();
    let den = tape.offset(den, eps)?;
    Ok((tape.div(num, den)?, degenerate))
}

/// Scaled dot-product softmax attention, used by the ablation switch.
pub(crate) fn softmax_attention_tape(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<Var> {
    let dh = tape.value(q).cols();
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt())?;
    let w = tape.softmax_rows(scores)?;
    tape.matmul(w, v)
}

/// Per-head intermediates of one block, kept for inspection.
#[derive(Clone, Debug)]
pub(crate) struct HeadTrace {
    pub q: Var,
    pub k: Var,
    pub v: Var,
    pub out: Var,
}

pub(crate) struct BlockOutput {
    pub out: Var,
    pub heads: Vec<HeadTrace>,
    pub degenerate: usize,
}

fn affine_layernorm(tape: &mut Tape, x: Var, scale: Var, shift: Var) -> Result<Var> {
    let n = tape.layernorm(x)?;
    let n = tape.mul(n, scale)?;
    tape.add(n, shift)
}

/// One frequency attention block:
/// `U = Z + irfft(heads(rfft(LN(Z))))`, `out = U + MLP(LN(U))`.
pub(crate) fn fla_block_tape(
    tape: &mut Tape,
    z: Var,
    p: &FlaBlockParams<Var>,
    softmax: bool,
) -> Result<BlockOutput> {
    let normed = affine_layernorm(tape, z, p.norm1_scale, p.norm1_shift)?;
    let spectrum = tape.rfft_rows(normed)?;
    let omega = tape.input(p.rff_omega.clone())?;
    let phase = tape.input(p.rff_phase.clone())?;

    let mut heads = Vec::with_capacity(p.heads.len());
    let mut degenerate = 0;
    for hp in &p.heads {
        let q = tape.matmul(spectrum, hp.query)?;
        let k = tape.matmul(spectrum, hp.key)?;
        let v = tape.matmul(spectrum, hp.value)?;
        let out = if softmax {
            softmax_attention_tape(tape, q, k, v)?
        } else {
            let (o, bad) = linear_attention_tape(tape, q, k, v, omega, phase, ATTENTION_EPS)?;
            degenerate += bad;
            o
        };
        heads.push(HeadTrace { q, k, v, out });
    }
    let outs: Vec<Var> = heads.iter().map(|h| h.out).collect();
    let cat = tape.concat_cols(&outs)?;
    let back = tape.irfft_rows(cat)?;
    let u = tape.add(z, back)?;

    let n2 = affine_layernorm(tape, u, p.norm2_scale, p.norm2_shift)?;
    let m = tape.matmul(n2, p.mlp_in)?;
    let m = tape.add(m, p.mlp_in_bias)?;
    let m = tape.relu(m)?;
    let m = tape.matmul(m, p.mlp_out)?;
    let m = tape.add(m, p.mlp_out_bias)?;
    let out = tape.add(u, m)?;
    Ok(BlockOutput {
        out,
        heads,
        degenerate,
    })
}

// ---------------------------------------------------------------------------
// Plain-tensor entry points.

fn time_embed_vars(tape: &mut Tape, p: &TimeEmbedParams) -> Result<TimeEmbedParams<Var>> {
    Ok(TimeEmbedParams {
        linear_weight: tape.input(p.linear_weight.clone())?,
        linear_bias: tape.input(p.linear_bias.clone())?,
        sin_weight: tape.input(p.sin_weight.clone())?,
        sin_bias: tape.input(p.sin_bias.clone())?,
        cos_weight: tape.input(p.cos_weight.clone())?,
        cos_bias: tape.input(p.cos_bias.clone())?,
        projection: tape.input(p.projection.clone())?,
    })
}

/// Time embedding of a single timestamp.
pub fn time_embed(t: f64, p: &TimeEmbedParams) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let pv = time_embed_vars(&mut tape, p)?;
    let tv = tape.input(Tensor::scalar(t))?;
    let out = time_embed_tape(&mut tape, tv, &pv)?;
    Ok(tape.value(out).data().to_vec())
}

/// `Conv1x1(ReLU(Conv1x3(x))) + W_t TE(t)` for one variate.
pub fn preconv(
    x: &[f64],
    t: &[f64],
    tep: &TimeEmbedParams,
    pcp: &PreConvParams,
) -> Result<Vec<f64>> {
    if x.len() != t.len() || x.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "preconv",
            lhs: vec![x.len()],
            rhs: vec![t.len()],
        });
    }
    let mut tape = Tape::new();
    let tev = time_embed_vars(&mut tape, tep)?;
    let pcv = PreConvParams {
        depth_kernel: tape.input(pcp.depth_kernel.clone())?,
        depth_bias: tape.input(pcp.depth_bias.clone())?,
        point_kernel: tape.input(pcp.point_kernel.clone())?,
        point_bias: tape.input(pcp.point_bias.clone())?,
    };
    let windows = tape.input(conv_windows(x))?;
    let conv = conv_branch_tape(&mut tape, windows, &pcv)?;
    let tv = tape.input(Tensor::column(t.to_vec()))?;
    let te = time_embed_tape(&mut tape, tv, &tev)?;
    let time_term = tape.matmul(te, tev.projection)?;
    let out = tape.add(conv, time_term)?;
    Ok(tape.value(out).data().to_vec())
}

/// Normalized kernel coefficients `A` (`L x K`) for one variate.
pub fn tka_weights(t_hat: &[f64], mask: &[f64], p: &TkaParams) -> Result<Tensor> {
    if t_hat.len() != mask.len() {
        return Err(Error::ShapeMismatch {
            op: "tka_weights",
            lhs: vec![t_hat.len()],
            rhs: vec![mask.len()],
        });
    }
    let mut tape = Tape::new();
    let la = tape.input(p.log_alpha.clone())?;
    let aff = kernel_affinity_tape(&mut tape, t_hat, la)?;
    let m = tape.input(Tensor::column(mask.to_vec()))?;
    let a = tka_coefficients_tape(&mut tape, aff, m)?;
    Ok(tape.value(a).clone())
}

/// Pooled, gated and projected kernel summary `z` (length `d`).
pub fn tka_aggregate(
    x_hat: &[f64],
    coeffs: &Tensor,
    mask: &[f64],
    p: &TkaParams,
) -> Result<Vec<f64>> {
    if coeffs.rows() != x_hat.len() || mask.len() != x_hat.len() {
        return Err(Error::ShapeMismatch {
            op: "tka_aggregate",
            lhs: vec![x_hat.len()],
            rhs: coeffs.shape().to_vec(),
        });
    }
    let mut tape = Tape::new();
    let pv = TkaParams {
        log_alpha: tape.input(p.log_alpha.clone())?,
        gate: tape.input(p.gate.clone())?,
        projection: tape.input(p.projection.clone())?,
    };
    let x = tape.input(Tensor::column(x_hat.to_vec()))?;
    let a = tape.input(coeffs.clone())?;
    let observed = mask.iter().sum::<f64>() > 0.0;
    let z = tka_aggregate_tape(&mut tape, x, a, observed, &pv, true)?;
    Ok(tape.value(z).data().to_vec())
}

/// Random Fourier feature map of each row of `x`.
pub fn rff_map(x: &Tensor, omega: &Tensor, phase: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (xv, ov, pv) = (
        tape.input(x.clone())?,
        tape.input(omega.clone())?,
        tape.input(phase.clone())?,
    );
    let out = rff_map_tape(&mut tape, xv, ov, pv)?;
    Ok(tape.value(out).clone())
}

/// RFF linear attention with the default epsilon.
pub fn linear_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    omega: &Tensor,
    phase: &Tensor,
) -> Result<Tensor> {
    linear_attention_with_eps(q, k, v, omega, phase, ATTENTION_EPS).map(|(o, _)| o)
}

/// RFF linear attention with an explicit denominator epsilon; also returns
/// the degenerate-denominator count.
pub fn linear_attention_with_eps(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    omega: &Tensor,
    phase: &Tensor,
    eps: f64,
) -> Result<(Tensor, usize)> {
    if q.dims() != k.dims() || k.rows() != v.rows() {
        return Err(Error::ShapeMismatch {
            op: "linear_attention",
            lhs: q.shape().to_vec(),
            rhs: k.shape().to_vec(),
        });
    }
    let mut tape = Tape::new();
    let qv = tape.input(q.clone())?;
    let kv = tape.input(k.clone())?;
    let vv = tape.input(v.clone())?;
    let ov = tape.input(omega.clone())?;
    let pv = tape.input(phase.clone())?;
    let (out, bad) = linear_attention_tape(&mut tape, qv, kv, vv, ov, pv, eps)?;
    Ok((tape.value(out).clone(), bad))
}

/// Row-normalized kernel weights `phi(Q) phi(K)^T`, materialized `N x N`.
/// Inspection only; the model never builds this matrix.
pub fn attention_weights(q: &Tensor, k: &Tensor, omega: &Tensor, phase: &Tensor) -> Result<Tensor> {
    let pq = rff_map(q, omega, phase)?;
    let pk = rff_map(k, omega, phase)?;
    let mut w = pq.matmul(&pk.transpose())?;
    let n = w.cols();
    for i in 0..w.rows() {
        let s: f64 = w.row_slice(i).iter().sum();
        for j in 0..n {
            let v = w.get(i, j) / s;
            w.set(i, j, v);
        }
    }
    Ok(w)
}

/// One frequency linear attention block on an `N x d` input.
pub fn fla_block(z: &Tensor, p: &FlaBlockParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let pv = p.clone_as_inputs(&mut tape)?;
    let zv = tape.input(z.clone())?;
    let out = fla_block_tape(&mut tape, zv, &pv, false)?;
    Ok(tape.value(out.out).clone())
}

impl FlaBlockParams {
    fn clone_as_inputs(&self, tape: &mut Tape) -> Result<FlaBlockParams<Var>> {
        let heads = self
            .heads
            .iter()
            .map(|h| {
                Ok(crate::model::params::HeadParams {
                    query: tape.input(h.query.clone())?,
                    key: tape.input(h.key.clone())?,
                    value: tape.input(h.value.clone())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FlaBlockParams {
            heads,
            norm1_scale: tape.input(self.norm1_scale.clone())?,
            norm1_shift: tape.input(self.norm1_shift.clone())?,
            norm2_scale: tape.input(self.norm2_scale.clone())?,
            norm2_shift: tape.input(self.norm2_shift.clone())?,
            mlp_in: tape.input(self.mlp_in.clone())?,
            mlp_in_bias: tape.input(self.mlp_in_bias.clone())?,
            mlp_out: tape.input(self.mlp_out.clone())?,
            mlp_out_bias: tape.input(self.mlp_out_bias.clone())?,
            rff_omega: self.rff_omega.clone(),
            rff_phase: self.rff_phase.clone(),
        })
    }
}
