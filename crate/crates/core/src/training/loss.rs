use serde::Serialize;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

fn per_query_weights(counts: &[usize]) -> Result<Vec<f64>> {
    let active = counts.iter().filter(|&&q| q > 0).count();
    if active == 0 {
        return Err(Error::Empty("mse_loss: no variate has queries".into()));
    }
    Ok(counts
        .iter()
        .flat_map(|&q| std::iter::repeat_n(1.0 / (active * q.max(1)) as f64, q))
        .collect())
}

/// Per-variate averaged squared error: the mean over variates with at least
/// one query of each variate's mean squared residual. `predictions` and
/// `targets` are laid out variate-major with `counts[n]` entries for
/// variate `n`.
pub fn mse_loss(predictions: &[f64], targets: &[f64], counts: &[usize]) -> Result<f64> {
    let total: usize = counts.iter().sum();
    if predictions.len() != total || targets.len() != total {
        return Err(Error::ShapeMismatch {
            op: "mse_loss",
            lhs: vec![predictions.len(), targets.len()],
            rhs: vec![total],
        });
    }
    let w = per_query_weights(counts)?;
    Ok(predictions
        .iter()
        .zip(targets)
        .zip(&w)
        .map(|((p, t), w)| w * (p - t) * (p - t))
        .sum())
}

/// [`mse_loss`] recorded on a tape.
pub fn mse_loss_tape(
    tape: &mut Tape,
    predictions: Var,
    targets: &[f64],
    counts: &[usize],
) -> Result<Var> {
    let w = per_query_weights(counts)?;
    if tape.value(predictions).len() != w.len() || targets.len() != w.len() {
        return Err(Error::ShapeMismatch {
            op: "mse_loss",
            lhs: tape.value(predictions).shape().to_vec(),
            rhs: vec![targets.len()],
        });
    }
    let t = tape.input(Tensor::column(targets.to_vec()))?;
    let w = tape.input(Tensor::column(w))?;
    let r = tape.sub(predictions, t)?;
    let sq = tape.mul(r, r)?;
    let weighted = tape.mul(sq, w)?;
    tape.sum(weighted)
}

/// Pooled squared and absolute error over all queried points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub count: usize,
}

/// Pooled MSE and MAE over every (prediction, target) pair.
pub fn metrics(predictions: &[f64], targets: &[f64]) -> Result<Metrics> {
    if predictions.len() != targets.len() {
        return Err(Error::ShapeMismatch {
            op: "metrics",
            lhs: vec![predictions.len()],
            rhs: vec![targets.len()],
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("metrics: empty query set".into()));
    }
    let n = predictions.len() as f64;
    let (se, ae) = predictions
        .iter()
        .zip(targets)
        .fold((0.0, 0.0), |(se, ae), (p, t)| {
            (se + (t - p) * (t - p), ae + (t - p).abs())
        });
    Ok(Metrics {
        mse: se / n,
        mae: ae / n,
        count: predictions.len(),
    })
}
