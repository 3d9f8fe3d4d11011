use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{compare_gradients, GradCheckOptions, GradCheckReport, Tape, Tensor};
use crate::error::{Error, Result};
use crate::imts::ImtsSample;
use crate::model::Kafnet;
use crate::training::{adam_step, metrics, mse_loss_tape, AdamState, Metrics, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
    pub val_mae: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

impl History {
    /// `epoch,train_loss,val_mse,val_mae,seconds`, one line per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_mse,val_mae,seconds\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.val_mse, r.val_mae, r.seconds
            ));
        }
        out
    }
}

pub struct TrainOutcome {
    /// Best-validation checkpoint (or the last finite one after divergence).
    pub model: Kafnet,
    pub history: History,
    /// Set when training stopped on a non-finite loss or gradient.
    pub divergence: Option<String>,
}

/// Sample visiting order for one epoch; depends only on `(seed, epoch)`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mix = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(epoch as u64)
        .rotate_left(17);
    let mut rng = ChaCha8Rng::seed_from_u64(mix);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn targets_of(sample: &ImtsSample) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut targets = Vec::with_capacity(sample.n_queries());
    for (n, q) in sample.flat_queries() {
        targets.push(q.target.ok_or_else(|| {
            Error::InvalidSample(format!(
                "sample {}: query at {} on variate {n} has no target",
                sample.id(),
                q.time
            ))
        })?);
    }
    let counts = sample.queries().iter().map(Vec::len).collect();
    Ok((targets, counts))
}

/// Pooled MSE/MAE of `model` over every query of every sample.
pub fn evaluate(model: &Kafnet, samples: &[ImtsSample]) -> Result<Metrics> {
    let mut preds = Vec::new();
    let mut targets = Vec::new();
    for s in samples {
        if s.n_queries() == 0 {
            continue;
        }
        let (t, _) = targets_of(s)?;
        preds.extend(model.forward(s)?);
        targets.extend(t);
    }
    metrics(&preds, &targets)
}

/// Pooled metrics of the per-variate mean predictor: each variate is
/// forecast by the mean of its query targets in `fit`. Variates never
/// queried in `fit` fall back to the overall mean.
pub fn mean_baseline(fit: &[ImtsSample], eval: &[ImtsSample]) -> Result<Metrics> {
    let mut sums: Vec<(f64, usize)> = Vec::new();
    let mut all = (0.0, 0usize);
    for s in fit {
        let (t, _) = targets_of(s)?;
        for ((n, _), y) in s.flat_queries().into_iter().zip(t) {
            if sums.len() <= n {
                sums.resize(n + 1, (0.0, 0));
            }
            sums[n].0 += y;
            sums[n].1 += 1;
            all.0 += y;
            all.1 += 1;
        }
    }
    if all.1 == 0 {
        return Err(Error::Empty("mean baseline: no targets to fit".into()));
    }
    let overall = all.0 / all.1 as f64;
    let mut preds = Vec::new();
    let mut targets = Vec::new();
    for s in eval {
        let (t, _) = targets_of(s)?;
        for ((n, _), y) in s.flat_queries().into_iter().zip(t) {
            preds.push(match sums.get(n) {
                Some(&(sum, c)) if c > 0 => sum / c as f64,
                _ => overall,
            });
            targets.push(y);
        }
    }
    metrics(&preds, &targets)
}

/// Forward and backward over one mini-batch on a single tape. Every sample
/// runs on its own grid; the loss is the batch mean of the per-sample
/// objective, so the gradient is the average of per-sample gradients.
fn batch_gradients(model: &Kafnet, batch: &[&ImtsSample]) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let pv = model
        .params()
        .try_map(&mut |name, t| tape.param(name, t.clone()))?;
    let mut losses = Vec::with_capacity(batch.len());
    for s in batch {
        let (targets, counts) = targets_of(s)?;
        let trace = model.record_with(&mut tape, pv.clone(), s)?;
        losses.push(mse_loss_tape(
            &mut tape,
            trace.predictions,
            &targets,
            &counts,
        )?);
    }
    let all = tape.concat_rows(&losses)?;
    let loss = tape.mean(all)?;
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    Ok((
        value,
        grads.into_named().into_iter().map(|(_, g)| g).collect(),
    ))
}

/// Central-difference check of the training objective on one sample, one
/// report group per parameter tensor.
pub fn model_grad_check(
    model: &Kafnet,
    sample: &ImtsSample,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let (targets, counts) = targets_of(sample)?;
    if targets.is_empty() {
        return Err(Error::Empty(format!(
            "sample {}: no queries to check against",
            sample.id()
        )));
    }
    let named = model.params().named();
    let objective = |tape: &mut Tape, leaves: &[crate::autodiff::Var]| {
        let pv = model.params().with_leaves(leaves)?;
        let trace = model.record_with(tape, pv, sample)?;
        mse_loss_tape(tape, trace.predictions, &targets, &counts)
    };
    let mut tape = Tape::new();
    let leaves = named
        .iter()
        .map(|(n, t)| tape.param(n.clone(), t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = objective(&mut tape, &leaves)?;
    let analytic: Vec<Tensor> = tape
        .backward(loss)?
        .into_named()
        .into_iter()
        .map(|(_, g)| g)
        .collect();
    compare_gradients(&named, objective, &analytic, opts)
}

fn clip(grads: &mut [Tensor], max_norm: f64) {
    let norm = grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
}

pub fn train(train: &[ImtsSample], val: &[ImtsSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(train, val, cfg, |_| {})
}

/// Mini-batch Adam on the per-variate objective with early stopping on
/// validation pooled MSE. Calls `on_epoch` after every epoch.
pub fn train_with_observer(
    train: &[ImtsSample],
    val: &[ImtsSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train: Vec<&ImtsSample> = train.iter().filter(|s| s.n_queries() > 0).collect();
    if train.is_empty() {
        return Err(Error::Empty(
            "train: no training samples with queries".into(),
        ));
    }
    if val.iter().all(|s| s.n_queries() == 0) {
        return Err(Error::Empty(
            "train: no validation samples with queries".into(),
        ));
    }

    let mut model = Kafnet::new(cfg.model())?;
    let mut state = AdamState::new(model.params_mut().leaves_mut().into_iter().map(|t| &*t));
    let mut best = model.clone();
    let mut history = History {
        best_val_mse: f64::INFINITY,
        ..History::default()
    };
    let mut divergence = None;

    'epochs: for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let order = epoch_order(cfg.seed, epoch, train.len());
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        let before_epoch = model.clone();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&ImtsSample> = chunk.iter().map(|&i| train[i]).collect();
            let step = batch_gradients(&model, &batch).and_then(|(loss, mut grads)| {
                if !loss.is_finite() {
                    return Err(Error::NonFinite { op: "loss" });
                }
                clip(&mut grads, cfg.clip_norm);
                let mut leaves = model.params_mut().leaves_mut();
                adam_step(&mut leaves, &grads, &mut state, cfg.learning_rate)?;
                Ok(loss)
            });
            match step {
                Ok(loss) => {
                    loss_sum += loss * batch.len() as f64;
                    seen += batch.len();
                }
                Err(e) if e.is_numeric() => {
                    divergence = Some(format!("epoch {epoch}: {e}"));
                    if history.records.is_empty() {
                        best = before_epoch;
                    }
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }

        let val_metrics = match evaluate(&model, val) {
            Ok(m) if m.mse.is_finite() => m,
            Ok(_) => {
                divergence = Some(format!("epoch {epoch}: non-finite validation error"));
                break;
            }
            Err(e) if e.is_numeric() => {
                divergence = Some(format!("epoch {epoch}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_mse: val_metrics.mse,
            val_mae: val_metrics.mae,
            seconds: if cfg.record_wall_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        on_epoch(&record);
        if record.val_mse < history.best_val_mse {
            history.best_val_mse = record.val_mse;
            history.best_epoch = epoch;
            best = model.clone();
        }
        history.records.push(record);
        if epoch - history.best_epoch >= cfg.patience {
            break;
        }
    }

    Ok(TrainOutcome {
        model: best,
        history,
        divergence,
    })
}
