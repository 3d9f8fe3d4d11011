//! Forward-pass timing against grid length and variate count.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::imts::{ImtsSample, Query, RawSeries};
use crate::model::{Kafnet, ModelConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    /// `L` or `N`: which quantity the sweep varies.
    pub axis: &'static str,
    pub grid_len: usize,
    pub variates: usize,
    pub reps: usize,
    pub median_seconds: f64,
    pub param_count: usize,
}

/// `n` variates observed on one shared grid of `l` irregular timestamps, one
/// query per variate.
pub fn bench_sample(n: usize, l: usize, seed: u64) -> Result<ImtsSample> {
    if n == 0 || l == 0 {
        return Err(Error::InvalidConfig(
            "bench sample needs n >= 1 and l >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0;
    let times: Vec<f64> = (0..l)
        .map(|_| {
            t += rng.random_range(0.5..1.5);
            t
        })
        .collect();
    let series = (0..n)
        .map(|v| {
            RawSeries::new(
                v,
                times
                    .iter()
                    .map(|&t| (t, rng.random_range(-1.0..1.0)))
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let queries = (0..n).map(|_| vec![Query::new(t + 1.0, None)]).collect();
    ImtsSample::new(0, series, queries)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

/// Median wall time of `reps` forward passes after two warm-up runs.
pub fn time_forward(model: &Kafnet, sample: &ImtsSample, reps: usize) -> Result<f64> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be >= 1".into()));
    }
    for _ in 0..2 {
        model.forward(sample)?;
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        let out = model.forward(sample)?;
        times.push(start.elapsed().as_secs_f64());
        std::hint::black_box(out);
    }
    Ok(median(times))
}

/// Sweeps the grid length at a fixed variate count.
pub fn sweep_lengths(
    cfg: &ModelConfig,
    lengths: &[usize],
    variates: usize,
    reps: usize,
) -> Result<Vec<BenchRow>> {
    let model = Kafnet::new(cfg.clone())?;
    lengths
        .iter()
        .map(|&l| {
            let s = bench_sample(variates, l, cfg.init_seed)?;
            Ok(BenchRow {
                axis: "L",
                grid_len: l,
                variates,
                reps,
                median_seconds: time_forward(&model, &s, reps)?,
                param_count: model.param_count(),
            })
        })
        .collect()
}

/// Sweeps the variate count at a fixed grid length.
pub fn sweep_variates(
    cfg: &ModelConfig,
    variates: &[usize],
    grid_len: usize,
    reps: usize,
) -> Result<Vec<BenchRow>> {
    let model = Kafnet::new(cfg.clone())?;
    variates
        .iter()
        .map(|&n| {
            let s = bench_sample(n, grid_len, cfg.init_seed)?;
            Ok(BenchRow {
                axis: "N",
                grid_len,
                variates: n,
                reps,
                median_seconds: time_forward(&model, &s, reps)?,
                param_count: model.param_count(),
            })
        })
        .collect()
}

/// Successive time ratios `t[i+1] / t[i]` within one sweep.
pub fn doubling_ratios(rows: &[BenchRow]) -> Vec<f64> {
    rows.windows(2)
        .map(|w| w[1].median_seconds / w[0].median_seconds)
        .collect()
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("axis,grid_len,variates,reps,median_seconds,param_count\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:e},{}\n",
            r.axis, r.grid_len, r.variates, r.reps, r.median_seconds, r.param_count
        ));
    }
    out
}
