//! Irregular multivariate time series: raw samples, canonical pre-alignment
//! onto a shared time grid, and min-max timestamp normalization.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Observations of one variate, strictly increasing in time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    variate: usize,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl RawSeries {
    pub fn new(variate: usize, observations: Vec<(f64, f64)>) -> Result<Self> {
        let mut times = Vec::with_capacity(observations.len());
        let mut values = Vec::with_capacity(observations.len());
        for (t, x) in observations {
            if !t.is_finite() || !x.is_finite() {
                return Err(Error::InvalidSample(format!(
                    "variate {variate}: non-finite observation ({t}, {x})"
                )));
            }
            if let Some(&prev) = times.last() {
                if t <= prev {
                    return Err(Error::InvalidSample(format!(
                        "variate {variate}: times not strictly increasing ({prev} then {t})"
                    )));
                }
            }
            // -0.0 and 0.0 must land on the same grid row.
            times.push(if t == 0.0 { 0.0 } else { t });
            values.push(x);
        }
        Ok(Self {
            variate,
            times,
            values,
        })
    }

    pub fn empty(variate: usize) -> Self {
        Self {
            variate,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn variate(&self) -> usize {
        self.variate
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    /// Rounds every timestamp to `decimals` places. Fails if rounding merges
    /// two observations of this variate.
    pub fn quantized(&self, decimals: u32) -> Result<Self> {
        let obs = self
            .iter()
            .map(|(t, x)| (quantize_time(t, decimals), x))
            .collect();
        Self::new(self.variate, obs)
    }
}

/// Rounds a timestamp to a fixed number of decimals.
pub fn quantize_time(t: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (t * scale).round() / scale
}

/// A future timestamp to forecast, with its ground truth when known.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub time: f64,
    pub target: Option<f64>,
}

impl Query {
    pub fn new(time: f64, target: Option<f64>) -> Self {
        Self { time, target }
    }
}

/// One forecasting instance: `N` observed variates plus per-variate queries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImtsSample {
    id: u64,
    series: Vec<RawSeries>,
    queries: Vec<Vec<Query>>,
}

impl ImtsSample {
    pub fn new(id: u64, series: Vec<RawSeries>, queries: Vec<Vec<Query>>) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::InvalidSample(format!("sample {id}: no variates")));
        }
        if queries.len() != series.len() {
            return Err(Error::InvalidSample(format!(
                "sample {id}: {} query lists for {} variates",
                queries.len(),
                series.len()
            )));
        }
        for (n, (s, qs)) in series.iter().zip(&queries).enumerate() {
            if s.variate() != n {
                return Err(Error::InvalidSample(format!(
                    "sample {id}: series at position {n} carries variate {}",
                    s.variate()
                )));
            }
            for q in qs {
                if !q.time.is_finite() || q.target.is_some_and(|v| !v.is_finite()) {
                    return Err(Error::InvalidSample(format!(
                        "sample {id}: non-finite query on variate {n}"
                    )));
                }
                if let Some(last) = s.last_time() {
                    if q.time <= last {
                        return Err(Error::InvalidSample(format!(
                            "sample {id}: query {} on variate {n} does not follow last observation {last}",
                            q.time
                        )));
                    }
                }
            }
        }
        Ok(Self {
            id,
            series,
            queries,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn n_variates(&self) -> usize {
        self.series.len()
    }

    pub fn series(&self) -> &[RawSeries] {
        &self.series
    }

    pub fn queries(&self) -> &[Vec<Query>] {
        &self.queries
    }

    pub fn n_observations(&self) -> usize {
        self.series.iter().map(RawSeries::len).sum()
    }

    pub fn n_queries(&self) -> usize {
        self.queries.iter().map(Vec::len).sum()
    }

    /// Same observations with a different query set.
    pub fn with_queries(&self, queries: Vec<Vec<Query>>) -> Result<Self> {
        Self::new(self.id, self.series.clone(), queries)
    }

    /// Flattened `(variate, query)` pairs in variate-major order, the order
    /// in which the model emits predictions.
    pub fn flat_queries(&self) -> Vec<(usize, Query)> {
        self.queries
            .iter()
            .enumerate()
            .flat_map(|(n, qs)| qs.iter().map(move |q| (n, *q)))
            .collect()
    }
}

/// Canonical pre-alignment of a sample: shared sorted grid, zero-filled
/// `L x N` values and the `L x N` observation mask.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedTriplet {
    times: Vec<f64>,
    values: Tensor,
    mask: Tensor,
    /// Per-variate observed time extremes, `None` for empty variates.
    extents: Vec<Option<(f64, f64)>>,
}

impl AlignedTriplet {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn mask(&self) -> &Tensor {
        &self.mask
    }

    pub fn grid_len(&self) -> usize {
        self.times.len()
    }

    pub fn n_variates(&self) -> usize {
        self.extents.len()
    }

    pub fn value_column(&self, n: usize) -> Vec<f64> {
        column(&self.values, n)
    }

    pub fn mask_column(&self, n: usize) -> Vec<f64> {
        column(&self.mask, n)
    }

    pub fn observed_count(&self, n: usize) -> usize {
        self.mask_column(n).iter().filter(|&&m| m == 1.0).count()
    }

    pub fn variate_extent(&self, n: usize) -> Option<(f64, f64)> {
        self.extents[n]
    }

    /// Grid row holding exactly time `t`, if any.
    pub fn row_of(&self, t: f64) -> Option<usize> {
        self.times
            .binary_search_by(|probe| probe.total_cmp(&t))
            .ok()
    }
}

fn column(t: &Tensor, n: usize) -> Vec<f64> {
    (0..t.rows()).map(|l| t.get(l, n)).collect()
}

/// Merges every variate's timestamps into one sorted grid; equal timestamps
/// (bitwise) share a row.
pub fn align(sample: &ImtsSample) -> Result<AlignedTriplet> {
    if sample.n_observations() == 0 {
        return Err(Error::InvalidSample(format!(
            "sample {}: no observations to align",
            sample.id()
        )));
    }
    let mut times: Vec<f64> = sample
        .series()
        .iter()
        .flat_map(|s| s.times().iter().copied())
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| a.to_bits() == b.to_bits());

    let l = times.len();
    let n = sample.n_variates();
    let mut values = Tensor::zeros(l, n);
    let mut mask = Tensor::zeros(l, n);
    let mut extents = Vec::with_capacity(n);
    for (v, s) in sample.series().iter().enumerate() {
        // Both lists are sorted, so one forward cursor suffices.
        let mut row = 0;
        for (t, x) in s.iter() {
            while times[row].to_bits() != t.to_bits() {
                row += 1;
            }
            values.set(row, v, x);
            mask.set(row, v, 1.0);
        }
        extents.push(match (s.times().first(), s.times().last()) {
            (Some(&a), Some(&b)) => Some((a, b)),
            _ => None,
        });
    }
    Ok(AlignedTriplet {
        times,
        values,
        mask,
        extents,
    })
}

/// Min-max normalized timestamps, one vector of length `L` per variate.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedTimes {
    columns: Vec<Vec<f64>>,
}

impl NormalizedTimes {
    pub fn column(&self, n: usize) -> &[f64] {
        &self.columns[n]
    }

    pub fn n_variates(&self) -> usize {
        self.columns.len()
    }
}

fn min_max(times: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    if span <= 0.0 {
        return vec![0.0; times.len()];
    }
    times
        .iter()
        .map(|&t| ((t - lo) / span).clamp(0.0, 1.0))
        .collect()
}

/// Maps the grid to `[0, 1]`.
///
/// With `per_variate = false` every variate uses the grid endpoints
/// `t_1, t_L`. With `per_variate = true` each variate uses its own first and
/// last observed time; grid rows outside that range clamp to 0 or 1, and
/// variates with fewer than two observations map to all zeros.
pub fn normalize_times(triplet: &AlignedTriplet, per_variate: bool) -> NormalizedTimes {
    let times = triplet.times();
    let (first, last) = (times[0], times[times.len() - 1]);
    let columns = (0..triplet.n_variates())
        .map(|n| {
            let (lo, hi) = if per_variate {
                triplet.variate_extent(n).unwrap_or((first, first))
            } else {
                (first, last)
            };
            min_max(times, lo, hi)
        })
        .collect();
    NormalizedTimes { columns }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(v: usize, times: &[f64]) -> RawSeries {
        RawSeries::new(v, times.iter().map(|&t| (t, t * 10.0 + v as f64)).collect()).unwrap()
    }

    fn sample(all: Vec<RawSeries>) -> ImtsSample {
        let q = vec![Vec::new(); all.len()];
        ImtsSample::new(0, all, q).unwrap()
    }

    #[test]
    fn disjoint_pair_doubles_grid() {
        let s = sample(vec![
            series(0, &[0.0, 2.0, 4.0, 6.0]),
            series(1, &[1.0, 3.0, 5.0, 7.0]),
        ]);
        let tri = align(&s).unwrap();
        assert_eq!(tri.grid_len(), 8);
        assert_eq!(tri.observed_count(0), 4);
        assert_eq!(tri.observed_count(1), 4);
        assert_eq!(tri.values().get(1, 0), 0.0);
        assert_eq!(tri.values().get(1, 1), 11.0);
    }

    #[test]
    fn single_variate_is_identity() {
        let s = sample(vec![series(0, &[0.5, 0.7, 2.0])]);
        let tri = align(&s).unwrap();
        assert_eq!(tri.times(), &[0.5, 0.7, 2.0]);
        assert!(tri.mask().data().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn full_overlap_keeps_grid() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        let s = sample(vec![series(0, &t), series(1, &t), series(2, &t)]);
        let tri = align(&s).unwrap();
        assert_eq!(tri.grid_len(), 5);
        assert!(tri.mask().data().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn empty_sample_rejected() {
        let s = sample(vec![RawSeries::empty(0), RawSeries::empty(1)]);
        assert!(matches!(align(&s), Err(Error::InvalidSample(_))));
    }

    #[test]
    fn empty_variate_allowed() {
        let s = sample(vec![series(0, &[1.0, 2.0]), RawSeries::empty(1)]);
        let tri = align(&s).unwrap();
        assert_eq!(tri.observed_count(1), 0);
        assert_eq!(tri.variate_extent(1), None);
    }

    #[test]
    fn duplicate_times_rejected_at_ingestion() {
        assert!(RawSeries::new(0, vec![(1.0, 0.0), (1.0, 2.0)]).is_err());
        assert!(RawSeries::new(0, vec![(2.0, 0.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn quantization_merges_noisy_times() {
        let a = RawSeries::new(0, vec![(0.1000000001, 1.0)]).unwrap();
        let b = RawSeries::new(1, vec![(0.0999999999, 2.0)]).unwrap();
        let raw = sample(vec![a.clone(), b.clone()]);
        assert_eq!(align(&raw).unwrap().grid_len(), 2);
        let q = sample(vec![a.quantized(6).unwrap(), b.quantized(6).unwrap()]);
        assert_eq!(align(&q).unwrap().grid_len(), 1);
        let dup = RawSeries::new(0, vec![(0.10001, 1.0), (0.10002, 2.0)]).unwrap();
        assert!(dup.quantized(3).is_err());
    }

    #[test]
    fn negative_zero_shares_row() {
        let s = sample(vec![series(0, &[-0.0, 1.0]), series(1, &[0.0])]);
        assert_eq!(align(&s).unwrap().grid_len(), 2);
    }

    #[test]
    fn queries_must_follow_history() {
        let s = vec![series(0, &[1.0, 2.0])];
        assert!(ImtsSample::new(0, s.clone(), vec![vec![Query::new(2.0, None)]]).is_err());
        assert!(ImtsSample::new(0, s, vec![vec![Query::new(2.5, Some(1.0))]]).is_ok());
    }

    #[test]
    fn normalization_examples() {
        let tri = |t: &[f64]| align(&sample(vec![series(0, t)])).unwrap();
        assert_eq!(
            normalize_times(&tri(&[0.0, 5.0, 10.0]), false).column(0),
            &[0.0, 0.5, 1.0]
        );
        assert_eq!(normalize_times(&tri(&[7.0]), false).column(0), &[0.0]);
        let got = normalize_times(&tri(&[3.0, 4.0, 6.0, 12.0]), false);
        let want = [0.0, 1.0 / 9.0, 3.0 / 9.0, 1.0];
        for (g, w) in got.column(0).iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn per_variate_normalization_uses_own_extent() {
        let s = sample(vec![series(0, &[0.0, 10.0]), series(1, &[2.0, 4.0])]);
        let tri = align(&s).unwrap();
        let shared = normalize_times(&tri, false);
        assert_eq!(shared.column(1), shared.column(0));
        let own = normalize_times(&tri, true);
        assert_eq!(own.column(1), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(own.column(0), &[0.0, 0.2, 0.4, 1.0]);
    }
}
