//! Forecasting for irregular multivariate time series with temporal kernel
//! aggregation and frequency-domain linear attention.
//!
//! The pipeline per sample:
//!
//! 1. [`imts::align`] merges every variate's timestamps onto one grid with a
//!    zero-filled value matrix and an observation mask.
//! 2. A shared `1x3 -> ReLU -> 1x1` convolution smooths each variate's
//!    column and a learned time embedding is added.
//! 3. `K` Gaussian kernels on the normalized timeline pool each variate to a
//!    fixed-size summary, projected to width `d`.
//! 4. Stacked blocks mix variates with random-Fourier-feature linear
//!    attention on the real FFT of the hidden state.
//! 5. An MLP maps each variate summary plus the query's time embedding to a
//!    scalar forecast.
//!
//! Everything is differentiated by the reverse-mode tape in [`autodiff`] and
//! trained with Adam in [`training`].

pub mod autodiff;
pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod imts;
pub mod model;
pub mod spectral;
pub mod training;

pub use error::{Error, Result};
pub use imts::{
    align, normalize_times, AlignedTriplet, ImtsSample, NormalizedTimes, Query, RawSeries,
};
pub use model::{Kafnet, ModelConfig};
