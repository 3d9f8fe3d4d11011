//! Seeded synthetic IMTS generation.
//!
//! Observation times follow a homogeneous Poisson process on the history
//! window `[0, span * (1 - horizon_fraction)]`; queries are drawn uniformly
//! on the remaining horizon. Each variate carries fixed characteristic
//! frequencies (drawn once per dataset from the seed) while amplitudes,
//! phases and trends vary per sample, so the future of every series is
//! determined by its own history.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imts::{ImtsSample, Query, RawSeries};

/// How observation times relate across variates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Asynchrony {
    /// Every variate draws its own Poisson process.
    Independent,
    /// One Poisson process shared by all variates.
    SharedGrid,
    /// Half the intensity from a shared process, thinned per variate with
    /// probability 1/2, plus an independent process for the rest.
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalFamily {
    /// Sum of `components` sinusoids `a cos(2 pi f t + phi)`.
    SinusoidMixture {
        components: usize,
        amplitude: (f64, f64),
        /// Cycles per time unit.
        frequency: (f64, f64),
        phase: (f64, f64),
    },
    /// `a exp(-lambda t) cos(2 pi f t + phi)`.
    DampedOscillation {
        amplitude: (f64, f64),
        frequency: (f64, f64),
        decay: (f64, f64),
    },
    /// Continuous piecewise-linear trend with `segments` pieces.
    PiecewiseTrend {
        segments: usize,
        slope: (f64, f64),
        offset: (f64, f64),
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_variates: usize,
    pub n_samples: usize,
    /// Total window length; history plus forecast horizon.
    pub span: f64,
    /// Expected number of history observations per variate.
    pub intensity: f64,
    pub asynchrony: Asynchrony,
    pub signal: SignalFamily,
    pub noise_std: f64,
    /// Fraction of the window reserved for queries, in `(0, 1)`.
    pub horizon_fraction: f64,
    pub queries_per_variate: usize,
    pub seed: u64,
}

const MAX_RETRIES: usize = 16;

impl SynthSpec {
    /// Five variates of two-component sinusoid mixtures under independent
    /// Poisson sampling; 800 samples for a 500/150/150 split.
    pub fn preset_a(seed: u64) -> Self {
        Self {
            n_variates: 5,
            n_samples: 800,
            span: 4.0,
            intensity: 12.0,
            asynchrony: Asynchrony::Independent,
            signal: SignalFamily::SinusoidMixture {
                components: 2,
                amplitude: (0.5, 1.5),
                frequency: (0.1, 0.4),
                phase: (0.0, TAU),
            },
            noise_std: 0.05,
            horizon_fraction: 0.25,
            queries_per_variate: 3,
            seed,
        }
    }

    pub fn preset_damped(seed: u64) -> Self {
        Self {
            signal: SignalFamily::DampedOscillation {
                amplitude: (0.5, 2.0),
                frequency: (0.1, 0.4),
                decay: (0.05, 0.4),
            },
            asynchrony: Asynchrony::Mixed,
            ..Self::preset_a(seed)
        }
    }

    pub fn preset_trend(seed: u64) -> Self {
        Self {
            signal: SignalFamily::PiecewiseTrend {
                segments: 3,
                slope: (-1.0, 1.0),
                offset: (-1.0, 1.0),
            },
            asynchrony: Asynchrony::SharedGrid,
            ..Self::preset_a(seed)
        }
    }

    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "sinusoid-a" | "a" => Some(Self::preset_a(seed)),
            "damped-b" | "b" => Some(Self::preset_damped(seed)),
            "trend-c" | "c" => Some(Self::preset_trend(seed)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.n_variates == 0 {
            return fail("n_variates must be >= 1".into());
        }
        if self.n_samples == 0 {
            return fail("n_samples must be >= 1".into());
        }
        if !(self.span > 0.0 && self.span.is_finite()) {
            return fail(format!("span must be positive, got {}", self.span));
        }
        if !(self.intensity > 0.0 && self.intensity.is_finite()) {
            return fail(format!(
                "intensity must be positive, got {}",
                self.intensity
            ));
        }
        if !(self.horizon_fraction > 0.0 && self.horizon_fraction < 1.0) {
            return fail(format!(
                "horizon_fraction must lie in (0, 1), got {}",
                self.horizon_fraction
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        let range_ok = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 <= r.1;
        let ok = match &self.signal {
            SignalFamily::SinusoidMixture {
                components,
                amplitude,
                frequency,
                phase,
            } => {
                *components > 0 && range_ok(*amplitude) && range_ok(*frequency) && range_ok(*phase)
            }
            SignalFamily::DampedOscillation {
                amplitude,
                frequency,
                decay,
            } => range_ok(*amplitude) && range_ok(*frequency) && range_ok(*decay),
            SignalFamily::PiecewiseTrend {
                segments,
                slope,
                offset,
            } => *segments > 0 && range_ok(*slope) && range_ok(*offset),
        };
        if !ok {
            return fail("signal ranges must be finite with lo <= hi".into());
        }
        Ok(())
    }

    pub fn history_end(&self) -> f64 {
        self.span * (1.0 - self.horizon_fraction)
    }
}

fn draw(rng: &mut ChaCha8Rng, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.random_range(r.0..r.1)
    }
}

/// A per-sample, per-variate signal realization.
#[derive(Clone, Debug)]
enum Signal {
    Sines(Vec<(f64, f64, f64)>),
    Damped {
        a: f64,
        f: f64,
        decay: f64,
        phase: f64,
    },
    Trend {
        knots: Vec<(f64, f64)>,
        slopes: Vec<f64>,
    },
}

impl Signal {
    fn eval(&self, t: f64) -> f64 {
        match self {
            Signal::Sines(parts) => parts
                .iter()
                .map(|&(a, f, p)| a * (TAU * f * t + p).cos())
                .sum(),
            Signal::Damped { a, f, decay, phase } => {
                a * (-decay * t).exp() * (TAU * f * t + phase).cos()
            }
            Signal::Trend { knots, slopes } => {
                let i = knots.iter().rposition(|&(k, _)| k <= t).unwrap_or(0);
                let (k, v) = knots[i];
                v + slopes[i] * (t - k)
            }
        }
    }
}

/// Per-variate constants shared by every sample of a dataset.
struct VariateProfile {
    frequencies: Vec<f64>,
}

fn profiles(spec: &SynthSpec) -> Vec<VariateProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);
    (0..spec.n_variates)
        .map(|_| {
            let frequencies = match &spec.signal {
                SignalFamily::SinusoidMixture {
                    components,
                    frequency,
                    ..
                } => (0..*components)
                    .map(|_| draw(&mut rng, *frequency))
                    .collect(),
                SignalFamily::DampedOscillation { frequency, .. } => {
                    vec![draw(&mut rng, *frequency)]
                }
                SignalFamily::PiecewiseTrend { .. } => Vec::new(),
            };
            VariateProfile { frequencies }
        })
        .collect()
}

fn realize(spec: &SynthSpec, profile: &VariateProfile, rng: &mut ChaCha8Rng) -> Signal {
    match &spec.signal {
        SignalFamily::SinusoidMixture {
            amplitude, phase, ..
        } => Signal::Sines(
            profile
                .frequencies
                .iter()
                .map(|&f| (draw(rng, *amplitude), f, draw(rng, *phase)))
                .collect(),
        ),
        SignalFamily::DampedOscillation {
            amplitude, decay, ..
        } => Signal::Damped {
            a: draw(rng, *amplitude),
            f: profile.frequencies[0],
            decay: draw(rng, *decay),
            phase: rng.random_range(0.0..TAU),
        },
        SignalFamily::PiecewiseTrend {
            segments,
            slope,
            offset,
        } => {
            let mut cuts: Vec<f64> = (1..*segments)
                .map(|_| rng.random_range(0.0..spec.span))
                .collect();
            cuts.sort_by(f64::total_cmp);
            let slopes: Vec<f64> = (0..*segments).map(|_| draw(rng, *slope)).collect();
            let mut knots = vec![(0.0, draw(rng, *offset))];
            for (i, &c) in cuts.iter().enumerate() {
                let (k, v) = knots[i];
                knots.push((c, v + slopes[i] * (c - k)));
            }
            Signal::Trend { knots, slopes }
        }
    }
}

/// Event times of a Poisson process with the given rate on `[0, end]`.
fn poisson_times(rng: &mut ChaCha8Rng, rate: f64, end: f64) -> Vec<f64> {
    let gaps = Exp::new(rate).expect("positive rate");
    let mut out = Vec::new();
    let mut t = gaps.sample(rng);
    while t <= end {
        out.push(t);
        t += gaps.sample(rng);
    }
    out
}

fn observation_times(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let end = spec.history_end();
    let rate = spec.intensity / end;
    match spec.asynchrony {
        Asynchrony::Independent => (0..spec.n_variates)
            .map(|_| poisson_times(rng, rate, end))
            .collect(),
        Asynchrony::SharedGrid => {
            let grid = poisson_times(rng, rate, end);
            vec![grid; spec.n_variates]
        }
        Asynchrony::Mixed => {
            // Shared stream at full rate thinned by 1/2, plus an own stream at
            // half rate: the expected count stays at `intensity`.
            let shared = poisson_times(rng, rate, end);
            (0..spec.n_variates)
                .map(|_| {
                    let mut own: Vec<f64> = shared
                        .iter()
                        .copied()
                        .filter(|_| rng.random_bool(0.5))
                        .collect();
                    own.extend(poisson_times(rng, rate / 2.0, end));
                    own.sort_by(f64::total_cmp);
                    own.dedup();
                    own
                })
                .collect()
        }
    }
}

fn generate_one(
    spec: &SynthSpec,
    profiles: &[VariateProfile],
    id: u64,
    rng: &mut ChaCha8Rng,
) -> Result<ImtsSample> {
    let noise = Normal::new(0.0, spec.noise_std).expect("finite std");
    let noisy = |rng: &mut ChaCha8Rng, v: f64| {
        if spec.noise_std > 0.0 {
            v + noise.sample(rng)
        } else {
            v
        }
    };
    let times = observation_times(spec, rng);
    let start = spec.history_end();
    let mut series = Vec::with_capacity(spec.n_variates);
    let mut queries = Vec::with_capacity(spec.n_variates);
    for (n, ts) in times.into_iter().enumerate() {
        let signal = realize(spec, &profiles[n], rng);
        let obs = ts
            .into_iter()
            .map(|t| {
                let v = noisy(rng, signal.eval(t));
                (t, v)
            })
            .collect();
        series.push(RawSeries::new(n, obs)?);
        let mut qt: Vec<f64> = (0..spec.queries_per_variate)
            .map(|_| start + rng.random_range(0.0..1.0) * (spec.span - start))
            .filter(|&t| t > start)
            .collect();
        qt.sort_by(f64::total_cmp);
        qt.dedup();
        queries.push(
            qt.into_iter()
                .map(|t| Query::new(t, Some(noisy(rng, signal.eval(t)))))
                .collect(),
        );
    }
    ImtsSample::new(id, series, queries)
}

/// Generates `spec.n_samples` samples, ids `0..n`. Sample `i` depends only on
/// `(seed, i)`.
pub fn generate(spec: &SynthSpec) -> Result<Vec<ImtsSample>> {
    spec.validate()?;
    let profiles = profiles(spec);
    (0..spec.n_samples)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64 + 1);
            for _ in 0..MAX_RETRIES {
                let s = generate_one(spec, &profiles, i as u64, &mut rng)?;
                if s.n_observations() > 0 {
                    return Ok(s);
                }
            }
            Err(Error::InvalidConfig(format!(
                "sample {i}: no observations after {MAX_RETRIES} draws; raise intensity"
            )))
        })
        .collect()
}

/// A small three-variate sample for numeric checks.
pub fn toy_sample(seed: u64) -> ImtsSample {
    let spec = SynthSpec {
        n_variates: 3,
        n_samples: 1,
        intensity: 5.0,
        queries_per_variate: 2,
        ..SynthSpec::preset_a(seed)
    };
    generate(&spec)
        .expect("toy spec is valid")
        .pop()
        .expect("one sample")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imts::align;

    #[test]
    fn deterministic_per_seed() {
        let spec = SynthSpec {
            n_samples: 20,
            ..SynthSpec::preset_a(3)
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SynthSpec {
            seed: 4,
            ..spec.clone()
        };
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn queries_follow_history() {
        for spec in [
            SynthSpec::preset_a(1),
            SynthSpec::preset_damped(1),
            SynthSpec::preset_trend(1),
        ] {
            let spec = SynthSpec {
                n_samples: 50,
                ..spec
            };
            for s in generate(&spec).unwrap() {
                for (series, qs) in s.series().iter().zip(s.queries()) {
                    let last = series.last_time().unwrap_or(f64::NEG_INFINITY);
                    assert!(qs.iter().all(|q| q.time > last && q.time <= spec.span));
                }
            }
        }
    }

    #[test]
    fn independent_pairs_do_not_overlap() {
        let spec = SynthSpec {
            n_variates: 2,
            n_samples: 30,
            ..SynthSpec::preset_a(9)
        };
        for s in generate(&spec).unwrap() {
            let l: usize = s.series().iter().map(|r| r.len()).sum();
            assert_eq!(align(&s).unwrap().grid_len(), l);
        }
    }

    #[test]
    fn shared_grid_fully_overlaps() {
        let spec = SynthSpec {
            n_samples: 10,
            ..SynthSpec::preset_trend(2)
        };
        for s in generate(&spec).unwrap() {
            assert_eq!(align(&s).unwrap().grid_len(), s.series()[0].len());
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let base = SynthSpec::preset_a(0);
        for bad in [
            SynthSpec {
                n_variates: 0,
                ..base.clone()
            },
            SynthSpec {
                intensity: 0.0,
                ..base.clone()
            },
            SynthSpec {
                horizon_fraction: 1.0,
                ..base.clone()
            },
            SynthSpec {
                noise_std: -1.0,
                ..base.clone()
            },
        ] {
            assert!(generate(&bad).is_err());
        }
    }

    #[test]
    fn sparse_specs_retry_then_fail() {
        let spec = SynthSpec {
            n_variates: 1,
            n_samples: 1,
            intensity: 1e-9,
            ..SynthSpec::preset_a(0)
        };
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn intensity_is_respected() {
        let spec = SynthSpec {
            n_variates: 1,
            n_samples: 1000,
            ..SynthSpec::preset_a(5)
        };
        let counts: Vec<f64> = generate(&spec)
            .unwrap()
            .iter()
            .map(|s| s.n_observations() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        // Poisson: variance = mean; 3 sigma on the sample mean.
        let tol = 3.0 * (spec.intensity / counts.len() as f64).sqrt();
        assert!((mean - spec.intensity).abs() < tol, "mean {mean}");
    }
}
