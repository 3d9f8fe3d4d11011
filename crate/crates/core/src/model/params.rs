//! Learnable arrays of the model, generic over the leaf type so the same
//! layout describes stored tensors (`Tensor`) and their tape handles (`Var`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::Tensor;
use crate::error::Result;
use crate::model::ModelConfig;

/// `Conv1x3 -> ReLU -> Conv1x1`, one filter bank shared by all variates.
#[derive(Clone, Debug, PartialEq)]
pub struct PreConvParams<T = Tensor> {
    /// `C x 1 x 3`
    pub depth_kernel: T,
    /// `C`
    pub depth_bias: T,
    /// `1 x C x 1`
    pub point_kernel: T,
    /// scalar
    pub point_bias: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeEmbedParams<T = Tensor> {
    pub linear_weight: T,
    pub linear_bias: T,
    /// `1 x p`
    pub sin_weight: T,
    pub sin_bias: T,
    /// `1 x c`
    pub cos_weight: T,
    pub cos_bias: T,
    /// `d_te x 1` projection of the embedding onto the series.
    pub projection: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TkaParams<T = Tensor> {
    /// `1 x K`, bandwidth `sigma_k = exp(log_alpha_k)`.
    pub log_alpha: T,
    /// `1 x K`
    pub gate: T,
    /// `(K + 1) x d`
    pub projection: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams<T = Tensor> {
    /// `d x d_h` each.
    pub query: T,
    pub key: T,
    pub value: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlaBlockParams<T = Tensor> {
    pub heads: Vec<HeadParams<T>>,
    pub norm1_scale: T,
    pub norm1_shift: T,
    pub norm2_scale: T,
    pub norm2_shift: T,
    /// `d x 2d`
    pub mlp_in: T,
    pub mlp_in_bias: T,
    /// `2d x d`
    pub mlp_out: T,
    pub mlp_out_bias: T,
    /// Fixed random frequencies, `d_h x R/2`. Not trained.
    pub rff_omega: Tensor,
    /// Fixed random phases, `1 x R/2`. Not trained.
    pub rff_phase: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputHeadParams<T = Tensor> {
    /// `(d + d_te) x d`
    pub w1: T,
    pub b1: T,
    /// `d x d`
    pub w2: T,
    pub b2: T,
    /// `d x 1`
    pub w3: T,
    pub b3: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = Tensor> {
    pub preconv: PreConvParams<T>,
    pub time_embed: TimeEmbedParams<T>,
    pub tka: TkaParams<T>,
    pub blocks: Vec<FlaBlockParams<T>>,
    /// `d x d`, applied as `Z W_a`.
    pub mix: T,
    pub head: OutputHeadParams<T>,
}

type Visitor<'a, T, U> = dyn FnMut(String, &T) -> Result<U> + 'a;

impl<T> PreConvParams<T> {
    fn map<U>(&self, p: &str, f: &mut Visitor<'_, T, U>) -> Result<PreConvParams<U>> {
        Ok(PreConvParams {
            depth_kernel: f(format!("{p}.depth_kernel"), &self.depth_kernel)?,
            depth_bias: f(format!("{p}.depth_bias"), &self.depth_bias)?,
            point_kernel: f(format!("{p}.point_kernel"), &self.point_kernel)?,
            point_bias: f(format!("{p}.point_bias"), &self.point_bias)?,
        })
    }

    fn leaves_mut(&mut self) -> Vec<&mut T> {
        vec![
            &mut self.depth_kernel,
            &mut self.depth_bias,
            &mut self.point_kernel,
            &mut self.point_bias,
        ]
    }
}

impl<T> TimeEmbedParams<T> {
    fn map<U>(&self, p: &str, f: &mut Visitor<'_, T, U>) -> Result<TimeEmbedParams<U>> {
        Ok(TimeEmbedParams {
            linear_weight: f(format!("{p}.linear_weight"), &self.linear_weight)?,
            linear_bias: f(format!("{p}.linear_bias"), &self.linear_bias)?,
            sin_weight: f(format!("{p}.sin_weight"), &self.sin_weight)?,
            sin_bias: f(format!("{p}.sin_bias"), &self.sin_bias)?,
            cos_weight: f(format!("{p}.cos_weight"), &self.cos_weight)?,
            cos_bias: f(format!("{p}.cos_bias"), &self.cos_bias)?,
            projection: f(format!("{p}.projection"), &self.projection)?,
        })
    }

    fn leaves_mut(&mut self) -> Vec<&mut T> {
        vec![
            &mut self.linear_weight,
            &mut self.linear_bias,
            &mut self.sin_weight,
            &mut self.sin_bias,
            &mut self.cos_weight,
            &mut self.cos_bias,
            &mut self.projection,
        ]
    }
}

impl<T> TkaParams<T> {
    fn map<U>(&self, p: &str, f: &mut Visitor<'_, T, U>) -> Result<TkaParams<U>> {
        Ok(TkaParams {
            log_alpha: f(format!("{p}.log_alpha"), &self.log_alpha)?,
            gate: f(format!("{p}.gate"), &self.gate)?,
            projection: f(format!("{p}.projection"), &self.projection)?,
        })
    }

    fn leaves_mut(&mut self) -> Vec<&mut T> {
        vec![&mut self.log_alpha, &mut self.gate, &mut self.projection]
    }
}

impl<T> FlaBlockParams<T> {
    fn map<U>(&self, p: &str, f: &mut Visitor<'_, T, U>) -> Result<FlaBlockParams<U>> {
        let heads = self
            .heads
            .iter()
            .enumerate()
            .map(|(h, hp)| {
                Ok(HeadParams {
                    query: f(format!("{p}.heads.{h}.query"), &hp.query)?,
                    key: f(format!("{p}.heads.{h}.key"), &hp.key)?,
                    value: f(format!("{p}.heads.{h}.value"), &hp.value)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FlaBlockParams {
            heads,
            norm1_scale: f(format!("{p}.norm1_scale"), &self.norm1_scale)?,
            norm1_shift: f(format!("{p}.norm1_shift"), &self.norm1_shift)?,
            norm2_scale: f(format!("{p}.norm2_scale"), &self.norm2_scale)?,
            norm2_shift: f(format!("{p}.norm2_shift"), &self.norm2_shift)?,
            mlp_in: f(format!("{p}.mlp_in"), &self.mlp_in)?,
            mlp_in_bias: f(format!("{p}.mlp_in_bias"), &self.mlp_in_bias)?,
            mlp_out: f(format!("{p}.mlp_out"), &self.mlp_out)?,
            mlp_out_bias: f(format!("{p}.mlp_out_bias"), &self.mlp_out_bias)?,
            rff_omega: self.rff_omega.clone(),
            rff_phase: self.rff_phase.clone(),
        })
    }

    fn leaves_mut(&mut self) -> Vec<&mut T> {
        let mut out = Vec::new();
        for hp in &mut self.heads {
            out.push(&mut hp.query);
            out.push(&mut hp.key);
            out.push(&mut hp.value);
        }
        out.extend([
            &mut self.norm1_scale,
            &mut self.norm1_shift,
            &mut self.norm2_scale,
            &mut self.norm2_shift,
            &mut self.mlp_in,
            &mut self.mlp_in_bias,
            &mut self.mlp_out,
            &mut self.mlp_out_bias,
        ]);
        out
    }
}

impl<T> OutputHeadParams<T> {
    fn map<U>(&self, p: &str, f: &mut Visitor<'_, T, U>) -> Result<OutputHeadParams<U>> {
        Ok(OutputHeadParams {
            w1: f(format!("{p}.w1"), &self.w1)?,
            b1: f(format!("{p}.b1"), &self.b1)?,
            w2: f(format!("{p}.w2"), &self.w2)?,
            b2: f(format!("{p}.b2"), &self.b2)?,
            w3: f(format!("{p}.w3"), &self.w3)?,
            b3: f(format!("{p}.b3"), &self.b3)?,
        })
    }

    fn leaves_mut(&mut self) -> Vec<&mut T> {
        vec![
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }
}

impl<T> ModelParams<T> {
    /// Applies `f` to every trainable leaf in canonical order, passing its
    /// dotted name, and rebuilds the same layout from the results.
    pub fn try_map<U>(&self, f: &mut Visitor<'_, T, U>) -> Result<ModelParams<U>> {
        Ok(ModelParams {
            preconv: self.preconv.map("preconv", f)?,
            time_embed: self.time_embed.map("time_embed", f)?,
            tka: self.tka.map("tka", f)?,
            blocks: self
                .blocks
                .iter()
                .enumerate()
                .map(|(b, bp)| bp.map(&format!("blocks.{b}"), f))
                .collect::<Result<Vec<_>>>()?,
            mix: f("mix".to_string(), &self.mix)?,
            head: self.head.map("head", f)?,
        })
    }

    /// Mutable access to every trainable leaf, same order as [`Self::try_map`].
    pub fn leaves_mut(&mut self) -> Vec<&mut T> {
        let mut out = self.preconv.leaves_mut();
        out.extend(self.time_embed.leaves_mut());
        out.extend(self.tka.leaves_mut());
        for b in &mut self.blocks {
            out.extend(b.leaves_mut());
        }
        out.push(&mut self.mix);
        out.extend(self.head.leaves_mut());
        out
    }
}

impl ModelParams {
    /// Fresh parameters: weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` except
    /// query/key weights (see below) and value weights (zero), biases zero, layernorm scales one
    /// except the attention-side scale `1/d`, `sigma_k = 1/K`, gate zero.
    /// RFF frequencies are standard normal and phases uniform on `[0, 2pi)`.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let c = cfg.preconv_channels;
        let te = cfg.time_embed_dim;
        let k = cfg.kernels;
        let d = cfg.hidden;
        let dh = cfg.head_dim();
        let half_r = cfg.rff_dim / 2;

        let mut uniform = |shape: Vec<usize>, fan_in: usize| -> Result<Tensor> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            Tensor::new(shape, data)
        };
        let zeros = |shape: Vec<usize>| -> Result<Tensor> {
            let n = shape.iter().product();
            Tensor::new(shape, vec![0.0; n])
        };

        let preconv = PreConvParams {
            depth_kernel: uniform(vec![c, 1, 3], 3)?,
            depth_bias: zeros(vec![c])?,
            point_kernel: uniform(vec![1, c, 1], c)?,
            point_bias: zeros(vec![1])?,
        };
        let time_embed = TimeEmbedParams {
            linear_weight: uniform(vec![1, 1], 1)?,
            linear_bias: zeros(vec![1, 1])?,
            sin_weight: uniform(vec![1, cfg.sin_dim()], 1)?,
            sin_bias: zeros(vec![1, cfg.sin_dim()])?,
            cos_weight: uniform(vec![1, cfg.cos_dim()], 1)?,
            cos_bias: zeros(vec![1, cfg.cos_dim()])?,
            projection: uniform(vec![te, 1], te)?,
        };
        let tka = TkaParams {
            log_alpha: Tensor::row(vec![(1.0 / k as f64).ln(); k]),
            gate: zeros(vec![1, k])?,
            projection: uniform(vec![k + 1, d], k + 1)?,
        };
        // The RFF kernel has unit bandwidth and its estimate is sign-indefinite
        // once |q - k| grows past one. Three choices keep early attention in
        // the well-estimated regime: the first layernorm scale starts at 1/d
        // (spectral entries of order 1/sqrt(d) instead of sqrt(d)), query and
        // key weights start small, and keys start equal to queries so that
        // every self-pair sits at the kernel peak. Value weights start at zero,
        // so each block begins as its residual path and attention grows in
        // only as far as training pulls it.
        let qk_fan_in = d * d * dh;
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for _ in 0..cfg.blocks {
            let heads = (0..cfg.heads)
                .map(|_| {
                    let query = uniform(vec![d, dh], qk_fan_in)?;
                    Ok(HeadParams {
                        key: query.clone(),
                        query,
                        value: zeros(vec![d, dh])?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mlp_in = uniform(vec![d, cfg.mlp_dim()], d)?;
            let mlp_out = uniform(vec![cfg.mlp_dim(), d], cfg.mlp_dim())?;
            blocks.push(FlaBlockParams {
                heads,
                norm1_scale: Tensor::full(1, d, 1.0 / d as f64),
                norm1_shift: zeros(vec![1, d])?,
                norm2_scale: Tensor::full(1, d, 1.0),
                norm2_shift: zeros(vec![1, d])?,
                mlp_in,
                mlp_in_bias: zeros(vec![1, cfg.mlp_dim()])?,
                mlp_out,
                mlp_out_bias: zeros(vec![1, d])?,
                rff_omega: Tensor::zeros(dh, half_r),
                rff_phase: Tensor::zeros(1, half_r),
            });
        }
        let mix = uniform(vec![d, d], d)?;
        let head = OutputHeadParams {
            w1: uniform(vec![d + te, d], d + te)?,
            b1: zeros(vec![1, d])?,
            w2: uniform(vec![d, d], d)?,
            b2: zeros(vec![1, d])?,
            w3: uniform(vec![d, 1], d)?,
            b3: zeros(vec![1, 1])?,
        };

        // Separate stream so that the RFF draws do not depend on how many
        // weights were initialized before them.
        let mut rff_rng = ChaCha8Rng::seed_from_u64(cfg.init_seed ^ 0x5eed_f00d_cafe_d00d);
        for b in &mut blocks {
            for v in b.rff_omega.data_mut() {
                *v = StandardNormal.sample(&mut rff_rng);
            }
            for v in b.rff_phase.data_mut() {
                *v = rff_rng.random_range(0.0..std::f64::consts::TAU);
            }
        }

        Ok(ModelParams {
            preconv,
            time_embed,
            tka,
            blocks,
            mix,
            head,
        })
    }

    /// Trainable leaves with their names, canonical order.
    pub fn named(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.try_map(&mut |name, t| {
            out.push((name, t.clone()));
            Ok(())
        })
        .expect("infallible visitor");
        out
    }

    pub fn names(&self) -> Vec<String> {
        self.named().into_iter().map(|(n, _)| n).collect()
    }

    /// Runtime-enumerated trainable parameter count.
    pub fn count(&self) -> usize {
        let mut total = 0;
        self.try_map(&mut |_, t| {
            total += t.len();
            Ok(())
        })
        .expect("infallible visitor");
        total
    }

    /// Fixed RFF buffers per block: `(omega, phase)`.
    pub fn rff_buffers(&self) -> Vec<(&Tensor, &Tensor)> {
        self.blocks
            .iter()
            .map(|b| (&b.rff_omega, &b.rff_phase))
            .collect()
    }

    pub fn rff_buffers_mut(&mut self) -> Vec<(&mut Tensor, &mut Tensor)> {
        self.blocks
            .iter_mut()
            .map(|b| (&mut b.rff_omega, &mut b.rff_phase))
            .collect()
    }

    /// Sets every trainable leaf to zero (RFF buffers untouched).
    pub fn zeroed(&self) -> Self {
        let mut out = self.clone();
        for t in out.leaves_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        out
    }
}
