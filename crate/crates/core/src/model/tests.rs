#![allow(clippy::needless_range_loop)]

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::LAYERNORM_EPS;
use crate::imts::{Query, RawSeries};

fn random(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape,
        (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

fn rff_buffers(rng: &mut ChaCha8Rng, dh: usize, r: usize) -> (Tensor, Tensor) {
    use rand_distr::{Distribution, StandardNormal};
    let omega = Tensor::matrix(
        dh,
        r / 2,
        (0..dh * r / 2)
            .map(|_| StandardNormal.sample(&mut *rng))
            .collect(),
    )
    .unwrap();
    let phase = Tensor::row((0..r / 2).map(|_| rng.random_range(0.0..TAU)).collect());
    (omega, phase)
}

fn small_config() -> ModelConfig {
    ModelConfig {
        kernels: 4,
        preconv_channels: 4,
        time_embed_dim: 5,
        hidden: 8,
        heads: 2,
        rff_dim: 8,
        blocks: 2,
        ..ModelConfig::default()
    }
}

/// Every trainable leaf redrawn from U(-scale, scale).
fn jittered(cfg: &ModelConfig, seed: u64, scale: f64) -> Kafnet {
    let mut model = Kafnet::new(cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in model.params_mut().leaves_mut() {
        t.data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-scale..scale));
    }
    model
}

fn sample(seed: u64, n: usize) -> ImtsSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let series = (0..n)
        .map(|v| {
            let mut t = 0.0;
            let obs = (0..rng.random_range(2..6))
                .map(|_| {
                    t += rng.random_range(0.1..1.0);
                    (t, rng.random_range(-1.0..1.0))
                })
                .collect();
            RawSeries::new(v, obs).unwrap()
        })
        .collect();
    let queries = (0..n)
        .map(|_| (0..2).map(|j| Query::new(10.0 + j as f64, None)).collect())
        .collect();
    ImtsSample::new(seed, series, queries).unwrap()
}

#[test]
fn time_embed_at_zero() {
    let mut p = ModelParams::init(&small_config()).unwrap().time_embed;
    p.linear_bias.data_mut()[0] = 0.0;
    let e = time_embed(0.0, &p).unwrap();
    // 1 linear, 2 sin, 2 cos
    assert_eq!(e, vec![0.0, 0.0, 0.0, 1.0, 1.0]);
}

#[test]
fn time_embed_quarter_period_and_range() {
    let mut p = ModelParams::init(&small_config()).unwrap().time_embed;
    p.sin_weight.data_mut()[0] = PI / 2.0;
    let e = time_embed(1.0, &p).unwrap();
    assert!((e[1] - 1.0).abs() < 1e-15);
    for t in [-50.0, -1.3, 0.7, 123.4] {
        assert!(time_embed(t, &p).unwrap()[1..]
            .iter()
            .all(|v| v.abs() <= 1.0));
    }
}

#[test]
fn preconv_zero_input_gives_zero() {
    let mut p = ModelParams::init(&small_config()).unwrap();
    p.time_embed
        .projection
        .data_mut()
        .iter_mut()
        .for_each(|v| *v = 0.0);
    let out = preconv(
        &[0.0; 5],
        &[0.0, 1.0, 2.0, 3.0, 4.0],
        &p.time_embed,
        &p.preconv,
    )
    .unwrap();
    assert!(out.iter().all(|&v| v == 0.0));
}

/// `sum_c W2_c relu(b1_c + sum_j W1_{c,j} x_{l+j-1}) + b2 + W_t . TE(t_l)`
fn preconv_oracle(x: &[f64], t: &[f64], tep: &TimeEmbedParams, pcp: &PreConvParams) -> Vec<f64> {
    let c = pcp.depth_bias.len();
    let at = |i: isize| {
        if i < 0 || i as usize >= x.len() {
            0.0
        } else {
            x[i as usize]
        }
    };
    (0..x.len())
        .map(|l| {
            let mut acc = pcp.point_bias.data()[0];
            for ch in 0..c {
                let mut h = pcp.depth_bias.data()[ch];
                for j in 0..3 {
                    h += pcp.depth_kernel.data()[ch * 3 + j] * at(l as isize + j as isize - 1);
                }
                acc += pcp.point_kernel.data()[ch] * h.max(0.0);
            }
            let te = time_embed(t[l], tep).unwrap();
            acc + te
                .iter()
                .zip(tep.projection.data())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .collect()
}

#[test]
fn preconv_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut p = ModelParams::init(&small_config()).unwrap();
    let pc = &mut p.preconv;
    for t in [
        &mut pc.depth_kernel,
        &mut pc.depth_bias,
        &mut pc.point_kernel,
        &mut pc.point_bias,
    ] {
        *t = random(&mut rng, t.shape().to_vec(), 1.0);
    }
    let x: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
    let t: Vec<f64> = (0..7).map(|i| i as f64 * 0.3).collect();
    let got = preconv(&x, &t, &p.time_embed, &p.preconv).unwrap();
    let want = preconv_oracle(&x, &t, &p.time_embed, &p.preconv);
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    // a single point sees [0, v, 0]
    let one = preconv(&[1.7], &[0.5], &p.time_embed, &p.preconv).unwrap();
    assert!((one[0] - preconv_oracle(&[1.7], &[0.5], &p.time_embed, &p.preconv)[0]).abs() < 1e-12);
}

#[test]
fn tka_single_point_and_masked_row() {
    let p = ModelParams::init(&ModelConfig {
        kernels: 2,
        ..small_config()
    })
    .unwrap()
    .tka;
    let a = tka_weights(&[0.3], &[1.0], &p).unwrap();
    assert_eq!(a.data(), &[1.0, 1.0]);
    let p = ModelParams::init(&small_config()).unwrap().tka;
    let a = tka_weights(&[0.0, 0.4, 1.0], &[1.0, 0.0, 1.0], &p).unwrap();
    assert!(a.row_slice(1).iter().all(|&v| v == 0.0));
}

#[test]
fn tka_weights_match_elementwise_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut p = ModelParams::init(&small_config()).unwrap().tka;
    p.log_alpha = random(&mut rng, vec![1, 4], 1.0);
    let l = 12;
    let t: Vec<f64> = (0..l).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut m: Vec<f64> = (0..l)
        .map(|_| if rng.random_bool(0.6) { 1.0 } else { 0.0 })
        .collect();
    m[0] = 1.0;
    let a = tka_weights(&t, &m, &p).unwrap();
    let centers = kernel_centers(4);
    for k in 0..4 {
        let sigma = p.log_alpha.data()[k].exp();
        let w: Vec<f64> = (0..l)
            .map(|i| (-0.5 * (t[i] - centers[k]).powi(2) / (sigma * sigma)).exp() * m[i])
            .collect();
        let total: f64 = w.iter().sum();
        let mut col = 0.0;
        for i in 0..l {
            assert!((a.get(i, k) - w[i] / total).abs() < 1e-12);
            col += a.get(i, k);
        }
        assert!((col - 1.0).abs() < 1e-12);
    }
}

#[test]
fn tka_aggregate_matches_double_loop() {
    let cfg = ModelConfig {
        kernels: 8,
        hidden: 32,
        ..small_config()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut p = ModelParams::init(&cfg).unwrap().tka;
    p.gate = random(&mut rng, vec![1, 8], 2.0);
    p.projection = random(&mut rng, vec![9, 32], 1.0);
    let l = 20;
    let x: Vec<f64> = (0..l).map(|_| rng.random_range(-3.0..3.0)).collect();
    let t: Vec<f64> = (0..l).map(|i| i as f64 / (l - 1) as f64).collect();
    let m: Vec<f64> = (0..l).map(|i| (i % 3 != 1) as u8 as f64).collect();
    let a = tka_weights(&t, &m, &p).unwrap();
    let z = tka_aggregate(&x, &a, &m, &p).unwrap();
    let mut feats = [0.0; 9];
    for k in 0..8 {
        let mut h = 0.0;
        for i in 0..l {
            h += a.get(i, k) * x[i];
        }
        feats[k] = h / (1.0 + (-p.gate.data()[k]).exp());
    }
    feats[8] = 1.0;
    for (j, zj) in z.iter().enumerate() {
        let want: f64 = (0..9).map(|i| feats[i] * p.projection.get(i, j)).sum();
        assert!((zj - want).abs() < 1e-12);
    }
}

#[test]
fn tka_constant_signal_and_empty_variate() {
    let cfg = ModelConfig {
        kernels: 8,
        ..small_config()
    };
    let mut p = ModelParams::init(&cfg).unwrap().tka;
    // Identity on the first K columns exposes h~ = sigmoid(0) h = h / 2.
    p.projection = Tensor::zeros(9, cfg.hidden);
    for k in 0..cfg.hidden.min(9) {
        p.projection.set(k, k, 1.0);
    }
    let t = [0.0, 0.2, 0.5, 0.9, 1.0];
    let m = [1.0, 0.0, 1.0, 1.0, 1.0];
    let a = tka_weights(&t, &m, &p).unwrap();
    let z = tka_aggregate(&[2.5; 5], &a, &m, &p).unwrap();
    for &zk in z.iter().take(cfg.hidden.min(8)) {
        assert!((zk - 1.25).abs() < 1e-12);
    }
    let empty = [0.0; 5];
    let a = tka_weights(&t, &empty, &p).unwrap();
    assert!(a.data().iter().all(|&v| v == 0.0));
    let z = tka_aggregate(&[7.0; 5], &a, &empty, &p).unwrap();
    assert!(z.iter().all(|&v| v == 0.0));
}

#[test]
fn rff_norm_and_phase_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (omega, phase) = rff_buffers(&mut rng, 6, 32);
    let x = random(&mut rng, vec![4, 6], 2.0);
    let phi = rff_map(&x, &omega, &phase).unwrap();
    for i in 0..4 {
        let n: f64 = phi.row_slice(i).iter().map(|v| v * v).sum();
        assert!((n - 0.5).abs() < 1e-14);
    }
    let (_, other) = rff_buffers(&mut rng, 6, 32);
    let psi = rff_map(&x, &omega, &other).unwrap();
    let g1 = phi.matmul(&phi.transpose()).unwrap();
    let g2 = psi.matmul(&psi.transpose()).unwrap();
    assert!(g1.max_abs_diff(&g2) < 1e-12);
    // (1/R) sum_i cos(w_i . (x - y)) over the R/2 frequencies, counted twice
    for i in 0..4 {
        for j in 0..4 {
            let s: f64 = (0..16)
                .map(|f| {
                    let proj: f64 = (0..6)
                        .map(|c| omega.get(c, f) * (x.get(i, c) - x.get(j, c)))
                        .sum();
                    proj.cos()
                })
                .sum();
            assert!((g1.get(i, j) - s / 32.0).abs() < 1e-12);
        }
    }
}

/// `(phi(Q) phi(K)^T V) / (phi(Q) phi(K)^T 1 + eps)`, materializing `N x N`.
fn quadratic_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    omega: &Tensor,
    phase: &Tensor,
    eps: f64,
) -> Tensor {
    let w = rff_map(q, omega, phase)
        .unwrap()
        .matmul(&rff_map(k, omega, phase).unwrap().transpose())
        .unwrap();
    let mut out = Tensor::zeros(q.rows(), v.cols());
    for i in 0..q.rows() {
        let den: f64 = w.row_slice(i).iter().sum::<f64>() + eps;
        for c in 0..v.cols() {
            let num: f64 = (0..k.rows()).map(|j| w.get(i, j) * v.get(j, c)).sum();
            out.set(i, c, num / den);
        }
    }
    out
}

#[test]
fn linear_attention_single_key_and_identical_keys() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (omega, phase) = rff_buffers(&mut rng, 4, 16);
    let q = random(&mut rng, vec![1, 4], 0.3);
    let v = random(&mut rng, vec![1, 4], 1.0);
    let (o, _) = linear_attention_with_eps(&q, &q, &v, &omega, &phase, 0.0).unwrap();
    assert!(o.max_abs_diff(&v) < 1e-14);

    let q = random(&mut rng, vec![5, 4], 0.3);
    let key = random(&mut rng, vec![1, 4], 0.3);
    let k = Tensor::from_rows(&vec![key.row_slice(0).to_vec(); 5]).unwrap();
    let v = random(&mut rng, vec![5, 4], 1.0);
    let o = linear_attention(&q, &k, &v, &omega, &phase).unwrap();
    for c in 0..4 {
        let mean = (0..5).map(|j| v.get(j, c)).sum::<f64>() / 5.0;
        for i in 0..5 {
            assert!((o.get(i, c) - mean).abs() < 1e-5);
        }
    }
}

#[test]
fn linear_attention_matches_quadratic_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (omega, phase) = rff_buffers(&mut rng, 8, 32);
    let q = random(&mut rng, vec![6, 8], 0.3);
    let k = random(&mut rng, vec![6, 8], 0.3);
    let v = random(&mut rng, vec![6, 8], 1.0);
    let lin = linear_attention(&q, &k, &v, &omega, &phase).unwrap();
    let quad = quadratic_attention(&q, &k, &v, &omega, &phase, ATTENTION_EPS);
    assert!(lin.max_abs_diff(&quad) < 1e-10);
}

#[test]
fn degenerate_denominator_is_counted() {
    // One frequency: phi(q).phi(k) = cos(w (q - k)) / 2, zero at a quarter turn.
    let omega = Tensor::matrix(1, 1, vec![1.0]).unwrap();
    let phase = Tensor::row(vec![0.3]);
    let q = Tensor::matrix(1, 1, vec![PI / 2.0]).unwrap();
    let k = Tensor::matrix(1, 1, vec![0.0]).unwrap();
    let v = Tensor::matrix(1, 1, vec![1.0]).unwrap();
    let (o, bad) = linear_attention_with_eps(&q, &k, &v, &omega, &phase, ATTENTION_EPS).unwrap();
    assert_eq!(bad, 1);
    assert!(o.is_finite());
}

fn random_block(rng: &mut ChaCha8Rng, d: usize, h: usize, r: usize) -> FlaBlockParams {
    let dh = d / h;
    let (rff_omega, rff_phase) = rff_buffers(rng, dh, r);
    FlaBlockParams {
        heads: (0..h)
            .map(|_| HeadParams {
                query: random(rng, vec![d, dh], 0.05),
                key: random(rng, vec![d, dh], 0.05),
                value: random(rng, vec![d, dh], 0.5),
            })
            .collect(),
        norm1_scale: random(rng, vec![1, d], 1.0),
        norm1_shift: random(rng, vec![1, d], 0.5),
        norm2_scale: random(rng, vec![1, d], 1.0),
        norm2_shift: random(rng, vec![1, d], 0.5),
        mlp_in: random(rng, vec![d, 2 * d], 0.3),
        mlp_in_bias: random(rng, vec![1, 2 * d], 0.3),
        mlp_out: random(rng, vec![2 * d, d], 0.3),
        mlp_out_bias: random(rng, vec![1, d], 0.3),
        rff_omega,
        rff_phase,
    }
}

/// The whole block as one function over nested vectors.
fn block_oracle(z: &Tensor, p: &FlaBlockParams) -> Tensor {
    let (n, d) = z.dims();
    let h = p.heads.len();
    let dh = d / h;
    let row = |t: &Tensor, i: usize| t.row_slice(i).to_vec();
    let ln = |x: &[f64], s: &Tensor, b: &Tensor| -> Vec<f64> {
        let mean = x.iter().sum::<f64>() / d as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        (0..d)
            .map(|c| (x[c] - mean) / (var + LAYERNORM_EPS).sqrt() * s.data()[c] + b.data()[c])
            .collect()
    };
    let matvec = |x: &[f64], w: &Tensor| -> Vec<f64> {
        (0..w.cols())
            .map(|c| (0..x.len()).map(|i| x[i] * w.get(i, c)).sum())
            .collect()
    };
    let dft = |x: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; d];
        for k in 0..=d / 2 {
            out[k] = (0..d)
                .map(|l| x[l] * (TAU * (k * l) as f64 / d as f64).cos())
                .sum();
        }
        for k in 1..d / 2 {
            out[d / 2 + k] = -(0..d)
                .map(|l| x[l] * (TAU * (k * l) as f64 / d as f64).sin())
                .sum::<f64>();
        }
        out
    };
    let idft = |c: &[f64]| -> Vec<f64> {
        (0..d)
            .map(|l| {
                let mut s = c[0] + c[d / 2] * if l % 2 == 0 { 1.0 } else { -1.0 };
                for k in 1..d / 2 {
                    let th = TAU * (k * l) as f64 / d as f64;
                    s += 2.0 * (c[k] * th.cos() - c[d / 2 + k] * th.sin());
                }
                s / d as f64
            })
            .collect()
    };
    let r = 2 * p.rff_omega.cols();
    let phi = |x: &[f64]| -> Vec<f64> {
        let proj: Vec<f64> = (0..r / 2)
            .map(|f| {
                (0..dh).map(|c| x[c] * p.rff_omega.get(c, f)).sum::<f64>() + p.rff_phase.data()[f]
            })
            .collect();
        let s = 1.0 / (r as f64).sqrt();
        proj.iter()
            .map(|a| a.cos() * s)
            .chain(proj.iter().map(|a| a.sin() * s))
            .collect()
    };

    let spectra: Vec<Vec<f64>> = (0..n)
        .map(|i| dft(&ln(&row(z, i), &p.norm1_scale, &p.norm1_shift)))
        .collect();
    let mut mixed = vec![vec![0.0; d]; n];
    for (hi, hp) in p.heads.iter().enumerate() {
        let q: Vec<Vec<f64>> = spectra.iter().map(|c| phi(&matvec(c, &hp.query))).collect();
        let k: Vec<Vec<f64>> = spectra.iter().map(|c| phi(&matvec(c, &hp.key))).collect();
        let v: Vec<Vec<f64>> = spectra.iter().map(|c| matvec(c, &hp.value)).collect();
        for i in 0..n {
            let w: Vec<f64> = (0..n)
                .map(|j| q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum())
                .collect();
            let den = w.iter().sum::<f64>() + ATTENTION_EPS;
            for c in 0..dh {
                mixed[i][hi * dh + c] = (0..n).map(|j| w[j] * v[j][c]).sum::<f64>() / den;
            }
        }
    }
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        let u: Vec<f64> = row(z, i)
            .iter()
            .zip(idft(&mixed[i]))
            .map(|(a, b)| a + b)
            .collect();
        let hidden: Vec<f64> = matvec(&ln(&u, &p.norm2_scale, &p.norm2_shift), &p.mlp_in)
            .iter()
            .zip(p.mlp_in_bias.data())
            .map(|(a, b)| (a + b).max(0.0))
            .collect();
        let m = matvec(&hidden, &p.mlp_out);
        out.extend((0..d).map(|c| u[c] + m[c] + p.mlp_out_bias.data()[c]));
    }
    Tensor::matrix(n, d, out).unwrap()
}

#[test]
fn fla_block_matches_monolithic_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let p = random_block(&mut rng, 16, 2, 16);
    let z = random(&mut rng, vec![5, 16], 1.5);
    let got = fla_block(&z, &p).unwrap();
    let want = block_oracle(&z, &p);
    assert!(
        got.max_abs_diff(&want) < 1e-10,
        "{}",
        got.max_abs_diff(&want)
    );
}

#[test]
fn fla_block_reduces_to_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut p = random_block(&mut rng, 8, 2, 8);
    for h in &mut p.heads {
        h.value = Tensor::new(vec![8, 4], vec![0.0; 32]).unwrap();
    }
    p.mlp_out = Tensor::zeros(16, 8);
    p.mlp_out_bias = Tensor::zeros(1, 8);
    p.norm1_shift = Tensor::zeros(1, 8);
    p.norm2_shift = Tensor::zeros(1, 8);
    for n in [1, 3, 7] {
        let z = random(&mut rng, vec![n, 8], 1.0);
        let out = fla_block(&z, &p).unwrap();
        assert_eq!(out.dims(), (n, 8));
        assert_eq!(out, z);
    }
}

#[test]
fn forward_is_bitwise_reproducible() {
    let model = jittered(&small_config(), 1, 0.5);
    let s = sample(4, 2);
    let a = model.forward(&s).unwrap();
    assert_eq!(a.len(), 4);
    assert!(a.iter().all(|v| v.is_finite()));
    let b = Kafnet::from_parts(model.config().clone(), model.params().clone())
        .unwrap()
        .forward(&s)
        .unwrap();
    assert_eq!(
        a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn forward_is_permutation_equivariant() {
    let model = jittered(&small_config(), 2, 0.5);
    let s = sample(6, 4);
    let perm = [2, 0, 3, 1];
    let series = perm
        .iter()
        .enumerate()
        .map(|(new, &old)| RawSeries::new(new, s.series()[old].iter().collect()).unwrap())
        .collect();
    let queries = perm.iter().map(|&old| s.queries()[old].clone()).collect();
    let permuted = ImtsSample::new(s.id(), series, queries).unwrap();
    let base = model.forward(&s).unwrap();
    let moved = model.forward(&permuted).unwrap();
    let h = model.encode(&s).unwrap();
    let hp = model.encode(&permuted).unwrap();
    for (new, &old) in perm.iter().enumerate() {
        for j in 0..2 {
            assert!((moved[new * 2 + j] - base[old * 2 + j]).abs() < 1e-10);
        }
        for c in 0..h.cols() {
            assert!((hp.get(new, c) - h.get(old, c)).abs() < 1e-10);
        }
    }
}

#[test]
fn zero_weights_collapse_to_bias_chain() {
    let cfg = small_config();
    let mut p = ModelParams::init(&cfg).unwrap().zeroed();
    p.head.b1 = Tensor::full(1, cfg.hidden, 0.7);
    p.head.b2 = Tensor::full(1, cfg.hidden, -0.2);
    p.head.b3 = Tensor::scalar(0.4);
    p.head.w3 = Tensor::full(cfg.hidden, 1, 0.5);
    let model = Kafnet::from_parts(cfg.clone(), p).unwrap();
    // relu(b1) W2 = 0, so x2 = relu(b2) = 0 and the output is b3.
    for v in model.forward(&sample(8, 3)).unwrap() {
        assert_eq!(v, 0.4);
    }
}

#[test]
fn attention_maps_are_stochastic_and_consistent() {
    let model = jittered(&small_config(), 3, 0.3);
    let s = sample(10, 4);
    let maps = model.attention_maps(&s).unwrap();
    assert_eq!(maps.len(), 4);
    for m in &maps {
        assert_eq!(m.weights.dims(), (4, 4));
        for i in 0..4 {
            assert!((m.weights.row_slice(i).iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
        assert!(m.consistency_error(&model).unwrap() < 1e-10);
    }
}

#[test]
fn param_count_matches_formula() {
    let model = Kafnet::new(ModelConfig::default()).unwrap();
    assert_eq!(model.param_count(), model.config().analytic_param_count());
}
