// Random-Fourier-feature attention in linear order agrees with the
// materialized N x N map.

use kafnet::autodiff::Tensor;
use kafnet::model::{attention_weights, linear_attention_with_eps, rff_map};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn run_example() -> kafnet::Result<()> {
    let (n, dh, r) = (6, 4, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut draw = |rows: usize, cols: usize, s: f64| {
        Tensor::matrix(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random_range(-s..s)).collect(),
        )
    };
    let (q, k, v) = (draw(n, dh, 0.4)?, draw(n, dh, 0.4)?, draw(n, dh, 1.0)?);
    let omega = Tensor::matrix(
        dh,
        r / 2,
        (0..dh * r / 2)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect(),
    )?;
    let phase = Tensor::row(
        (0..r / 2)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect(),
    );

    let phi = rff_map(&q, &omega, &phase)?;
    let sq: f64 = phi.row_slice(0).iter().map(|x| x * x).sum();
    println!("|phi(q_0)|^2 = {sq:.15}");

    let (linear, degenerate) = linear_attention_with_eps(&q, &k, &v, &omega, &phase, 0.0)?;
    let map = attention_weights(&q, &k, &omega, &phase)?;
    let quadratic = map.matmul(&v)?;
    println!(
        "max |linear - quadratic| = {:e}, degenerate rows {degenerate}",
        linear.max_abs_diff(&quadratic)
    );
    assert!(linear.max_abs_diff(&quadratic) < 1e-10);
    Ok(())
}

#[allow(dead_code)]
fn main() -> kafnet::Result<()> {
    run_example()
}
