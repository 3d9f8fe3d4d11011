// Temporal kernel aggregation: a variate of any length becomes one
// fixed-width summary.

use kafnet::model::{tka_aggregate, tka_weights, ModelParams};
use kafnet::ModelConfig;

pub fn run_example() -> kafnet::Result<()> {
    let cfg = ModelConfig::default();
    let p = ModelParams::init(&cfg)?.tka;
    for l in [1usize, 10, 1000] {
        let t: Vec<f64> = (0..l)
            .map(|i| {
                if l == 1 {
                    0.0
                } else {
                    i as f64 / (l - 1) as f64
                }
            })
            .collect();
        let x: Vec<f64> = t.iter().map(|t| (6.0 * t).sin()).collect();
        let m = vec![1.0; l];
        let a = tka_weights(&t, &m, &p)?;
        let col_sums: Vec<f64> = (0..cfg.kernels)
            .map(|k| (0..l).map(|i| a.get(i, k)).sum())
            .collect();
        let z = tka_aggregate(&x, &a, &m, &p)?;
        println!(
            "L = {l:>4}: summary width {}, kernel column sums {:.12?}",
            z.len(),
            &col_sums[..2]
        );
        assert_eq!(z.len(), cfg.hidden);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> kafnet::Result<()> {
    run_example()
}
