// Forward time as the grid length and variate count double.

use kafnet::bench::{doubling_ratios, sweep_lengths, sweep_variates};
use kafnet::ModelConfig;

pub fn run_example() -> kafnet::Result<()> {
    let cfg = ModelConfig::default();
    let by_l = sweep_lengths(&cfg, &[64, 128, 256], 4, 3)?;
    let by_n = sweep_variates(&cfg, &[4, 8, 16], 64, 3)?;
    for r in by_l.iter().chain(&by_n) {
        println!(
            "L = {:>4} N = {:>3}: {:.3} ms",
            r.grid_len,
            r.variates,
            r.median_seconds * 1e3
        );
    }
    println!(
        "ratios L {:.2?} N {:.2?}",
        doubling_ratios(&by_l),
        doubling_ratios(&by_n)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> kafnet::Result<()> {
    run_example()
}
