// Packed real FFT of each row and its exact inverse.

use kafnet::autodiff::Tensor;
use kafnet::spectral::{irfft_rows, rfft_rows};

pub fn run_example() -> kafnet::Result<()> {
    let d = 8;
    let row: Vec<f64> = (0..d)
        .map(|l| (std::f64::consts::TAU * l as f64 / d as f64).cos() + 0.5)
        .collect();
    let z = Tensor::row(row);
    let c = rfft_rows(&z)?;
    // DC = 0.5 d, the cosine lands in bin 1 with weight d/2
    println!("packed spectrum {:.3?}", c.as_tensor().data());
    assert!((c.re(0, 0) - 4.0).abs() < 1e-12 && (c.re(0, 1) - 4.0).abs() < 1e-12);
    let back = irfft_rows(&c)?;
    println!("round-trip error {:e}", back.max_abs_diff(&z));
    assert!(back.max_abs_diff(&z) < 1e-12);
    Ok(())
}

#[allow(dead_code)]
fn main() -> kafnet::Result<()> {
    run_example()
}
