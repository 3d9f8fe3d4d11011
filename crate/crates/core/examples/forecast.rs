// Forecast future values of every variate with a fresh model.

use kafnet::datagen::{generate, SynthSpec};
use kafnet::{Kafnet, ModelConfig};

pub fn run_example() -> kafnet::Result<()> {
    let spec = SynthSpec {
        n_samples: 1,
        ..SynthSpec::preset_a(3)
    };
    let sample = &generate(&spec)?[0];
    let model = Kafnet::new(ModelConfig::default())?;
    println!("{} trainable parameters", model.param_count());
    let preds = model.forward(sample)?;
    for ((n, q), p) in sample.flat_queries().into_iter().zip(&preds) {
        println!(
            "variate {n} t = {:.3}: predicted {p:+.4}, actual {:+.4}",
            q.time,
            q.target.unwrap_or(f64::NAN)
        );
    }
    assert_eq!(preds.len(), sample.n_queries());
    Ok(())
}

#[allow(dead_code)]
fn main() -> kafnet::Result<()> {
    run_example()
}
