// Compare reverse-mode gradients with central differences, group by group.

use kafnet::autodiff::GradCheckOptions;
use kafnet::datagen::toy_sample;
use kafnet::training::model_grad_check;
use kafnet::{Kafnet, ModelConfig};

pub fn run_example() -> kafnet::Result<()> {
    let cfg = ModelConfig {
        hidden: 8,
        heads: 2,
        rff_dim: 16,
        kernels: 4,
        preconv_channels: 4,
        time_embed_dim: 6,
        ..ModelConfig::default()
    };
    let model = Kafnet::new(cfg)?.perturbed(0.05, 1)?;
    let opts = GradCheckOptions {
        step: 1e-5,
        ..GradCheckOptions::default()
    };
    let report = model_grad_check(&model, &toy_sample(0), opts)?;
    for g in &report.groups {
        println!(
            "{:<28} {:>4} elements  max rel err {:.2e}",
            g.name, g.elements, g.max_rel_err
        );
    }
    println!("passed: {}", report.passed());
    assert!(report.passed());
    Ok(())
}

#[allow(dead_code)]
fn main() -> kafnet::Result<()> {
    run_example()
}
