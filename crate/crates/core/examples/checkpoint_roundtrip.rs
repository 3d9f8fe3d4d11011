// Save a model to JSON and restore it bit for bit.

use kafnet::checkpoint::{load, save};
use kafnet::datagen::toy_sample;
use kafnet::{Kafnet, ModelConfig};

pub fn run_example() -> kafnet::Result<()> {
    let model = Kafnet::new(ModelConfig {
        init_seed: 42,
        ..ModelConfig::default()
    })?
    .perturbed(0.1, 7)?;
    let path = std::env::temp_dir().join(format!("kafnet-ckpt-{}.json", std::process::id()));
    save(&model, Some(3), &path)?;
    let (restored, n) = load(&path)?;
    let s = toy_sample(0);
    let (a, b) = (model.forward(&s)?, restored.forward(&s)?);
    println!("variates {n:?}; predictions {a:.5?}");
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    std::fs::remove_file(&path).ok();
    Ok(())
}

#[allow(dead_code)]
fn main() -> kafnet::Result<()> {
    run_example()
}
