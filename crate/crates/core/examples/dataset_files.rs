// Generate a dataset, write it as CSV plus a checksummed manifest, read it
// back.

use kafnet::datagen::{generate, SynthSpec};
use kafnet::dataset::{read_dataset, split_samples, write_dataset};

pub fn run_example() -> kafnet::Result<()> {
    let spec = SynthSpec {
        n_samples: 20,
        ..SynthSpec::preset_damped(5)
    };
    let splits = split_samples(generate(&spec)?, spec.seed, [12, 4, 4])?;
    let dir = std::env::temp_dir().join(format!("kafnet-example-{}", std::process::id()));
    let manifest = write_dataset(&dir, &splits, Some(&spec))?;
    println!("wrote {}", manifest.display());
    let (m, back) = read_dataset(&manifest)?;
    println!(
        "{} variates, splits {:?}",
        m.n_variates,
        m.splits.keys().collect::<Vec<_>>()
    );
    assert_eq!(back.train, splits.train);
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}

#[allow(dead_code)]
fn main() -> kafnet::Result<()> {
    run_example()
}
