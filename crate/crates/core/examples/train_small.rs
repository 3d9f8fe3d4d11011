// Train on a small synthetic dataset and compare with the mean predictor.

use kafnet::datagen::{generate, SynthSpec};
use kafnet::dataset::split_samples;
use kafnet::training::{evaluate, mean_baseline, train, TrainConfig};

pub fn run_example() -> kafnet::Result<()> {
    let spec = SynthSpec {
        n_samples: 60,
        n_variates: 3,
        ..SynthSpec::preset_a(11)
    };
    let splits = split_samples(generate(&spec)?, spec.seed, [40, 10, 10])?;
    let cfg = TrainConfig {
        hidden: 16,
        heads: 2,
        rff_dim: 16,
        max_epochs: 8,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let outcome = train(&splits.train, &splits.val, &cfg)?;
    for r in &outcome.history.records {
        println!(
            "epoch {:>2} train {:.4} val {:.4}",
            r.epoch, r.train_loss, r.val_mse
        );
    }
    let test = evaluate(&outcome.model, &splits.test)?;
    let base = mean_baseline(&splits.train, &splits.test)?;
    println!(
        "best epoch {}, test mse {:.4}, mean-predictor mse {:.4}",
        outcome.history.best_epoch, test.mse, base.mse
    );
    assert!(outcome.divergence.is_none());
    Ok(())
}

#[allow(dead_code)]
fn main() -> kafnet::Result<()> {
    run_example()
}
