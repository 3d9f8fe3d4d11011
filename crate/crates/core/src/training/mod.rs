//! Objective, metrics, Adam, and the early-stopping training loop.

mod adam;
mod config;
mod loss;
mod trainer;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use config::{HyperGrid, TrainConfig};
pub use loss::{metrics, mse_loss, mse_loss_tape, Metrics};
pub use trainer::{
    epoch_order, evaluate, mean_baseline, model_grad_check, train, train_with_observer,
    EpochRecord, History, TrainOutcome,
};
