//! MSE training with AdamW: optimizer, epoch loop with validation-based
//! selection, and multi-seed runs.

mod config;
mod optim;
mod trainer;

pub use config::TrainConfig;
pub use optim::{adamw_step, OptimState};
pub use trainer::{
    batch_loss_graph, dataset_loss, mse_loss, mse_loss_graph, run_seeds, train, EpochRecord, SeedRun, SeedRuns, TrainHistory, Trainer,
};
