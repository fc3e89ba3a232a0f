//! Momentum SGD with step decay, checkpoints, and the training loop.

mod checkpoint;
mod optim;
mod trainer;

pub use checkpoint::{fnv1a, Checkpoint, MAGIC, VERSION};
pub use optim::{decays, lr_schedule, sgd_step, OptState, TrainConfig, DESK_BASE_LR};
pub use trainer::{class_weights, train_loop, LogRecord, NoopObserver, TrainObserver, TrainOutcome};
