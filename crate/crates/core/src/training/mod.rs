//! Loss, optimizer, cipher pools and the training loop.

mod bootstrap;
mod config;
mod generalization;
mod loss;
mod optim;
mod pool;
mod trainer;

pub use bootstrap::{bootstrap_ser, dirichlet_weights, mean_std, BootstrapEstimate, DEFAULT_BOOTSTRAP_SAMPLES};
pub use config::TrainConfig;
pub use generalization::{run_generalization_suite, GeneralizationRun, POOL_SIZES};
pub use loss::cross_entropy;
pub use optim::{AdamW, AdamWConfig};
pub use pool::CipherPool;
pub use trainer::{MetricsRow, TrainSummary, Trainer, ValidationSet};
