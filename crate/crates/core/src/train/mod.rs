//! Training, evaluation, ablations and proxy-guided search.

mod ablation;
mod config;
mod fit;
mod optim;
mod search;

pub use ablation::{ablation_csv, ablation_suite, design_arms, loss_arms, AblationArm, ArmSummary, SeedRun};
pub use config::{DesignArm, LossKind, TrainConfig, DEFAULT_EPOCHS};
pub use fit::{evaluate, evaluate_with, score_features, train, TrainReport};
pub use optim::AdamW;
pub use search::{search, SearchHit, SearchOptions, SearchResult};

#[cfg(test)]
mod tests;
