//! Pipeline library behind the `gop` binary: configuration, training,
//! evaluation, inference, and visualization.

pub mod batch;
pub mod checkpoint;
pub mod config;
mod error;
pub mod evaluate;
pub mod infer;
pub mod trainer;
pub mod visualize;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use error::CliError;
pub use evaluate::{evaluate, OracleMode};
pub use trainer::{train, TrainOutcome};
