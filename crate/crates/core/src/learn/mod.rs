//! Supervised policy learning from plan batches.

pub mod batch;
pub mod mlp;
pub mod train;
pub mod weights;

use thiserror::Error;

pub use batch::{extract_batches, BatchArchive, BatchRecord, PlanBatch};
pub use mlp::{Activation, Head, Mlp, MlpSpec};
pub use train::{
    argmax, fit_cross_entropy, gradient_check, gumbel_noise, gumbel_sample, train_cross_entropy, train_gumbel_mse, train_subgoal_classifier,
    ClassifierReport, Loss, Sample, SubgoalClassifier, TemperatureSchedule, TrainConfig, TrainReport,
};
pub use weights::{load_weights, read_weights, save_weights, write_weights, WeightMeta};

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("invalid network spec: {0}")]
    BadSpec(String),
    #[error("training batch is empty")]
    EmptyBatch,
    #[error("feature width {got} does not match the network input width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("target {target} is outside the {outputs} outputs")]
    TargetOutOfRange { target: usize, outputs: usize },
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("{0} class is empty")]
    EmptyClass(&'static str),
    #[error("io error: {0}")]
    Io(String),
    #[error("malformed file: {0}")]
    Format(String),
}

impl From<std::io::Error> for LearnError {
    fn from(e: std::io::Error) -> Self {
        LearnError::Io(e.to_string())
    }
}
