//! Losses, pair sampling, the Adadelta optimizer and the training loop.

mod losses;
mod optim;
mod pairs;
mod train;

use thiserror::Error;

use crate::net::NetError;

pub use losses::{multinomial_loss, multinomial_loss_from_logits, siamese_loss, SiameseLoss};
pub use optim::Adadelta;
pub use pairs::{sample_pairs, GroundTruth, PairSampler, PairSet, VertexRef};
pub use train::{train, LossRecord, Task, TrainConfig, TrainData, TrainResult, TrainShape};

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("insufficient ground truth: {0}")]
    InsufficientGroundTruth(String),
    #[error("no training data")]
    EmptyData,
    #[error("model head does not fit the task: {0}")]
    HeadMismatch(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Net(#[from] NetError),
}
