//! Mesh autoencoder: graph-convolutional encoder and decoder assembled over
//! a mesh hierarchy, with training, checkpoints, and synthetic data.

mod config;
mod net;
mod synthetic;
mod train;

pub use config::{basic_config, ConvType, ModelConfig, TrainingVariant};
pub use net::{
    transforms_from_positions, DecoderOutput, ModelSession, DEFAULT_ORDER, REFINE_ORDER,
};
pub use synthetic::{generate_node_fields, push_through_deformation, SyntheticSpec};
pub use train::{train, write_loss_csv, TrainOptions, TrainOutcome, TrainRecord};

use std::path::PathBuf;

use thiserror::Error;

use crate::edl::EdlError;
use crate::hierarchy::HierarchyError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("non-finite loss {loss} at step {step} (epoch {epoch}); aborting")]
    NonFiniteLoss {
        step: usize,
        epoch: usize,
        loss: f64,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Edl(#[from] EdlError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("io error at {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl ModelError {
    pub(crate) fn shape(
        what: &'static str,
        expected: impl std::fmt::Display,
        got: impl std::fmt::Display,
    ) -> Self {
        ModelError::Shape {
            what,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
