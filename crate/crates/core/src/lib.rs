//! Multi-label concept detection toolkit.
//!
//! The crate covers the full path from labelled samples to a submission file:
//!
//! - [`label_space`]: concept vocabulary, multi one-hot encoding, label statistics.
//! - [`metrics`]: thresholding and the sample-averaged F1 score.
//! - [`losses`]: binary cross-entropy, soft-F1 and their product/sum combinations,
//!   each with an analytic gradient w.r.t. the predicted probabilities.
//! - [`model`]: a dense classification head with dropout and sigmoid outputs.
//! - [`training`]: NAdam, horizontal-flip augmentation, plateau LR reduction and
//!   F1-monitored early stopping.
//! - [`pipeline`]: dataset ingestion, concepts/submission files, checkpoints, reports.

pub mod error;
pub mod gradcheck;
pub mod label_space;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
pub use label_space::{
    build_vocabulary, Category, ConceptId, Dataset, LabelVocabulary, LabeledSample, MultiHotVector,
};
pub use losses::{LossKind, LossOutput, LossSpec};
pub use metrics::{mean_f1, sample_f1, threshold_predictions, PredictionVector, SampleScore};
pub use model::{FeatureData, HeadConfig, Mode, ModelParams};
pub use training::{EpochRecord, TrainingConfig};
