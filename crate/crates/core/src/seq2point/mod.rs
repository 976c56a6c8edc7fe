//! The seq2point regressor: model assembly, training with early stopping,
//! full-series prediction, feature extraction and synthetic households.

mod model;
mod synth;
mod train;

pub use model::{default_architecture, stack, Seq2PointModel, DEFAULT_WINDOW};
pub use synth::{synthesize_household, ApplianceProfile, Household, SynthConfig};
pub use train::{evaluate_loss, fit, train, EpochRunner, TrainConfig, TrainHistory};
