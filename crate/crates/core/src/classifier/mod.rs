//! Modality classifier: residual backbone + modality attention + linear
//! head, trained with a class-weighted, confidence-masked semi-supervised
//! objective.

pub mod augment;
pub mod backbone;
pub mod checkpoint;
pub mod model;
pub mod ssl;
pub mod train;

pub use augment::{augment, AugmentParams, AugmentationKind, AugmentationPolicy, Transform};
pub use backbone::{BackboneConfig, FeatureExtractor};
pub use checkpoint::{predict, Checkpoint, CheckpointConfig, ModalityClassifier};
pub use model::{build_model, ModalityModel, ModalityPrediction, ModelConfig};
pub use ssl::{compute_class_weights, pseudo_label, pseudo_label_probs, ssl_loss, ssl_objective, SslLoss, SslObjective};
pub use train::{accuracy, train, train_supervised, EpochLog, SslConfig, TrainOutcome};
