//! Modality-aware, question-guided medical image captioning.
//!
//! The pipeline predicts the imaging modality with a semi-supervised
//! classifier, extracts the clinical focus of a free-text question, fuses
//! both into a prompt for a pluggable caption backend, and scores the
//! resulting caption without reference text.

pub mod attention;
pub mod caption;
pub mod classifier;
pub mod config;
pub mod data_io;
pub mod error;
pub mod evaluation;
pub mod modality;
pub mod nn;
pub mod prompt;
pub mod question;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result, Stage};
pub use modality::Modality;
