//! Convolutional-network engine and transfer-learning harness for winter
//! road surface condition classification.
//!
//! The crate covers the numeric core ([`tensor`], [`layers`]), VGG-style
//! network assembly and weight archives ([`network`]), the pre-train /
//! freeze / fine-tune procedure ([`training`]), image ingestion and the
//! synthetic road-image generator ([`data`]), confusion-matrix metrics
//! ([`metrics`]) and the experiment harness ([`experiments`]).

pub mod data;
pub mod error;
pub mod experiments;
pub mod layers;
pub mod metrics;
pub mod network;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{SeededRng, Tensor};
