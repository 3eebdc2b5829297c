//! Simulator for federated learning over clients with heterogeneous sensor
//! modalities (audio-only vs. audio+visual).
//!
//! The main pipeline trains a late-fusion audio-visual model with
//! modality-aware aggregation, then distills it into an audio-only student on
//! the multimodal clients. The baseline strategies share the same engine so
//! their results are directly comparable.

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod flcore;
pub mod metrics;
pub mod nnkit;
pub mod rng;

pub use error::{Error, FieldError, Result};
