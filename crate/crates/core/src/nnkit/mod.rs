//! Small dense neural-network kit with exact analytic gradients.
//!
//! Everything is `f64`. Parameter vectors use a canonical flat layout: per
//! layer the weight matrix row-major then the bias, layers in forward order,
//! and for composite models the blocks in the order audio encoder, visual
//! encoder, audio head, fusion head (skipping absent blocks).

pub mod dense;
pub mod grad;
pub mod gradcheck;
pub mod loss;
pub mod matrix;
pub mod model;

pub use dense::{Activation, DenseNet, Layer};
pub use grad::{grad_ce, grad_distill, predict_proba, sgd_step, DistillWeights, LossGrad};
pub use loss::{cross_entropy, kl_div, log_softmax, softmax, temper, PROB_FLOOR};
pub use matrix::Matrix;
pub use model::{forward_audio, forward_multimodal, AudioModel, Model, MultimodalModel, Topology, UnimodalModel};
