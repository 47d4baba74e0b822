//! Gaze-guided spatio-temporal attention for video gesture recognition.
//!
//! The crate covers the full pipeline: parsing annotated trials and gaze
//! tracks, building sliding-window clips and leave-one-user-out folds,
//! rendering gaze supervision heatmaps, an inflated 3D classifier with a
//! gaze-supervised attention module, SGD training with checkpointing, and
//! frame accuracy / F1 / edit-score evaluation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod backbone;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod gaze_supervision;
pub mod kv;
pub mod nn;
pub mod real;
pub mod training;

pub use error::{Error, Result};
pub use real::{DType, Real};
