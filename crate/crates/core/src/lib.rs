//! Orientation-agnostic gait event detection from a single smartphone IMU.
//!
//! The pipeline runs ingest, orientation estimation, segmentation into gait
//! bouts, anatomical frame estimation, and adaptive wavelet step detection.
//! `evaluate` scores detections against reference events, `factors` fits a
//! Bayesian beta regression of per-trial F1 scores, and `synth` generates
//! recordings with known ground truth.
// `!(x > 0.0)` style checks reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dsp;
pub mod error;
pub mod evaluate;
pub mod factors;
pub mod events;
pub mod frame;
pub mod ingest;
pub mod orientation;
pub mod pipeline;
pub mod segmentation;
pub mod stats;
pub mod stepdetect;
pub mod synth;

pub use error::{Error, Result};
pub use events::{EventKind, GaitEvent, Side};
pub use ingest::ImuRecording;
