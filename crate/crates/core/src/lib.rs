//! Long-term single-object tracking built from two stages.
//!
//! *Perusal* examines one local search region: a correlation regressor
//! proposes boxes and an embedding verifier scores each against the
//! first-frame template. When the best confidence falls below a threshold the
//! target is reported absent and the next frame runs a global search, in
//! which a cheap *skimming* scorer keeps only the top-K sliding windows for
//! perusal.
//!
//! The crate also ships an embedding trainer (triplet loss with cascaded hard
//! example mining), a synthetic long-term benchmark generator, and the
//! VOT-LT and OxUvA evaluation protocols.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blob;
pub mod cli;
pub mod embed;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod media;
pub mod perusal;
pub mod pipeline;
pub mod rng;
pub mod sequence;
pub mod skimming;
pub mod synth;
pub mod trace;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{iou, search_region_for, BBox, Region};
pub use sequence::{GroundTruth, Sequence};
pub use trace::{PredictionTrace, TraceRecord};
pub use tracker::{run_sequence, Models, Tracker, TrackerConfig, Variant};
