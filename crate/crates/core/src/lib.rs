//! Speech-to-motion coupling analysis for dyadic conversation recordings.
//!
//! The pipeline ingests audio, motion-capture markers, transcript intervals
//! and frame-level emotion annotations, extracts speech features, aligns
//! everything on a common frame grid, and measures how well an affine map
//! from speech to regional motion activeness explains the motion.

pub mod error;
pub mod ingest;
pub mod coupling;
pub mod motion;
pub mod speech;
pub mod stats;
pub mod synth;
pub mod timeline;
pub mod track;

pub use error::{Error, ErrorKind, Result};
pub use track::{FeatureTrack, FrameGrid, DROPOUT};
