//! Speech eavesdropping through a smartphone accelerometer, at desk scale.
//!
//! The crate covers the whole analysis chain: synthesizing accelerometer
//! traces from loudspeaker audio ([`synth`]), reading and trimming recorded
//! traces ([`trace`]), locating speech ([`segment`]), computing
//! time-frequency and cepstral features ([`features`]), and training and
//! evaluating classifiers for gender, speaker and word recognition
//! ([`learn`]).

pub mod corpus;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod features;
pub mod learn;
pub mod segment;
pub mod stats;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
