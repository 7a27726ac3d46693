//! Streaming speech semantic communication over simulated wireless links.
//!
//! The crate is organised along the processing chain:
//!
//! - [`audio`]: PCM loading, test signal synthesis and RMS envelopes.
//! - [`segmenter`]: fixed and slope-driven dynamic segmentation of a stream.
//! - [`semcodec`]: the device-side compressor/predictor and the edge-side
//!   semantic model, with an exactly invertible reference implementation.
//! - [`channelsim`]: symbol mapping plus AWGN / block Rayleigh channels.
//! - [`neuralcodec`]: dense channel encoder/decoder, backprop and training.
//! - [`transport`]: the framed wire protocol linking device and edge roles.
//! - [`pipeline`]: the two-stage streaming runtime and latency accounting.

pub mod audio;
pub mod channelsim;
pub mod neuralcodec;
pub mod pipeline;
pub mod segmenter;
pub mod semcodec;
pub mod transport;

mod error;

pub use error::{Error, Result};
