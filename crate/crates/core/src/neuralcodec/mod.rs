//! Trainable channel encoder/decoder.
//!
//! Both are small dense networks with hand-written forward and backward
//! passes. The encoder maps semantic features to `2 * symbol_budget` reals
//! (paired into complex symbols downstream); the decoder maps received
//! reals back to features. Training minimises the per-feature MSE through
//! the encoder, the power-normalised channel and the decoder.

mod checkpoint;
mod graph;
mod network;
mod optim;
mod train;

use thiserror::Error;

use crate::channelsim::ChannelError;
use crate::semcodec::{CodecError, SemanticFeatures};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION,
};
pub use graph::{mse_grad, mse_loss, LossGraph};
pub use network::{Activation, DenseLayer, DenseNetwork, Gradients, NetShape, Trace};
pub use optim::{Optimizer, OptimizerKind};
pub use train::{
    evaluate, extract_corpus_features, train, EpochStats, SnrPolicy, TrainConfig, TrainReport,
    Trained,
};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dim { expected: usize, actual: usize },
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("backward called before forward")]
    NotForwarded,
    #[error("training corpus has no usable segments")]
    EmptyCorpus,
    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Channel encoder forward pass.
pub fn encode(f: &SemanticFeatures, encoder: &DenseNetwork) -> Result<Vec<f64>, NetError> {
    encoder.forward(&f.values)
}

/// Channel decoder forward pass for segment `index`, whose intermediate
/// features span `frames` frames covering `source_len` samples.
pub fn decode(
    y: &[f64],
    decoder: &DenseNetwork,
    index: u64,
    frames: usize,
    source_len: usize,
) -> Result<SemanticFeatures, NetError> {
    Ok(SemanticFeatures {
        index,
        values: decoder.forward(y)?,
        frames,
        source_len,
    })
}
