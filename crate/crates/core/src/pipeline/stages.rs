//! The four processing roles. Each consumes decoded messages and produces
//! the message for the next hop, so the same code runs in-process and
//! behind sockets.

use std::path::Path;

use super::PipelineError;
use crate::channelsim::{demap, map_to_symbols, segment_rng, transmit, ChannelConfig};
use crate::neuralcodec::{self, load_checkpoint, DenseNetwork, NetError};
use crate::segmenter::SpeechSegment;
use crate::semcodec::{ReferenceCodec, SemanticModel, SpeechCodec};
use crate::transport::{FeatureFrame, LinkFrame, Message, MetaFrame};

/// Channel encoder and decoder used by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelCodec {
    pub encoder: DenseNetwork,
    pub decoder: DenseNetwork,
}

impl ChannelCodec {
    /// Pass-through networks: the wireless hop carries the semantic
    /// features themselves.
    pub fn identity(semantic_dim: usize) -> Self {
        Self {
            encoder: DenseNetwork::identity(semantic_dim),
            decoder: DenseNetwork::identity(semantic_dim),
        }
    }

    /// Reads an encoder/decoder pair from a checkpoint.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let mut nets = load_checkpoint(path)?;
        if nets.len() != 2 {
            return Err(NetError::Checkpoint(format!("expected 2 networks, found {}", nets.len())).into());
        }
        let decoder = nets.pop().expect("two networks");
        let encoder = nets.pop().expect("two networks");
        Ok(Self { encoder, decoder })
    }

    pub fn check_dims(&self, semantic_dim: usize) -> Result<(), PipelineError> {
        let mismatch = |what: &str, expected: usize, actual: usize| {
            Err(PipelineError::Config(format!(
                "channel codec {what} is {actual}, codec expects {expected}"
            )))
        };
        if self.encoder.input_dim() != semantic_dim {
            return mismatch("encoder input", semantic_dim, self.encoder.input_dim());
        }
        if self.decoder.output_dim() != semantic_dim {
            return mismatch("decoder output", semantic_dim, self.decoder.output_dim());
        }
        if self.decoder.input_dim() != self.encoder.output_dim() {
            return mismatch("decoder input", self.encoder.output_dim(), self.decoder.input_dim());
        }
        Ok(())
    }
}

/// Device side, capture end: compresses each segment for upload.
#[derive(Debug, Clone)]
pub struct DeviceTx {
    codec: ReferenceCodec,
}

impl DeviceTx {
    pub fn new(codec: ReferenceCodec) -> Self {
        Self { codec }
    }

    /// SEGMENT_META followed, for non-silent segments, by UPLOAD_FEATURES.
    pub fn messages(&self, seg: &SpeechSegment) -> Result<Vec<Message>, PipelineError> {
        let mut out = vec![Message::SegmentMeta(MetaFrame::from_meta(&seg.meta())?)];
        if !seg.silent {
            let p = self.codec.compress(seg.index, &seg.samples)?;
            out.push(Message::UploadFeatures(FeatureFrame::from_features(&p)?));
        }
        Ok(out)
    }
}

/// First edge server: semantic extraction, channel encoding and the
/// impaired wireless hop.
#[derive(Debug, Clone)]
pub struct EdgeA {
    codec: ReferenceCodec,
    encoder: DenseNetwork,
    channel: ChannelConfig,
    deep_fades: usize,
}

impl EdgeA {
    pub fn new(codec: ReferenceCodec, encoder: DenseNetwork, channel: ChannelConfig) -> Self {
        Self {
            codec,
            encoder,
            channel,
            deep_fades: 0,
        }
    }

    pub fn deep_fades(&self) -> usize {
        self.deep_fades
    }

    pub fn link(&mut self, up: &FeatureFrame) -> Result<LinkFrame, PipelineError> {
        let p = up.to_features();
        let f = self.codec.extract_semantics(&p)?;
        let x = neuralcodec::encode(&f, &self.encoder)?;
        let symbols = map_to_symbols(&x)?;
        let mut rng = segment_rng(self.channel.seed, up.t);
        let rx = transmit(&symbols, &self.channel, &mut rng)?;
        self.deep_fades += rx.deep_fade as usize;
        Ok(LinkFrame::from_symbols(up.t, f.frames, f.source_len, &rx.symbols, rx.deep_fade)?)
    }
}

/// Second edge server: channel decoding and translation.
#[derive(Debug, Clone)]
pub struct EdgeB {
    codec: ReferenceCodec,
    decoder: DenseNetwork,
}

impl EdgeB {
    pub fn new(codec: ReferenceCodec, decoder: DenseNetwork) -> Self {
        Self { codec, decoder }
    }

    pub fn download(&self, link: &LinkFrame) -> Result<FeatureFrame, PipelineError> {
        let y = demap(&link.to_symbols());
        let f = neuralcodec::decode(&y, &self.decoder, link.t, link.frames as usize, link.source_len as usize)?;
        let p = self.codec.translate_semantics(&f)?;
        Ok(FeatureFrame::from_features(&p)?)
    }
}

/// Device side, playback end: predicts speech from downloaded features.
#[derive(Debug, Clone)]
pub struct DeviceRx {
    codec: ReferenceCodec,
}

impl DeviceRx {
    pub fn new(codec: ReferenceCodec) -> Self {
        Self { codec }
    }

    pub fn predict(&self, down: &FeatureFrame) -> Result<Vec<f64>, PipelineError> {
        Ok(self.codec.predict_speech(&down.to_features())?)
    }
}

/// Maps one upstream message to what is forwarded downstream.
pub trait Relay {
    fn relay(&mut self, m: &Message) -> Result<Message, PipelineError>;
}

impl Relay for EdgeA {
    fn relay(&mut self, m: &Message) -> Result<Message, PipelineError> {
        match m {
            Message::UploadFeatures(up) => Ok(Message::LinkSymbols(self.link(up)?)),
            Message::SegmentMeta(_) | Message::Eos => Ok(m.clone()),
            other => Err(PipelineError::Unexpected(other.name())),
        }
    }
}

impl Relay for EdgeB {
    fn relay(&mut self, m: &Message) -> Result<Message, PipelineError> {
        match m {
            Message::LinkSymbols(l) => Ok(Message::DownloadFeatures(self.download(l)?)),
            Message::SegmentMeta(_) | Message::Eos => Ok(m.clone()),
            other => Err(PipelineError::Unexpected(other.name())),
        }
    }
}
