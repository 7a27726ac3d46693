//! Frame and message codec.
//!
//! Frame header (10 bytes):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "LSSC"
//! 4       1     protocol version (1)
//! 5       1     message type
//! 6       4     payload length, u32 big-endian, at most 64 MiB
//! 10      n     payload
//! ```
//!
//! Inside payloads every scalar is little-endian. A tensor is written as
//! a rank byte, `rank` u32 dims, then the binary32 values in row-major
//! order.

use thiserror::Error;

use crate::channelsim::{ChannelConfig, ChannelKind, ComplexSymbols};
use crate::segmenter::SegmentMeta;
use crate::semcodec::{CodecSpec, IntermediateFeatures, Translator};

pub const MAGIC: &[u8; 4] = b"LSSC";
pub const PROTOCOL_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
pub const MAX_PAYLOAD: usize = 64 << 20;
const MAX_RANK: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("bad frame magic")]
    BadMagic,
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("tensor dims declare {declared} values but {actual} are present")]
    DimMismatch { declared: usize, actual: usize },
    #[error("payload of {0} bytes exceeds the frame cap")]
    Oversized(usize),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("malformed payload: {0}")]
    Malformed(&'static str),
}

impl WireError {
    /// Stable numeric code, also used in ERROR frames.
    pub fn code(&self) -> u16 {
        match self {
            Self::BadMagic => 1,
            Self::UnsupportedVersion(_) => 2,
            Self::Truncated { .. } => 3,
            Self::DimMismatch { .. } => 4,
            Self::Oversized(_) => 5,
            Self::UnknownType(_) => 6,
            Self::Malformed(_) => 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    DeviceTx,
    EdgeA,
    EdgeB,
    DeviceRx,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::DeviceTx, Role::EdgeA, Role::EdgeB, Role::DeviceRx];

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::DeviceTx => "device_tx",
            Self::EdgeA => "edge_a",
            Self::EdgeB => "edge_b",
            Self::DeviceRx => "device_rx",
        }
    }

    /// The role this one receives segments from.
    pub fn upstream(self) -> Option<Role> {
        match self {
            Self::DeviceTx => None,
            Self::EdgeA => Some(Self::DeviceTx),
            Self::EdgeB => Some(Self::EdgeA),
            Self::DeviceRx => Some(Self::EdgeB),
        }
    }

    pub fn downstream(self) -> Option<Role> {
        match self {
            Self::DeviceTx => Some(Self::EdgeA),
            Self::EdgeA => Some(Self::EdgeB),
            Self::EdgeB => Some(Self::DeviceRx),
            Self::DeviceRx => None,
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown role `{s}`"))
    }
}

/// Row-major binary32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub values: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<u32>, values: Vec<f32>) -> Result<Self, WireError> {
        let declared = element_count(&dims).ok_or(WireError::Malformed("tensor too large"))?;
        if declared != values.len() {
            return Err(WireError::DimMismatch {
                declared,
                actual: values.len(),
            });
        }
        if dims.len() > MAX_RANK as usize {
            return Err(WireError::Malformed("tensor rank"));
        }
        Ok(Self { dims, values })
    }

    pub fn from_f64(dims: Vec<u32>, values: &[f64]) -> Result<Self, WireError> {
        Self::new(dims, values.iter().map(|v| *v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| *v as f64).collect()
    }
}

fn element_count(dims: &[u32]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, d| acc.checked_mul(*d as usize))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hello {
    pub version: u8,
    pub role: Role,
    pub codec_digest: u64,
}

/// Settings every endpoint of a run must agree on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionConfig {
    pub channel: ChannelConfig,
    pub codec: CodecSpec,
    pub sample_rate: u32,
}

/// Intermediate features on the wire: a `frames x coeffs_kept` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub t: u64,
    pub frame_len: u32,
    pub source_len: u32,
    pub coeffs: Tensor,
}

impl FeatureFrame {
    pub fn from_features(p: &IntermediateFeatures) -> Result<Self, WireError> {
        let frames = p.frames();
        Ok(Self {
            t: p.index,
            frame_len: to_u32(p.frame_len)?,
            source_len: to_u32(p.source_len)?,
            coeffs: Tensor::from_f64(vec![to_u32(frames)?, to_u32(p.coeffs_kept)?], &p.data)?,
        })
    }

    pub fn to_features(&self) -> IntermediateFeatures {
        IntermediateFeatures {
            index: self.t,
            frame_len: self.frame_len as usize,
            coeffs_kept: self.coeffs.dims[1] as usize,
            source_len: self.source_len as usize,
            data: self.coeffs.to_f64(),
        }
    }
}

/// Received symbols of the wireless hop, as a `count x 2` (re, im) tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkFrame {
    pub t: u64,
    /// Intermediate-feature frame count of the source segment.
    pub frames: u32,
    pub source_len: u32,
    pub power_scale: f64,
    pub padded: bool,
    pub deep_fade: bool,
    pub symbols: Tensor,
}

impl LinkFrame {
    pub fn from_symbols(
        t: u64,
        frames: usize,
        source_len: usize,
        s: &ComplexSymbols,
        deep_fade: bool,
    ) -> Result<Self, WireError> {
        let interleaved: Vec<f64> = s.re.iter().zip(&s.im).flat_map(|(a, b)| [*a, *b]).collect();
        Ok(Self {
            t,
            frames: to_u32(frames)?,
            source_len: to_u32(source_len)?,
            power_scale: s.power_scale,
            padded: s.padded,
            deep_fade,
            symbols: Tensor::from_f64(vec![to_u32(s.len())?, 2], &interleaved)?,
        })
    }

    pub fn to_symbols(&self) -> ComplexSymbols {
        let v = self.symbols.to_f64();
        ComplexSymbols {
            re: v.iter().step_by(2).copied().collect(),
            im: v.iter().skip(1).step_by(2).copied().collect(),
            power_scale: self.power_scale,
            padded: self.padded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaFrame {
    pub t: u64,
    pub duration: f64,
    pub capture_start: f64,
    pub slope: f64,
    pub silent: bool,
    pub samples: u32,
}

impl MetaFrame {
    pub fn from_meta(m: &SegmentMeta) -> Result<Self, WireError> {
        Ok(Self {
            t: m.index,
            duration: m.duration,
            capture_start: m.capture_start,
            slope: m.slope,
            silent: m.silent,
            samples: to_u32(m.samples)?,
        })
    }

    pub fn to_meta(&self) -> SegmentMeta {
        SegmentMeta {
            index: self.t,
            capture_start: self.capture_start,
            duration: self.duration,
            slope: self.slope,
            silent: self.silent,
            samples: self.samples as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello(Hello),
    Config(SessionConfig),
    UploadFeatures(FeatureFrame),
    LinkSymbols(LinkFrame),
    DownloadFeatures(FeatureFrame),
    SegmentMeta(MetaFrame),
    Eos,
    Error { code: u16, text: String },
}

pub mod msg_type {
    pub const HELLO: u8 = 0x01;
    pub const CONFIG: u8 = 0x02;
    pub const UPLOAD_FEATURES: u8 = 0x03;
    pub const LINK_SYMBOLS: u8 = 0x04;
    pub const DOWNLOAD_FEATURES: u8 = 0x05;
    pub const SEGMENT_META: u8 = 0x06;
    pub const EOS: u8 = 0x07;
    pub const ERROR: u8 = 0x08;
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        use msg_type::*;
        match self {
            Self::Hello(_) => HELLO,
            Self::Config(_) => CONFIG,
            Self::UploadFeatures(_) => UPLOAD_FEATURES,
            Self::LinkSymbols(_) => LINK_SYMBOLS,
            Self::DownloadFeatures(_) => DOWNLOAD_FEATURES,
            Self::SegmentMeta(_) => SEGMENT_META,
            Self::Eos => EOS,
            Self::Error { .. } => ERROR,
        }
    }

    /// Segment index carried by per-segment messages.
    pub fn segment_index(&self) -> Option<u64> {
        match self {
            Self::UploadFeatures(f) | Self::DownloadFeatures(f) => Some(f.t),
            Self::LinkSymbols(l) => Some(l.t),
            Self::SegmentMeta(m) => Some(m.t),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Hello(_) => "HELLO",
            Self::Config(_) => "CONFIG",
            Self::UploadFeatures(_) => "UPLOAD_FEATURES",
            Self::LinkSymbols(_) => "LINK_SYMBOLS",
            Self::DownloadFeatures(_) => "DOWNLOAD_FEATURES",
            Self::SegmentMeta(_) => "SEGMENT_META",
            Self::Eos => "EOS",
            Self::Error { .. } => "ERROR",
        }
    }
}

fn to_u32(v: usize) -> Result<u32, WireError> {
    u32::try_from(v).map_err(|_| WireError::Malformed("value exceeds u32"))
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn bool(&mut self, v: bool) {
        self.0.push(v as u8);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn tensor(&mut self, t: &Tensor) {
        self.u8(t.dims.len() as u8);
        for d in &t.dims {
            self.u32(*d);
        }
        for v in &t.values {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn features(&mut self, f: &FeatureFrame) {
        self.u64(f.t);
        self.u32(f.frame_len);
        self.u32(f.source_len);
        self.tensor(&f.coeffs);
    }
}

fn channel_kind_code(k: ChannelKind) -> u8 {
    match k {
        ChannelKind::Clean => 0,
        ChannelKind::Awgn => 1,
        ChannelKind::Rayleigh => 2,
    }
}

fn encode_payload(m: &Message) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    match m {
        Message::Hello(h) => {
            w.u8(h.version);
            w.u8(h.role.code());
            w.u64(h.codec_digest);
        }
        Message::Config(c) => {
            w.u8(channel_kind_code(c.channel.kind));
            w.f64(c.channel.snr_db);
            w.bool(c.channel.equalize);
            w.u64(c.channel.seed);
            for dim in [c.codec.frame_len, c.codec.coeffs_kept, c.codec.semantic_dim, c.codec.span_frames] {
                w.u64(dim as u64);
            }
            w.u64(c.codec.projection_seed);
            match c.codec.translator {
                Translator::Identity => {
                    w.u8(0);
                    w.u64(0);
                }
                Translator::Permutation { seed } => {
                    w.u8(1);
                    w.u64(seed);
                }
            }
            w.u32(c.sample_rate);
        }
        Message::UploadFeatures(f) | Message::DownloadFeatures(f) => w.features(f),
        Message::LinkSymbols(l) => {
            w.u64(l.t);
            w.u32(l.frames);
            w.u32(l.source_len);
            w.f64(l.power_scale);
            w.bool(l.padded);
            w.bool(l.deep_fade);
            w.tensor(&l.symbols);
        }
        Message::SegmentMeta(s) => {
            w.u64(s.t);
            w.f64(s.duration);
            w.f64(s.capture_start);
            w.f64(s.slope);
            w.bool(s.silent);
            w.u32(s.samples);
        }
        Message::Eos => {}
        Message::Error { code, text } => {
            w.u16(*code);
            w.u32(text.len() as u32);
            w.0.extend_from_slice(text.as_bytes());
        }
    }
    w.0
}

/// Serializes `m` into one complete frame.
pub fn encode_message(m: &Message) -> Result<Vec<u8>, WireError> {
    let payload = encode_payload(m);
    if payload.len() > MAX_PAYLOAD {
        return Err(WireError::Oversized(payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.push(PROTOCOL_VERSION);
    out.push(m.msg_type());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Validated frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub msg_type: u8,
    pub payload_len: usize,
}

pub fn parse_header(bytes: &[u8]) -> Result<FrameHeader, WireError> {
    if bytes.len() < HEADER_LEN {
        // judge the magic on whatever prefix is present
        if !MAGIC.starts_with(&bytes[..bytes.len().min(4)]) {
            return Err(WireError::BadMagic);
        }
        return Err(WireError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(WireError::BadMagic);
    }
    if bytes[4] != PROTOCOL_VERSION {
        return Err(WireError::UnsupportedVersion(bytes[4]));
    }
    let msg_type = bytes[5];
    if !(msg_type::HELLO..=msg_type::ERROR).contains(&msg_type) {
        return Err(WireError::UnknownType(msg_type));
    }
    let payload_len = u32::from_be_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    if payload_len > MAX_PAYLOAD {
        return Err(WireError::Oversized(payload_len));
    }
    Ok(FrameHeader { msg_type, payload_len })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(WireError::Truncated {
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }
    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }
    fn bool(&mut self) -> Result<bool, WireError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(WireError::Malformed("boolean byte")),
        }
    }
    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn usize(&mut self) -> Result<usize, WireError> {
        usize::try_from(self.u64()?).map_err(|_| WireError::Malformed("dimension exceeds usize"))
    }
    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn tensor(&mut self, rank: u8) -> Result<Tensor, WireError> {
        let got = self.u8()?;
        if got != rank {
            return Err(WireError::Malformed("tensor rank"));
        }
        let dims = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>, _>>()?;
        let remaining = self.bytes.len() - self.pos;
        let declared = element_count(&dims).ok_or(WireError::Malformed("tensor too large"))?;
        if declared.checked_mul(4) != Some(remaining) {
            return Err(WireError::DimMismatch {
                declared,
                actual: remaining / 4,
            });
        }
        let values = self
            .take(remaining)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Tensor { dims, values })
    }
    fn features(&mut self) -> Result<FeatureFrame, WireError> {
        let t = self.u64()?;
        let frame_len = self.u32()?;
        let source_len = self.u32()?;
        let coeffs = self.tensor(2)?;
        Ok(FeatureFrame {
            t,
            frame_len,
            source_len,
            coeffs,
        })
    }
    fn finish(&self) -> Result<(), WireError> {
        if self.pos != self.bytes.len() {
            return Err(WireError::Malformed("trailing payload bytes"));
        }
        Ok(())
    }
}

fn decode_payload(msg_type: u8, payload: &[u8]) -> Result<Message, WireError> {
    let mut r = Reader { bytes: payload, pos: 0 };
    let m = match msg_type {
        msg_type::HELLO => Message::Hello(Hello {
            version: r.u8()?,
            role: Role::from_code(r.u8()?).ok_or(WireError::Malformed("role"))?,
            codec_digest: r.u64()?,
        }),
        msg_type::CONFIG => {
            let kind = match r.u8()? {
                0 => ChannelKind::Clean,
                1 => ChannelKind::Awgn,
                2 => ChannelKind::Rayleigh,
                _ => return Err(WireError::Malformed("channel kind")),
            };
            let channel = ChannelConfig {
                kind,
                snr_db: r.f64()?,
                equalize: r.bool()?,
                seed: r.u64()?,
            };
            let frame_len = r.usize()?;
            let coeffs_kept = r.usize()?;
            let semantic_dim = r.usize()?;
            let span_frames = r.usize()?;
            let projection_seed = r.u64()?;
            let translator = match (r.u8()?, r.u64()?) {
                (0, 0) => Translator::Identity,
                (1, seed) => Translator::Permutation { seed },
                _ => return Err(WireError::Malformed("translator")),
            };
            Message::Config(SessionConfig {
                channel,
                codec: CodecSpec {
                    frame_len,
                    coeffs_kept,
                    semantic_dim,
                    span_frames,
                    projection_seed,
                    translator,
                },
                sample_rate: r.u32()?,
            })
        }
        msg_type::UPLOAD_FEATURES => Message::UploadFeatures(r.features()?),
        msg_type::DOWNLOAD_FEATURES => Message::DownloadFeatures(r.features()?),
        msg_type::LINK_SYMBOLS => {
            let t = r.u64()?;
            let frames = r.u32()?;
            let source_len = r.u32()?;
            let power_scale = r.f64()?;
            let padded = r.bool()?;
            let deep_fade = r.bool()?;
            let symbols = r.tensor(2)?;
            if symbols.dims[1] != 2 {
                return Err(WireError::Malformed("symbol tensor must be count x 2"));
            }
            Message::LinkSymbols(LinkFrame {
                t,
                frames,
                source_len,
                power_scale,
                padded,
                deep_fade,
                symbols,
            })
        }
        msg_type::SEGMENT_META => Message::SegmentMeta(MetaFrame {
            t: r.u64()?,
            duration: r.f64()?,
            capture_start: r.f64()?,
            slope: r.f64()?,
            silent: r.bool()?,
            samples: r.u32()?,
        }),
        msg_type::EOS => Message::Eos,
        msg_type::ERROR => {
            let code = r.u16()?;
            let len = r.u32()? as usize;
            let text = std::str::from_utf8(r.take(len)?)
                .map_err(|_| WireError::Malformed("error text is not UTF-8"))?
                .to_owned();
            Message::Error { code, text }
        }
        other => return Err(WireError::UnknownType(other)),
    };
    r.finish()?;
    Ok(m)
}

/// Decodes the frame at the start of `bytes`, returning it with the number
/// of bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(Message, usize), WireError> {
    let header = parse_header(bytes)?;
    let end = HEADER_LEN + header.payload_len;
    if bytes.len() < end {
        return Err(WireError::Truncated {
            needed: end,
            available: bytes.len(),
        });
    }
    let m = decode_payload(header.msg_type, &bytes[HEADER_LEN..end])?;
    Ok((m, end))
}

/// Decodes exactly one frame; trailing bytes are rejected.
pub fn decode_message(bytes: &[u8]) -> Result<Message, WireError> {
    let (m, used) = decode_frame(bytes)?;
    if used != bytes.len() {
        return Err(WireError::Malformed("bytes after frame end"));
    }
    Ok(m)
}

/// Decodes a payload whose header has already been read and validated.
pub fn decode_body(header: FrameHeader, payload: &[u8]) -> Result<Message, WireError> {
    if payload.len() != header.payload_len {
        return Err(WireError::Truncated {
            needed: header.payload_len,
            available: payload.len(),
        });
    }
    decode_payload(header.msg_type, payload)
}
