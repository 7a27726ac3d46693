//! Device-side speech compressor/predictor and edge-side semantic model.
//!
//! [`SpeechCodec`] and [`SemanticModel`] are the seams where trained
//! models plug in. [`ReferenceCodec`] implements both with fixed linear
//! maps so every stage has an exact inverse:
//!
//! - compress: orthonormal DCT-II per `frame_len` frame, first `K` kept;
//! - extract: a seeded row-orthonormal `L x M` projection of the
//!   zero-padded, flattened coefficients (`M = span_frames * K`);
//! - translate: an optional coordinate permutation, then the transpose;
//! - predict: zero-fill to `frame_len`, inverse DCT, trim the padding.
//!
//! The layer shapes of a learned compressor (two 1-D convolutions, 128 and
//! 64 channels, ReLU) and predictor (two 1-D convolutions of 1280 channels
//! plus a single-unit dense output) are the reference architecture these
//! transforms stand in for; they are not trained here.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("invalid codec spec: {0}")]
    Spec(String),
    #[error("empty segment")]
    Empty,
    #[error("{frames} frames exceed the padded span of {span} frames")]
    SpanOverflow { frames: usize, span: usize },
    #[error("expected {expected} values, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("feature shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Translator {
    Identity,
    /// A fixed coordinate shuffle standing in for a language-pair mapping.
    Permutation { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecSpec {
    /// Samples per compressor frame.
    pub frame_len: usize,
    /// DCT coefficients kept per frame (`K`).
    pub coeffs_kept: usize,
    /// Semantic feature dimension (`L`).
    pub semantic_dim: usize,
    /// Frames in the padded span; must cover the longest segment.
    pub span_frames: usize,
    pub projection_seed: u64,
    pub translator: Translator,
}

impl Default for CodecSpec {
    fn default() -> Self {
        Self {
            frame_len: 320,
            coeffs_kept: 64,
            semantic_dim: 1024,
            // 0.85 s at 16 kHz in 320-sample frames
            span_frames: 43,
            projection_seed: 0x5eed,
            translator: Translator::Identity,
        }
    }
}

impl CodecSpec {
    /// Flattened intermediate size `M`.
    pub fn span_len(&self) -> usize {
        self.span_frames * self.coeffs_kept
    }

    /// Frames needed to cover `samples` samples.
    pub fn frames_for(&self, samples: usize) -> usize {
        samples.div_ceil(self.frame_len)
    }

    /// Sets `span_frames` to cover segments of up to `max_samples`.
    pub fn with_span_for(mut self, max_samples: usize) -> Self {
        self.span_frames = self.frames_for(max_samples).max(1);
        self
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        let fail = |m: String| Err(CodecError::Spec(m));
        if self.frame_len == 0 || self.coeffs_kept == 0 || self.span_frames == 0 {
            return fail("frame_len, coeffs_kept and span_frames must be positive".into());
        }
        if self.coeffs_kept > self.frame_len {
            return fail(format!(
                "coeffs_kept {} exceeds frame_len {}",
                self.coeffs_kept, self.frame_len
            ));
        }
        if self.semantic_dim == 0 || self.semantic_dim > self.span_len() {
            return fail(format!(
                "semantic_dim {} must lie in [1, {}]",
                self.semantic_dim,
                self.span_len()
            ));
        }
        Ok(())
    }

    /// Stable 64-bit digest of every field, exchanged during handshakes.
    pub fn digest(&self) -> u64 {
        let mut h = Sha256::new();
        for v in [
            self.frame_len as u64,
            self.coeffs_kept as u64,
            self.semantic_dim as u64,
            self.span_frames as u64,
            self.projection_seed,
        ] {
            h.update(v.to_le_bytes());
        }
        match self.translator {
            Translator::Identity => h.update([0u8]),
            Translator::Permutation { seed } => {
                h.update([1u8]);
                h.update(seed.to_le_bytes());
            }
        }
        let out = h.finalize();
        u64::from_le_bytes(out[..8].try_into().expect("sha256 is 32 bytes"))
    }
}

/// Per-frame transform coefficients, `frames x coeffs_kept`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IntermediateFeatures {
    pub index: u64,
    pub frame_len: usize,
    pub coeffs_kept: usize,
    /// Length of the source segment, used to trim final-frame padding.
    pub source_len: usize,
    pub data: Vec<f64>,
}

impl IntermediateFeatures {
    pub fn frames(&self) -> usize {
        self.data.len() / self.coeffs_kept.max(1)
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.coeffs_kept..(i + 1) * self.coeffs_kept]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticFeatures {
    pub index: u64,
    pub values: Vec<f64>,
    /// Frame count of the intermediate features these came from.
    pub frames: usize,
    pub source_len: usize,
}

/// Device-side stages.
pub trait SpeechCodec {
    fn compress(&self, index: u64, samples: &[f64]) -> Result<IntermediateFeatures, CodecError>;
    fn predict_speech(&self, features: &IntermediateFeatures) -> Result<Vec<f64>, CodecError>;
}

/// Edge-side stages of the large speech model.
pub trait SemanticModel {
    fn semantic_dim(&self) -> usize;
    fn extract_semantics(&self, p: &IntermediateFeatures) -> Result<SemanticFeatures, CodecError>;
    fn translate_semantics(&self, f: &SemanticFeatures) -> Result<IntermediateFeatures, CodecError>;
}

/// Orthonormal DCT-II basis, truncated to the first `rows` coefficients.
#[derive(Debug, Clone)]
struct DctBasis {
    len: usize,
    rows: usize,
    table: Vec<f64>,
}

impl DctBasis {
    fn new(len: usize, rows: usize) -> Self {
        let n = len as f64;
        let mut table = Vec::with_capacity(rows * len);
        for k in 0..rows {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for i in 0..len {
                let angle = std::f64::consts::PI * (i as f64 + 0.5) * k as f64 / n;
                table.push(scale * angle.cos());
            }
        }
        Self { len, rows, table }
    }

    fn forward(&self, frame: &[f64], out: &mut Vec<f64>) {
        for k in 0..self.rows {
            let row = &self.table[k * self.len..(k + 1) * self.len];
            out.push(row.iter().zip(frame).map(|(a, b)| a * b).sum());
        }
    }

    fn inverse(&self, coeffs: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (k, c) in coeffs.iter().enumerate().take(self.rows) {
            if *c == 0.0 {
                continue;
            }
            let row = &self.table[k * self.len..(k + 1) * self.len];
            for (o, b) in out.iter_mut().zip(row) {
                *o += c * b;
            }
        }
    }
}

/// Coordinate permutation: `apply(x)[i] = x[map[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn seeded(len: usize, seed: u64) -> Self {
        let mut map: Vec<usize> = (0..len).collect();
        map.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self { map }
    }

    pub fn inverse(&self) -> Self {
        let mut map = vec![0; self.map.len()];
        for (i, &j) in self.map.iter().enumerate() {
            map[j] = i;
        }
        Self { map }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.map.iter().map(|&j| x[j]).collect()
    }
}

#[derive(Debug)]
struct Inner {
    spec: CodecSpec,
    dct: DctBasis,
    /// `L x M`, row-major, orthonormal rows.
    projection: Vec<f64>,
    permutation: Option<Permutation>,
}

/// Deterministic, linear, exactly invertible (at `K = frame_len`, `L = M`)
/// stand-in for the trained speech models. Cheap to clone.
#[derive(Debug, Clone)]
pub struct ReferenceCodec {
    inner: Arc<Inner>,
}

impl ReferenceCodec {
    pub fn new(spec: CodecSpec) -> Result<Self, CodecError> {
        spec.validate()?;
        let projection = orthonormal_rows(spec.semantic_dim, spec.span_len(), spec.projection_seed);
        let permutation = match spec.translator {
            Translator::Identity => None,
            Translator::Permutation { seed } => Some(Permutation::seeded(spec.semantic_dim, seed)),
        };
        Ok(Self {
            inner: Arc::new(Inner {
                spec,
                dct: DctBasis::new(spec.frame_len, spec.coeffs_kept),
                projection,
                permutation,
            }),
        })
    }

    pub fn spec(&self) -> &CodecSpec {
        &self.inner.spec
    }

    /// The `L x M` projection matrix, row-major.
    pub fn projection(&self) -> &[f64] {
        &self.inner.projection
    }
}

/// QR of a seeded Gaussian `cols x rows` matrix; the thin Q transposed.
fn orthonormal_rows(rows: usize, cols: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = DMatrix::<f64>::from_fn(cols, rows, |_, _| StandardNormal.sample(&mut rng));
    let q = gaussian.qr().q();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        out.extend(q.column(r).iter());
    }
    out
}

impl SpeechCodec for ReferenceCodec {
    fn compress(&self, index: u64, samples: &[f64]) -> Result<IntermediateFeatures, CodecError> {
        if samples.is_empty() {
            return Err(CodecError::Empty);
        }
        let spec = &self.inner.spec;
        let frames = spec.frames_for(samples.len());
        let mut data = Vec::with_capacity(frames * spec.coeffs_kept);
        let mut padded = vec![0.0; spec.frame_len];
        for chunk in samples.chunks(spec.frame_len) {
            padded[..chunk.len()].copy_from_slice(chunk);
            padded[chunk.len()..].fill(0.0);
            self.inner.dct.forward(&padded, &mut data);
        }
        Ok(IntermediateFeatures {
            index,
            frame_len: spec.frame_len,
            coeffs_kept: spec.coeffs_kept,
            source_len: samples.len(),
            data,
        })
    }

    fn predict_speech(&self, p: &IntermediateFeatures) -> Result<Vec<f64>, CodecError> {
        let spec = &self.inner.spec;
        if p.frame_len != spec.frame_len || p.coeffs_kept != spec.coeffs_kept {
            return Err(CodecError::Shape(format!(
                "features are {}x{} per frame, codec expects {}x{}",
                p.frame_len, p.coeffs_kept, spec.frame_len, spec.coeffs_kept
            )));
        }
        if p.data.len() % p.coeffs_kept != 0 || p.frames() != spec.frames_for(p.source_len) {
            return Err(CodecError::Shape(format!(
                "{} values cannot hold {} samples",
                p.data.len(),
                p.source_len
            )));
        }
        let mut out = vec![0.0; p.frames() * spec.frame_len];
        for (i, frame) in out.chunks_mut(spec.frame_len).enumerate() {
            self.inner.dct.inverse(p.frame(i), frame);
        }
        out.truncate(p.source_len);
        Ok(out)
    }
}

impl SemanticModel for ReferenceCodec {
    fn semantic_dim(&self) -> usize {
        self.inner.spec.semantic_dim
    }

    fn extract_semantics(&self, p: &IntermediateFeatures) -> Result<SemanticFeatures, CodecError> {
        let spec = &self.inner.spec;
        if p.coeffs_kept != spec.coeffs_kept {
            return Err(CodecError::Shape(format!(
                "{} coefficients per frame, expected {}",
                p.coeffs_kept, spec.coeffs_kept
            )));
        }
        let frames = p.frames();
        if frames > spec.span_frames {
            return Err(CodecError::SpanOverflow {
                frames,
                span: spec.span_frames,
            });
        }
        let m = spec.span_len();
        // the zero padding contributes nothing, so only the used prefix of
        // each row is touched
        let used = p.data.len();
        let values = self
            .inner
            .projection
            .chunks(m)
            .map(|row| row[..used].iter().zip(&p.data).map(|(a, b)| a * b).sum())
            .collect();
        Ok(SemanticFeatures {
            index: p.index,
            values,
            frames,
            source_len: p.source_len,
        })
    }

    fn translate_semantics(&self, f: &SemanticFeatures) -> Result<IntermediateFeatures, CodecError> {
        let spec = &self.inner.spec;
        if f.values.len() != spec.semantic_dim {
            return Err(CodecError::Length {
                expected: spec.semantic_dim,
                actual: f.values.len(),
            });
        }
        if f.frames > spec.span_frames {
            return Err(CodecError::SpanOverflow {
                frames: f.frames,
                span: spec.span_frames,
            });
        }
        let translated;
        let values = match &self.inner.permutation {
            Some(perm) => {
                translated = perm.apply(&f.values);
                &translated
            }
            None => &f.values,
        };
        let m = spec.span_len();
        let used = f.frames * spec.coeffs_kept;
        let mut data = vec![0.0; used];
        for (row, v) in self.inner.projection.chunks(m).zip(values) {
            for (d, r) in data.iter_mut().zip(&row[..used]) {
                *d += v * r;
            }
        }
        Ok(IntermediateFeatures {
            index: f.index,
            frame_len: spec.frame_len,
            coeffs_kept: spec.coeffs_kept,
            source_len: f.source_len,
            data,
        })
    }
}
