//! Fixed and dynamic segmentation of a sample stream.
//!
//! In dynamic mode the duration of segment `t + 1` is derived from the
//! amplitude slope `k` of segment `t`:
//!
//! ```text
//! d[t+1] = max(m, (1 - p e^k) d[t])        if k > 0
//!          min(n, (1 - q ln(k + 1)) d[t])  otherwise
//! ```
//!
//! Note the direction: a rising envelope (`k > 0`) *shortens* the next
//! segment and a falling one lengthens it, whatever a prose reading of the
//! idea might suggest. The formula is what is implemented.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, AudioBuffer, AudioError, Envelope, EnvelopeParams};

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("invalid segmenter config: {0}")]
    Config(String),
    #[error("slope estimate needs at least 2 envelope frames, got {0}")]
    TooFewFrames(usize),
    #[error("slope {0} outside the domain of ln(k + 1)")]
    SlopeDomain(f64),
    #[error("duration {0} must be positive")]
    Duration(f64),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentationMode {
    Fixed,
    Dynamic,
}

impl std::str::FromStr for SegmentationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "dynamic" => Ok(Self::Dynamic),
            other => Err(format!("unknown segmentation mode `{other}`")),
        }
    }
}

impl std::fmt::Display for SegmentationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Fixed => "fixed",
            Self::Dynamic => "dynamic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    /// Shrink rate applied when the slope is positive.
    pub p: f64,
    /// Growth rate applied when the slope is non-positive.
    pub q: f64,
    /// Lower duration bound, seconds.
    pub m: f64,
    /// Upper duration bound, seconds.
    pub n: f64,
    /// Duration of the first dynamic segment, seconds.
    pub d_init: f64,
    pub mode: SegmentationMode,
    pub fixed_duration: f64,
    /// Segments with RMS strictly below this are flagged silent.
    pub silence_rms: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub envelope: EnvelopeParams,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            p: 0.05,
            q: 0.05,
            m: 0.65,
            n: 0.85,
            d_init: 0.75,
            mode: SegmentationMode::Dynamic,
            fixed_duration: 0.80,
            silence_rms: 0.01,
            k_min: -0.99,
            k_max: 10.0,
            envelope: EnvelopeParams::default(),
        }
    }
}

impl SegmenterConfig {
    pub fn with_mode(mut self, mode: SegmentationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), SegmentError> {
        let fail = |msg: &str| Err(SegmentError::Config(msg.to_string()));
        if !(0.0 < self.m && self.m <= self.d_init && self.d_init <= self.n) {
            return fail("require 0 < m <= d_init <= n");
        }
        if !(self.p > 0.0 && self.p < 1.0 && self.q > 0.0 && self.q < 1.0) {
            return fail("p and q must lie in (0, 1)");
        }
        if !(self.k_min > -1.0 && self.k_max > 0.0 && self.k_min < self.k_max) {
            return fail("require -1 < k_min < k_max and k_max > 0");
        }
        if !(self.silence_rms >= 0.0) {
            return fail("silence_rms must be non-negative");
        }
        if !(self.fixed_duration > 0.0 && self.fixed_duration.is_finite()) {
            return fail("fixed_duration must be positive");
        }
        Ok(())
    }

    /// Longest segment this configuration can emit, in seconds.
    pub fn max_duration(&self) -> f64 {
        match self.mode {
            SegmentationMode::Fixed => self.fixed_duration,
            SegmentationMode::Dynamic => self.n.max(self.d_init),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeechSegment {
    pub index: u64,
    /// Start of the segment on the stream clock, seconds.
    pub capture_start: f64,
    /// Nominal duration `d_t`; equals `samples.len() / sample_rate` to within
    /// one sample period, except the final remainder which is exact.
    pub duration: f64,
    pub slope: f64,
    pub silent: bool,
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

impl SpeechSegment {
    pub fn meta(&self) -> SegmentMeta {
        SegmentMeta {
            index: self.index,
            capture_start: self.capture_start,
            duration: self.duration,
            slope: self.slope,
            silent: self.silent,
            samples: self.samples.len(),
        }
    }
}

/// Everything about a segment except its samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentMeta {
    pub index: u64,
    pub capture_start: f64,
    pub duration: f64,
    pub slope: f64,
    pub silent: bool,
    pub samples: usize,
}

/// Least-squares slope, per second, of the mean-normalised envelope against
/// frame-centre times, clamped to `[k_min, k_max]`.
pub fn estimate_slope(env: &Envelope, cfg: &SegmenterConfig) -> Result<f64, SegmentError> {
    let n = env.values.len();
    if n < 2 {
        return Err(SegmentError::TooFewFrames(n));
    }
    let mean = env.values.iter().sum::<f64>() / n as f64;
    if mean == 0.0 {
        return Ok(0.0);
    }
    let t_mean = (0..n).map(|i| env.frame_center(i)).sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in env.values.iter().enumerate() {
        let dt = env.frame_center(i) - t_mean;
        sxy += dt * (v / mean - 1.0);
        sxx += dt * dt;
    }
    Ok((sxy / sxx).clamp(cfg.k_min, cfg.k_max))
}

pub fn next_duration(d: f64, k: f64, cfg: &SegmenterConfig) -> Result<f64, SegmentError> {
    if !(d > 0.0) {
        return Err(SegmentError::Duration(d));
    }
    if !(k > -1.0) {
        return Err(SegmentError::SlopeDomain(k));
    }
    Ok(if k > 0.0 {
        cfg.m.max((1.0 - cfg.p * k.exp()) * d)
    } else {
        cfg.n.min((1.0 - cfg.q * (k + 1.0).ln()) * d)
    })
}

pub fn is_silent(samples: &[f64], cfg: &SegmenterConfig) -> bool {
    audio::rms(samples) < cfg.silence_rms
}

/// Pull-based segmenter over a buffered source. Segments tile the source
/// exactly; the final segment is whatever remains.
#[derive(Debug)]
pub struct SegmentStream<'a> {
    source: &'a [f64],
    sample_rate: u32,
    cfg: SegmenterConfig,
    cursor: usize,
    index: u64,
    next: f64,
}

pub fn segment_stream<'a>(
    source: &'a AudioBuffer,
    cfg: &SegmenterConfig,
) -> Result<SegmentStream<'a>, SegmentError> {
    cfg.validate()?;
    let (frame, _) = cfg.envelope.lengths(source.sample_rate())?;
    if source.len() < frame {
        return Err(AudioError::TooShort {
            samples: source.len(),
            frame,
        }
        .into());
    }
    Ok(SegmentStream {
        source: source.samples(),
        sample_rate: source.sample_rate(),
        cfg: *cfg,
        cursor: 0,
        index: 0,
        next: match cfg.mode {
            SegmentationMode::Fixed => cfg.fixed_duration,
            SegmentationMode::Dynamic => cfg.d_init,
        },
    })
}

impl SegmentStream<'_> {
    fn slope_of(&self, samples: &[f64]) -> f64 {
        // Segments too short for two frames (only ever a final remainder)
        // carry no usable slope.
        match audio::rms_envelope(samples, self.sample_rate, self.cfg.envelope) {
            Ok(env) => estimate_slope(&env, &self.cfg).unwrap_or(0.0),
            Err(_) => 0.0,
        }
    }
}

impl Iterator for SegmentStream<'_> {
    type Item = SpeechSegment;

    fn next(&mut self) -> Option<SpeechSegment> {
        let remaining = self.source.len() - self.cursor;
        if remaining == 0 {
            return None;
        }
        let rate = self.sample_rate as f64;
        let nominal = self.next;
        let wanted = ((nominal * rate).round() as usize).max(1);
        let take = wanted.min(remaining);
        let samples = self.source[self.cursor..self.cursor + take].to_vec();
        let duration = if take == wanted {
            nominal
        } else {
            take as f64 / rate
        };
        let slope = self.slope_of(&samples);
        if self.cfg.mode == SegmentationMode::Dynamic {
            // slope is already clamped into the domain of next_duration
            self.next = next_duration(nominal, slope, &self.cfg).unwrap_or(nominal);
        }
        let segment = SpeechSegment {
            index: self.index,
            capture_start: self.cursor as f64 / rate,
            duration,
            slope,
            silent: is_silent(&samples, &self.cfg),
            sample_rate: self.sample_rate,
            samples,
        };
        self.cursor += take;
        self.index += 1;
        Some(segment)
    }
}

pub const SEGMENT_CSV_HEADER: &str = "t,capture_start,d_t,k,silent";

/// Writes `t,capture_start,d_t,k,silent` rows with a header.
pub fn write_segments_csv<'a, W: Write>(
    mut out: W,
    segments: impl IntoIterator<Item = &'a SegmentMeta>,
) -> Result<(), SegmentError> {
    writeln!(out, "{SEGMENT_CSV_HEADER}")?;
    for s in segments {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{}",
            s.index, s.capture_start, s.duration, s.slope, s.silent
        )?;
    }
    Ok(())
}
