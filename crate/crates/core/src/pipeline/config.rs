use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::channelsim::ChannelConfig;
use crate::segmenter::{SegmentationMode, SegmenterConfig};
use crate::semcodec::CodecSpec;
use crate::transport::SessionConfig;

/// `a * d + b` seconds for a segment of duration `d`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearCost {
    pub a: f64,
    pub b: f64,
}

impl LinearCost {
    pub const fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn at(&self, d: f64) -> f64 {
        self.a * d + self.b
    }
}

/// Simulated processing time of each stage, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComputeModel {
    pub device_compress: LinearCost,
    pub edge_model: LinearCost,
    pub edge_codec: f64,
    pub channel: f64,
    pub device_predict: LinearCost,
}

impl Default for ComputeModel {
    fn default() -> Self {
        Self {
            device_compress: LinearCost::new(0.02, 0.005),
            edge_model: LinearCost::new(0.25, 0.05),
            edge_codec: 0.01,
            channel: 0.02,
            device_predict: LinearCost::new(0.02, 0.005),
        }
    }
}

impl ComputeModel {
    pub fn zero() -> Self {
        Self {
            device_compress: LinearCost::default(),
            edge_model: LinearCost::default(),
            edge_codec: 0.0,
            channel: 0.0,
            device_predict: LinearCost::default(),
        }
    }

    /// Every stage free except the edge model, which costs `ratio * d`.
    pub fn proportional(ratio: f64) -> Self {
        Self {
            edge_model: LinearCost::new(ratio, 0.0),
            ..Self::zero()
        }
    }

    /// Time from dequeue until the upload leaves the device.
    pub fn upload_cost(&self, d: f64) -> f64 {
        self.device_compress.at(d)
    }

    /// Time from dequeue until the translated segment is emitted.
    pub fn total(&self, d: f64) -> f64 {
        self.device_compress.at(d) + self.edge_model.at(d) + self.edge_codec + self.channel + self.device_predict.at(d)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let values = [
            self.device_compress.a,
            self.device_compress.b,
            self.edge_model.a,
            self.edge_model.b,
            self.edge_codec,
            self.channel,
            self.device_predict.a,
            self.device_predict.b,
        ];
        if values.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(PipelineError::Config("compute model coefficients must be finite and non-negative".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ClockMode {
    /// Timestamps derived from capture durations and the compute model.
    Simulated,
    /// Real threads and sleeps; one stream second lasts `time_scale` wall seconds.
    Wall { time_scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub sample_rate: u32,
    pub segmenter: SegmenterConfig,
    pub codec: CodecSpec,
    pub channel: ChannelConfig,
    pub compute: ComputeModel,
    /// Capture of a segment takes its duration (a live source); otherwise
    /// the whole source is available at once.
    pub realtime_capture: bool,
    /// Capture the next segment while the current one is processed.
    pub pipelined: bool,
    pub clock: ClockMode,
    /// Drives the per-segment channel draws.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sample_rate: crate::audio::DEFAULT_SAMPLE_RATE,
            segmenter: SegmenterConfig::default(),
            codec: CodecSpec::default(),
            channel: ChannelConfig::default(),
            compute: ComputeModel::default(),
            realtime_capture: true,
            pipelined: true,
            clock: ClockMode::Simulated,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn mode(&self) -> SegmentationMode {
        self.segmenter.mode
    }

    /// Channel settings as used by the run: the run seed replaces the
    /// channel's own.
    pub fn effective_channel(&self) -> ChannelConfig {
        ChannelConfig {
            seed: self.seed,
            ..self.channel
        }
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            channel: self.effective_channel(),
            codec: self.codec,
            sample_rate: self.sample_rate,
        }
    }

    /// Longest segment in samples.
    pub fn max_segment_samples(&self) -> usize {
        (self.segmenter.max_duration() * self.sample_rate as f64).ceil() as usize
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.sample_rate == 0 {
            return Err(PipelineError::Config("sample_rate must be positive".into()));
        }
        self.segmenter.validate()?;
        self.codec.validate()?;
        self.channel.validate()?;
        self.compute.validate()?;
        if let ClockMode::Wall { time_scale } = self.clock {
            if !(time_scale > 0.0 && time_scale.is_finite()) {
                return Err(PipelineError::Config("time_scale must be positive".into()));
            }
        }
        let needed = self.codec.frames_for(self.max_segment_samples());
        if needed > self.codec.span_frames {
            return Err(PipelineError::Config(format!(
                "segments of up to {:.3} s need {needed} codec frames but span_frames is {}",
                self.segmenter.max_duration(),
                self.codec.span_frames
            )));
        }
        Ok(())
    }
}
