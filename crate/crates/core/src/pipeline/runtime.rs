use std::sync::mpsc::{self, Receiver, SyncSender};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::config::{ClockMode, RunConfig};
use super::latency::{average_latency, schedule, LatencyEntry, LatencyLog, LatencyStats};
use super::quality::{quality_proxy, Quality};
use super::stages::{ChannelCodec, DeviceRx, DeviceTx, EdgeA, EdgeB, Relay};
use super::PipelineError;
use crate::audio::AudioBuffer;
use crate::segmenter::{segment_stream, SegmentMeta, SpeechSegment};
use crate::semcodec::{ReferenceCodec, Translator};
use crate::transport::{decode_message, encode_message, Message, OrderGuard};

/// Passes `m` through the wire encoding, as a loopback hop would.
fn hop(m: &Message) -> Result<(Message, Vec<u8>), PipelineError> {
    let bytes = encode_message(m)?;
    Ok((decode_message(&bytes)?, bytes))
}

/// Device-side receiver: checks ordering, predicts speech and keeps the
/// per-segment record needed for the report.
pub struct Assembler {
    rx: DeviceRx,
    guard: OrderGuard,
    metas: Vec<SegmentMeta>,
    pieces: Vec<Vec<f64>>,
    downloads: Vec<Vec<u8>>,
    finished: bool,
}

impl Assembler {
    pub fn new(codec: ReferenceCodec) -> Self {
        Self {
            rx: DeviceRx::new(codec),
            guard: OrderGuard::new(),
            metas: Vec::new(),
            pieces: Vec::new(),
            downloads: Vec::new(),
            finished: false,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Accepts one downstream message with its frame bytes.
    pub fn accept(&mut self, m: &Message, frame: &[u8]) -> Result<(), PipelineError> {
        self.guard.check(m).map_err(PipelineError::Ordering)?;
        match m {
            Message::SegmentMeta(meta) => self.metas.push(meta.to_meta()),
            Message::DownloadFeatures(down) => {
                let samples = self.rx.predict(down)?;
                let expected = self.metas.last().map_or(0, |m| m.samples);
                if samples.len() != expected {
                    return Err(PipelineError::Config(format!(
                        "segment {} predicted {} samples, expected {expected}",
                        down.t,
                        samples.len()
                    )));
                }
                self.pieces.push(samples);
                self.downloads.push(frame.to_vec());
            }
            Message::Eos => self.finished = true,
            other => return Err(PipelineError::Unexpected(other.name())),
        }
        Ok(())
    }

    /// Builds the output, deriving timestamps from the simulated clock.
    pub fn finish_simulated(self, cfg: &RunConfig) -> RunOutput {
        let log = schedule(&self.metas, &cfg.compute, cfg.realtime_capture, cfg.pipelined);
        self.finish_with(cfg, log)
    }

    fn finish_with(self, cfg: &RunConfig, log: LatencyLog) -> RunOutput {
        let mut aligned = Vec::new();
        let mut translated = Vec::new();
        let mut pieces = self.pieces.into_iter();
        for m in &self.metas {
            if m.silent {
                aligned.resize(aligned.len() + m.samples, 0.0);
            } else if let Some(p) = pieces.next() {
                aligned.extend_from_slice(&p);
                translated.extend(p);
            }
        }
        RunOutput {
            translated: AudioBuffer::new(translated, cfg.sample_rate).unwrap_or_else(|_| AudioBuffer::empty(cfg.sample_rate)),
            aligned,
            metas: self.metas,
            log,
            downloads: self.downloads,
            deep_fades: None,
            wall_seconds: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Translated segments concatenated in index order.
    pub translated: AudioBuffer,
    /// Translated segments at their source positions, zeros where silent.
    pub aligned: Vec<f64>,
    pub metas: Vec<SegmentMeta>,
    pub log: LatencyLog,
    /// Encoded DOWNLOAD_FEATURES frames in arrival order.
    pub downloads: Vec<Vec<u8>>,
    /// Known only where the wireless hop ran in this process.
    pub deep_fades: Option<usize>,
    pub wall_seconds: f64,
}

/// Machine-readable run report. Fields are stable; see the README.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub schema: String,
    pub mode: String,
    pub channel: String,
    pub snr_db: f64,
    pub seed: u64,
    pub clock: String,
    pub segments_total: usize,
    pub segments_transmitted: usize,
    pub segments_silent: usize,
    pub output_samples: usize,
    pub average_latency_s: Option<f64>,
    pub average_latency_telescoped_s: Option<f64>,
    pub mean_segment_latency_s: Option<f64>,
    pub makespan_s: f64,
    pub quality: Option<Quality>,
    pub config: RunConfig,
}

pub const SUMMARY_SCHEMA: &str = "lssc.run_summary.v1";

impl RunOutput {
    pub fn latency_stats(&self) -> Option<LatencyStats> {
        average_latency(&self.log).ok()
    }

    /// Quality against `source`; `None` unless the translator is the identity.
    pub fn quality(&self, cfg: &RunConfig, source: &AudioBuffer) -> Result<Option<Quality>, PipelineError> {
        if cfg.codec.translator != Translator::Identity {
            return Ok(None);
        }
        quality_proxy(source.samples(), &self.aligned, cfg.max_segment_samples()).map(Some)
    }

    pub fn summary(&self, cfg: &RunConfig, source: Option<&AudioBuffer>) -> Result<RunSummary, PipelineError> {
        let stats = self.latency_stats();
        let quality = match source {
            Some(s) => self.quality(cfg, s)?,
            None => None,
        };
        Ok(RunSummary {
            schema: SUMMARY_SCHEMA.to_string(),
            mode: cfg.mode().to_string(),
            channel: cfg.channel.kind.to_string(),
            snr_db: cfg.channel.snr_db,
            seed: cfg.seed,
            clock: match cfg.clock {
                ClockMode::Simulated => "simulated".to_string(),
                ClockMode::Wall { .. } => "wall".to_string(),
            },
            segments_total: self.metas.len(),
            segments_transmitted: self.log.entries.len(),
            segments_silent: self.log.skipped.len(),
            output_samples: self.translated.len(),
            average_latency_s: stats.map(|s| s.average_latency),
            average_latency_telescoped_s: stats.map(|s| s.average_latency_telescoped),
            mean_segment_latency_s: stats.map(|s| s.mean_segment_latency),
            makespan_s: self.log.makespan,
            quality,
            config: cfg.clone(),
        })
    }
}

/// Wall-clock capture times attached to a queued segment.
struct Captured {
    segment: SpeechSegment,
    start: f64,
    end: f64,
}

/// Runs the whole chain in this process: a capture thread feeds a
/// one-slot queue, and the processing stage takes each segment through
/// every role, with each message passed through the wire encoding.
pub fn run_streaming(source: &AudioBuffer, cfg: &RunConfig, nets: &ChannelCodec) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(PipelineError::Config("source audio is empty".into()));
    }
    if source.sample_rate() != cfg.sample_rate {
        return Err(PipelineError::Config(format!(
            "source is sampled at {} Hz, run expects {} Hz",
            source.sample_rate(),
            cfg.sample_rate
        )));
    }
    let codec = ReferenceCodec::new(cfg.codec)?;
    nets.check_dims(cfg.codec.semantic_dim)?;
    let segments = segment_stream(source, &cfg.segmenter)?;

    let device_tx = DeviceTx::new(codec.clone());
    let mut edge_a = EdgeA::new(codec.clone(), nets.encoder.clone(), cfg.effective_channel());
    let mut edge_b = EdgeB::new(codec.clone(), nets.decoder.clone());
    let mut assembler = Assembler::new(codec);

    let time_scale = match cfg.clock {
        ClockMode::Simulated => None,
        ClockMode::Wall { time_scale } => Some(time_scale),
    };
    let started = Instant::now();
    let stream_now = |scale: f64| started.elapsed().as_secs_f64() / scale;
    let sleep_stream = |seconds: f64, scale: f64| {
        if seconds > 0.0 {
            thread::sleep(Duration::from_secs_f64(seconds * scale));
        }
    };
    let sleep_until = |deadline: f64, scale: f64| {
        let now = started.elapsed().as_secs_f64() / scale;
        if deadline > now {
            thread::sleep(Duration::from_secs_f64((deadline - now) * scale));
        }
    };

    let mut deliver = |m: Message| -> Result<(), PipelineError> {
        let (m, _) = hop(&m)?;
        let (m, _) = hop(&edge_a.relay(&m)?)?;
        let (m, bytes) = hop(&edge_b.relay(&m)?)?;
        assembler.accept(&m, &bytes)
    };

    let mut wall_entries = Vec::new();
    let mut skipped = Vec::new();
    let serialized = !cfg.pipelined;
    let realtime = cfg.realtime_capture;

    let (tx, rx): (SyncSender<Captured>, Receiver<Captured>) = mpsc::sync_channel(1);
    let (ack_tx, ack_rx) = mpsc::channel::<()>();
    let outcome: Result<(), PipelineError> = thread::scope(|scope| {
        // owned here so an early error return unblocks the capture thread
        let (rx, ack_tx) = (rx, ack_tx);
        scope.spawn(move || {
            for segment in segments {
                let start = time_scale.map_or(0.0, stream_now);
                if let (Some(scale), true) = (time_scale, realtime) {
                    sleep_stream(segment.duration, scale);
                }
                let end = time_scale.map_or(0.0, stream_now);
                let silent = segment.silent;
                if tx.send(Captured { segment, start, end }).is_err() {
                    return;
                }
                if serialized && !silent && ack_rx.recv().is_err() {
                    return;
                }
            }
        });

        for item in rx {
            let seg = &item.segment;
            let take = time_scale.map_or(0.0, stream_now);
            let mut upload = 0.0;
            for (i, m) in device_tx.messages(seg)?.into_iter().enumerate() {
                if i == 1 {
                    if let Some(scale) = time_scale {
                        sleep_until(take + cfg.compute.upload_cost(seg.duration), scale);
                        upload = stream_now(scale);
                    }
                }
                deliver(m)?;
            }
            if seg.silent {
                skipped.push(seg.index);
                continue;
            }
            if let Some(scale) = time_scale {
                sleep_until(take + cfg.compute.total(seg.duration), scale);
                wall_entries.push(LatencyEntry {
                    t: seg.index,
                    capture_start: item.start,
                    capture_end: item.end,
                    upload_time: upload,
                    emit_time: stream_now(scale),
                });
            }
            if serialized {
                let _ = ack_tx.send(());
            }
        }
        Ok(())
    });
    outcome?;
    deliver(Message::Eos)?;
    let wall_seconds = started.elapsed().as_secs_f64();

    let mut out = match time_scale {
        None => assembler.finish_simulated(cfg),
        Some(scale) => {
            let makespan = wall_seconds / scale;
            let log = LatencyLog {
                entries: wall_entries,
                skipped,
                makespan,
            };
            assembler.finish_with(cfg, log)
        }
    };
    out.deep_fades = Some(edge_a.deep_fades());
    out.wall_seconds = wall_seconds;
    Ok(out)
}
