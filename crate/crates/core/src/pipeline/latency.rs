//! Per-segment timestamps and the average inter-emission latency.

use std::io::Write;

use serde::Serialize;

use super::config::ComputeModel;
use super::PipelineError;
use crate::segmenter::SegmentMeta;

/// Timestamps of one transmitted segment, in stream seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyEntry {
    pub t: u64,
    pub capture_start: f64,
    pub capture_end: f64,
    pub upload_time: f64,
    pub emit_time: f64,
}

impl LatencyEntry {
    pub fn latency(&self) -> f64 {
        self.emit_time - self.capture_end
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LatencyLog {
    /// Transmitted segments in emission order.
    pub entries: Vec<LatencyEntry>,
    /// Indices of silent segments, which were captured but not sent.
    pub skipped: Vec<u64>,
    /// Time at which the last stage went idle.
    pub makespan: f64,
}

impl LatencyLog {
    pub fn emit_times(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.emit_time).collect()
    }

    pub fn segment_count(&self) -> usize {
        self.entries.len() + self.skipped.len()
    }
}

/// Replays the two-stage pipeline on the simulated clock.
///
/// With `pipelined`, capture hands segments to processing through a queue
/// of one slot: a segment enters the queue once it is captured and the slot
/// is free, processing starts once the previous segment is done, and the
/// next capture starts as soon as the current segment is queued. Without
/// it, the next capture waits for the current emission. Silent segments
/// take capture time only.
pub fn schedule(metas: &[SegmentMeta], model: &ComputeModel, realtime: bool, pipelined: bool) -> LatencyLog {
    let mut log = LatencyLog::default();
    let mut capture_start = 0.0f64;
    let mut prev_take = 0.0f64;
    let mut prev_done = 0.0f64;
    for m in metas {
        let capture_end = if realtime { capture_start + m.duration } else { capture_start };
        if m.silent {
            log.skipped.push(m.index);
            capture_start = capture_end;
            continue;
        }
        let (push, take) = if pipelined {
            let push = capture_end.max(prev_take);
            (push, push.max(prev_done))
        } else {
            (capture_end, capture_end.max(prev_done))
        };
        let done = take + model.total(m.duration);
        log.entries.push(LatencyEntry {
            t: m.index,
            capture_start,
            capture_end,
            upload_time: take + model.upload_cost(m.duration),
            emit_time: done,
        });
        prev_take = take;
        prev_done = done;
        capture_start = if pipelined { push } else { done };
    }
    log.makespan = prev_done.max(capture_start);
    log
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    /// Mean gap between adjacent emissions, summed term by term.
    pub average_latency: f64,
    /// The same quantity as `(TL_T - TL_1) / (T - 1)`.
    pub average_latency_telescoped: f64,
    /// Mean of `emit_time - capture_end`.
    pub mean_segment_latency: f64,
    pub transmitted: usize,
}

pub fn average_latency(log: &LatencyLog) -> Result<LatencyStats, PipelineError> {
    let tl = log.emit_times();
    let n = tl.len();
    if n < 2 {
        return Err(PipelineError::TooFewSegments(n));
    }
    let gaps: f64 = tl.windows(2).map(|w| w[1] - w[0]).sum();
    let mean_latency = log.entries.iter().map(LatencyEntry::latency).sum::<f64>() / n as f64;
    Ok(LatencyStats {
        average_latency: gaps / (n - 1) as f64,
        average_latency_telescoped: (tl[n - 1] - tl[0]) / (n - 1) as f64,
        mean_segment_latency: mean_latency,
        transmitted: n,
    })
}

pub const LATENCY_CSV_HEADER: &str = "t,capture_start,capture_end,upload_time,emit_time,latency";

pub fn write_latency_csv<W: Write>(mut out: W, log: &LatencyLog) -> std::io::Result<()> {
    writeln!(out, "{LATENCY_CSV_HEADER}")?;
    for e in &log.entries {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            e.t,
            e.capture_start,
            e.capture_end,
            e.upload_time,
            e.emit_time,
            e.latency()
        )?;
    }
    Ok(())
}
