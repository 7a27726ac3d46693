//! File writers shared by the commands. Every CSV starts with its header row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use lssc_core::neuralcodec::EpochStats;
use lssc_core::segmenter::{SegmentMeta, SegmentationMode};
use serde::Serialize;

pub const SEGMENTS_HEADER: &str = "mode,t,capture_start,d_t,k,silent";
pub const EPOCHS_HEADER: &str = "epoch,steps,train_mse,val_mse,val_nmse_db";
pub const SWEEP_HEADER: &str = "snr_db,channel,mode,seed,segments_transmitted,lsd_db,recon_snr_db,average_latency_s,mean_segment_latency_s";

pub fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating directory {}", dir.display()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn write_segments<W: Write>(mut out: W, tables: &[(SegmentationMode, Vec<SegmentMeta>)]) -> std::io::Result<()> {
    writeln!(out, "{SEGMENTS_HEADER}")?;
    for (mode, metas) in tables {
        for m in metas {
            writeln!(
                out,
                "{mode},{},{:.6},{:.6},{:.6},{}",
                m.index, m.capture_start, m.duration, m.slope, m.silent
            )?;
        }
    }
    out.flush()
}

pub fn write_epochs<W: Write>(mut out: W, epochs: &[EpochStats]) -> std::io::Result<()> {
    writeln!(out, "{EPOCHS_HEADER}")?;
    for e in epochs {
        writeln!(out, "{},{},{},{},{}", e.epoch, e.steps, e.train_mse, e.val_mse, e.val_nmse_db)?;
    }
    out.flush()
}

/// One `sweep` row. Empty cells mean "not available".
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub channel: String,
    pub mode: SegmentationMode,
    pub seed: u64,
    pub segments_transmitted: usize,
    pub lsd_db: Option<f64>,
    pub recon_snr_db: Option<f64>,
    pub average_latency_s: Option<f64>,
    pub mean_segment_latency_s: Option<f64>,
}

pub fn write_sweep<W: Write>(mut out: W, rows: &[SweepRow]) -> std::io::Result<()> {
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.snr_db,
            r.channel,
            r.mode,
            r.seed,
            r.segments_transmitted,
            cell(r.lsd_db),
            cell(r.recon_snr_db),
            cell(r.average_latency_s),
            cell(r.mean_segment_latency_s)
        )?;
    }
    out.flush()
}

/// DOWNLOAD_FEATURES frames back to back, exactly as received.
pub fn write_downloads(path: &Path, frames: &[Vec<u8>]) -> anyhow::Result<()> {
    let mut out = create(path)?;
    for f in frames {
        out.write_all(f)?;
    }
    out.flush()?;
    Ok(())
}
