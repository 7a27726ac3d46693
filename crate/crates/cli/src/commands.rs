use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use lssc_core::audio::{load_wav, synth_test_signal, AudioBuffer, SignalSpec};
use lssc_core::neuralcodec::{save_checkpoint, train as train_codec, NetError};
use lssc_core::pipeline::{run_streaming, write_latency_csv, ChannelCodec, ClockMode, RunConfig, RunOutput, RunSummary};
use lssc_core::segmenter::{segment_stream, SegmentMeta, SegmentationMode, SpeechSegment};
use lssc_core::semcodec::ReferenceCodec;

use crate::config::{FileConfig, RunManifest, Versions, MANIFEST_SCHEMA};
use crate::output::{self, SweepRow};
use crate::{ChannelArgs, CommonArgs, ModeChoice, NetArgs, RunArgs, SegmentArgs, SweepArgs, TrainArgs, Usage};

pub const CHECKPOINT_FILE: &str = "checkpoint.lsscnet";

pub fn load_config(common: &CommonArgs) -> anyhow::Result<(FileConfig, u64)> {
    let mut cfg = FileConfig::load(common.config.as_deref())?;
    let seed = cfg.resolve_seed(common.seed);
    Ok((cfg, seed))
}

pub fn apply_channel(cfg: &mut RunConfig, args: &ChannelArgs) {
    if let Some(kind) = args.channel {
        cfg.channel.kind = kind;
    }
    if let Some(snr) = args.snr {
        cfg.channel.snr_db = snr;
    }
}

pub fn load_nets(args: &NetArgs, semantic_dim: usize) -> anyhow::Result<ChannelCodec> {
    let nets = match (&args.checkpoint, args.identity) {
        (Some(path), _) => {
            if !path.exists() {
                return Err(Usage(format!("checkpoint {} does not exist", path.display())).into());
            }
            ChannelCodec::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        (None, true) => ChannelCodec::identity(semantic_dim),
        (None, false) => return Err(Usage("pass --checkpoint PATH or --identity".into()).into()),
    };
    nets.check_dims(semantic_dim)?;
    Ok(nets)
}

fn manifest<'a>(
    command: &'a str,
    common: &'a CommonArgs,
    seed: u64,
    out_dir: &'a Path,
    inputs: BTreeMap<&'static str, PathBuf>,
    cfg: &'a FileConfig,
) -> RunManifest<'a> {
    RunManifest {
        schema: MANIFEST_SCHEMA,
        command,
        config_path: common.config.as_deref(),
        seed,
        out_dir,
        inputs,
        config: cfg,
        versions: Versions::default(),
    }
}

fn inputs(pairs: &[(&'static str, Option<&PathBuf>)]) -> BTreeMap<&'static str, PathBuf> {
    pairs
        .iter()
        .filter_map(|(k, v)| v.map(|p| (*k, p.clone())))
        .collect()
}

fn corpus_segments(cfg: &FileConfig) -> anyhow::Result<Vec<SpeechSegment>> {
    let rate = cfg.run.sample_rate;
    let mut signals: Vec<AudioBuffer> = Vec::new();
    if let Some(dir) = &cfg.corpus.dir {
        if !dir.is_dir() {
            return Err(Usage(format!("corpus directory {} does not exist", dir.display())).into());
        }
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_context(|| format!("listing {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Usage(format!("corpus directory {} has no .wav files", dir.display())).into());
        }
        for f in files {
            signals.push(load_wav(&f).with_context(|| format!("reading {}", f.display()))?);
        }
    } else if cfg.corpus.signals.is_empty() {
        // default: rising-amplitude noise, the spectrally flat case
        for seed in 0..8 {
            let spec = SignalSpec {
                sample_rate: rate,
                ..SignalSpec::noise((0.05, 0.5), 20.0, seed)
            };
            signals.push(synth_test_signal(&spec)?);
        }
    } else {
        for spec in &cfg.corpus.signals {
            signals.push(synth_test_signal(spec).map_err(|e| Usage(format!("corpus signal: {e}")))?);
        }
    }
    let mut segments = Vec::new();
    for s in &signals {
        if s.sample_rate() != rate {
            return Err(Usage(format!(
                "corpus audio is sampled at {} Hz but run.sample_rate is {rate}",
                s.sample_rate()
            ))
            .into());
        }
        segments.extend(segment_stream(s, &cfg.run.segmenter)?);
    }
    Ok(segments)
}

pub fn train(args: TrainArgs) -> anyhow::Result<()> {
    let (mut cfg, seed) = load_config(&args.common)?;
    if let Some(dir) = &args.corpus {
        cfg.corpus.dir = Some(dir.clone());
    }
    apply_channel(&mut cfg.run, &args.channel);
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if args.max_steps.is_some() {
        cfg.train.max_steps = args.max_steps;
    }
    // the networks always match the codec's feature size
    cfg.net.semantic_dim = cfg.run.codec.semantic_dim;
    cfg.validate_run()?;

    let segments = corpus_segments(&cfg)?;
    let codec = ReferenceCodec::new(cfg.run.codec)?;
    let (encoder, decoder) = cfg.net.init_seeded(seed).map_err(|e| Usage(format!("net: {e}")))?;
    let trained = match train_codec(&codec, &cfg.run.channel, &segments, encoder, decoder, &cfg.train) {
        Err(e @ (NetError::Config(_) | NetError::EmptyCorpus)) => return Err(Usage(e.to_string()).into()),
        other => other?,
    };

    output::ensure_dir(&args.out)?;
    let checkpoint = args.out.join(CHECKPOINT_FILE);
    save_checkpoint(&checkpoint, &[&trained.encoder, &trained.decoder])?;
    // wall time would make the report differ between identical runs
    let mut report = serde_json::to_value(&trained.report)?;
    if let Some(obj) = report.as_object_mut() {
        obj.remove("wall_seconds");
    }
    output::write_json(&args.out.join("train_report.json"), &report)?;
    output::write_epochs(output::create(&args.out.join("train_epochs.csv"))?, &trained.report.epochs)?;
    manifest(
        "train",
        &args.common,
        seed,
        &args.out,
        inputs(&[("corpus", cfg.corpus.dir.as_ref())]),
        &cfg,
    )
    .write()?;

    let r = &trained.report;
    eprintln!(
        "trained {} steps over {} epochs in {:.1} s: val MSE {:.3e} -> {:.3e} ({:.1} dB NMSE)",
        r.steps,
        r.epochs.len(),
        r.wall_seconds,
        r.initial_val_mse,
        r.final_val_mse(),
        r.epochs.last().map_or(r.initial_val_nmse_db, |e| e.val_nmse_db)
    );
    Ok(())
}

/// Writes summary, latency and segment tables and the aligned output WAV.
pub fn write_run_outputs(
    out_dir: &Path,
    cfg: &RunConfig,
    out: &RunOutput,
    source: Option<&AudioBuffer>,
    dump: Option<&Path>,
) -> anyhow::Result<RunSummary> {
    output::ensure_dir(out_dir)?;
    let summary = out.summary(cfg, source)?;
    output::write_json(&out_dir.join("summary.json"), &summary)?;
    let mut latency = output::create(&out_dir.join("latency.csv"))?;
    write_latency_csv(&mut latency, &out.log)?;
    latency.flush()?;
    output::write_segments(output::create(&out_dir.join("segments.csv"))?, &[(cfg.mode(), out.metas.clone())])?;
    let aligned = AudioBuffer::new(out.aligned.clone(), cfg.sample_rate)?;
    lssc_core::audio::write_wav_pcm16(out_dir.join("translated.wav"), &aligned)?;
    if let Some(path) = dump {
        output::write_downloads(path, &out.downloads)?;
    }
    Ok(summary)
}

fn report(summary: &RunSummary) {
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4} s"));
    eprintln!(
        "{} segments ({} silent), average latency {}, mean segment latency {}, makespan {:.3} s",
        summary.segments_total,
        summary.segments_silent,
        opt(summary.average_latency_s),
        opt(summary.mean_segment_latency_s),
        summary.makespan_s
    );
    if let Some(q) = summary.quality {
        eprintln!("quality: LSD {:.3} dB, reconstruction SNR {:.2} dB", q.lsd_db, q.recon_snr_db);
    }
}

pub fn run(args: RunArgs) -> anyhow::Result<()> {
    let (mut cfg, seed) = load_config(&args.common)?;
    if let Some(mode) = args.mode {
        cfg.run.segmenter.mode = mode;
    }
    apply_channel(&mut cfg.run, &args.channel);
    if args.serialized {
        cfg.run.pipelined = false;
    }
    if args.no_realtime {
        cfg.run.realtime_capture = false;
    }
    if let Some(time_scale) = args.time_scale {
        cfg.run.clock = ClockMode::Wall { time_scale };
    }
    cfg.validate_run()?;
    let nets = load_nets(&args.net, cfg.run.codec.semantic_dim)?;
    let source = cfg.source_audio(args.input.as_deref())?;

    let out = run_streaming(&source, &cfg.run, &nets)?;
    let summary = write_run_outputs(&args.out, &cfg.run, &out, Some(&source), args.dump_downloads.as_deref())?;
    manifest(
        "run",
        &args.common,
        seed,
        &args.out,
        inputs(&[("input", args.input.as_ref()), ("checkpoint", args.net.checkpoint.as_ref())]),
        &cfg,
    )
    .write()?;
    report(&summary);
    Ok(())
}

/// `a:b:step` inclusive, or comma-separated values. Duplicates are
/// dropped (first occurrence kept) and reported.
pub fn parse_snr_list(text: &str) -> anyhow::Result<(Vec<f64>, usize)> {
    let bad = |why: &str| Usage(format!("invalid --snr-list `{text}`: {why}"));
    let num = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
    let raw: Vec<f64> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [a, b, step] = parts.as_slice() else {
            return Err(bad("expected start:stop:step").into());
        };
        let (a, b, step) = match (num(a), num(b), num(step)) {
            (Some(a), Some(b), Some(s)) if s > 0.0 && a <= b => (a, b, s),
            _ => return Err(bad("need start <= stop and a positive step").into()),
        };
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        if count > 10_000 {
            return Err(bad("more than 10000 points").into());
        }
        (0..count).map(|i| a + step * i as f64).collect()
    } else {
        text.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| num(s).ok_or_else(|| bad(&format!("`{s}` is not a number"))))
            .collect::<Result<_, _>>()?
    };
    if raw.is_empty() {
        return Err(bad("empty").into());
    }
    let mut out: Vec<f64> = Vec::with_capacity(raw.len());
    for v in &raw {
        if !out.contains(v) {
            out.push(*v);
        }
    }
    Ok((out.clone(), raw.len() - out.len()))
}

pub fn sweep(args: SweepArgs) -> anyhow::Result<()> {
    let (cfg, seed) = load_config(&args.common)?;
    let (snrs, dropped) = parse_snr_list(&args.snr_list)?;
    if dropped > 0 {
        eprintln!("lssc: warning: dropped {dropped} duplicate SNR value(s) from --snr-list");
    }
    if args.channels.is_empty() || args.modes.is_empty() {
        return Err(Usage("--channels and --modes must not be empty".into()).into());
    }
    let seeds = if args.seeds.is_empty() { vec![seed] } else { args.seeds.clone() };
    cfg.validate_run()?;
    let nets = load_nets(&args.net, cfg.run.codec.semantic_dim)?;
    let source = cfg.source_audio(args.input.as_deref())?;

    let mut rows = Vec::new();
    for &channel in &args.channels {
        for &mode in &args.modes {
            for &snr in &snrs {
                for &s in &seeds {
                    let mut run = cfg.run.clone();
                    run.channel.kind = channel;
                    run.channel.snr_db = snr;
                    run.segmenter.mode = mode;
                    run.seed = s;
                    run.validate().map_err(|e| Usage(e.to_string()))?;
                    let out = run_streaming(&source, &run, &nets)?;
                    let stats = out.latency_stats();
                    let quality = out.quality(&run, &source)?;
                    rows.push(SweepRow {
                        snr_db: snr,
                        channel: channel.to_string(),
                        mode,
                        seed: s,
                        segments_transmitted: out.log.entries.len(),
                        lsd_db: quality.map(|q| q.lsd_db),
                        recon_snr_db: quality.map(|q| q.recon_snr_db),
                        average_latency_s: stats.map(|s| s.average_latency),
                        mean_segment_latency_s: stats.map(|s| s.mean_segment_latency),
                    });
                }
            }
        }
    }
    output::ensure_dir(&args.out)?;
    output::write_sweep(output::create(&args.out.join("sweep.csv"))?, &rows)?;
    manifest(
        "sweep",
        &args.common,
        seed,
        &args.out,
        inputs(&[("input", args.input.as_ref()), ("checkpoint", args.net.checkpoint.as_ref())]),
        &cfg,
    )
    .write()?;
    eprintln!("wrote {} rows", rows.len());
    Ok(())
}

pub fn segment(args: SegmentArgs) -> anyhow::Result<()> {
    let cfg = FileConfig::load(args.config.as_deref())?;
    cfg.run.segmenter.validate().map_err(|e| Usage(e.to_string()))?;
    if !args.input.exists() {
        return Err(Usage(format!("input {} does not exist", args.input.display())).into());
    }
    let audio = load_wav(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let modes: &[SegmentationMode] = match args.mode {
        ModeChoice::Fixed => &[SegmentationMode::Fixed],
        ModeChoice::Dynamic => &[SegmentationMode::Dynamic],
        ModeChoice::Both => &[SegmentationMode::Fixed, SegmentationMode::Dynamic],
    };
    let mut tables = Vec::new();
    for &mode in modes {
        let seg_cfg = cfg.run.segmenter.with_mode(mode);
        let metas: Vec<SegmentMeta> = segment_stream(&audio, &seg_cfg)?.map(|s| s.meta()).collect();
        tables.push((mode, metas));
    }
    match &args.emit_csv {
        Some(path) => output::write_segments(output::create(path)?, &tables)?,
        None => output::write_segments(std::io::stdout().lock(), &tables)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_ranges_are_inclusive() {
        let (v, dropped) = parse_snr_list("0:18:3").unwrap();
        assert_eq!(v, vec![0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0]);
        assert_eq!(dropped, 0);
        assert_eq!(parse_snr_list("-6:-2:2").unwrap().0, vec![-6.0, -4.0, -2.0]);
    }

    #[test]
    fn snr_duplicates_are_dropped_in_order() {
        let (v, dropped) = parse_snr_list("10,0,10,5,0").unwrap();
        assert_eq!(v, vec![10.0, 0.0, 5.0]);
        assert_eq!(dropped, 2);
    }

    #[test]
    fn bad_snr_lists_are_usage_errors() {
        for text in ["", ",", "1:2", "5:0:1", "0:1:0", "a,b", "nan"] {
            let err = parse_snr_list(text).unwrap_err();
            assert!(err.downcast_ref::<Usage>().is_some(), "{text}");
        }
    }
}
