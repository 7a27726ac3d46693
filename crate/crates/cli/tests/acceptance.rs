//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::time::Instant;

use astro_float::{BigFloat, Consts, RoundingMode};
use lssc_core::audio::{synth_test_signal, AudioBuffer, SignalSpec};
use lssc_core::channelsim::{map_to_symbols, transmit, ChannelConfig, ChannelDraw, ChannelKind};
use lssc_core::neuralcodec::{train, DenseNetwork, LossGraph, NetShape, TrainConfig};
use lssc_core::pipeline::{
    average_latency, run_streaming, schedule, ChannelCodec, ClockMode, ComputeModel, LinearCost, RunConfig,
};
use lssc_core::segmenter::{next_duration, segment_stream, SegmentMeta, SegmentationMode, SegmenterConfig};
use lssc_core::semcodec::{CodecSpec, ReferenceCodec, Translator};
use lssc_core::transport::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// criterion 1

/// The duration update evaluated with 256-bit floats.
fn oracle_duration(d: f64, k: f64, cfg: &SegmenterConfig, cc: &mut Consts) -> f64 {
    const P: usize = 256;
    let rm = RoundingMode::ToEven;
    let big = |x: f64| BigFloat::from_f64(x, P);
    let one = big(1.0);
    let (bd, bk) = (big(d), big(k));
    let v = if k > 0.0 {
        let t = big(cfg.p).mul(&bk.exp(P, rm, cc), P, rm);
        one.sub(&t, P, rm).mul(&bd, P, rm).max(&big(cfg.m))
    } else {
        let t = big(cfg.q).mul(&bk.add(&one, P, rm).ln(P, rm, cc), P, rm);
        one.sub(&t, P, rm).mul(&bd, P, rm).min(&big(cfg.n))
    };
    v.to_string().parse().expect("decimal rendering of a finite value")
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let cfg = SegmenterConfig::default();
    let mut cc = Consts::new().expect("constant cache");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let d = rng.random_range(0.3..=1.2);
        let k = rng.random_range(-0.99..=10.0);
        let got = next_duration(d, k, &cfg).expect("in domain");
        let want = oracle_duration(d, k, &cfg, &mut cc);
        worst = worst.max(((got - want) / want).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && secs < 1.0,
        format!("max relative error {worst:.2e} over 1000 pairs (limit 1e-9), {secs:.3} s (limit 1 s)"),
    )
}

// criterion 2

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let cfg = SegmenterConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut count = 0usize;
    for seq in 0..10_000 {
        let mut d = rng.random_range(cfg.m..=cfg.n);
        for _ in 0..100 {
            let k = match seq % 3 {
                0 => rng.random_range(cfg.k_min..=cfg.k_max),
                1 => rng.random_range(-0.05..0.05),
                _ => {
                    if rng.random_bool(0.5) {
                        cfg.k_min
                    } else {
                        cfg.k_max
                    }
                }
            };
            d = next_duration(d, k, &cfg).expect("in domain");
            lo = lo.min(d);
            hi = hi.max(d);
            count += 1;
        }
    }
    // whole streams too, where only the last segment may be cut short
    for seed in 0..40 {
        let ramp = (rng.random_range(0.02..0.9), rng.random_range(0.02..0.9));
        let audio = synth_test_signal(&SignalSpec::noise(ramp, rng.random_range(3.0..12.0), seed)).unwrap();
        let metas: Vec<SegmentMeta> = segment_stream(&audio, &cfg).unwrap().map(|s| s.meta()).collect();
        for m in &metas[..metas.len() - 1] {
            lo = lo.min(m.duration);
            hi = hi.max(m.duration);
            count += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = lo >= 0.65 - 1e-12 && hi <= 0.85 + 1e-12 && secs < 5.0;
    outcome(
        pass,
        format!("{count} durations in [{lo:.6}, {hi:.6}] (bounds [0.65, 0.85]), {secs:.2} s (limit 5 s)"),
    )
}

// criterion 3

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let source = synth_test_signal(&SignalSpec::tone(500.0, (0.1, 0.9), 80.0)).unwrap();
    let mut cfg = RunConfig {
        channel: ChannelConfig::clean(),
        compute: ComputeModel::proportional(0.5),
        seed: 3,
        ..RunConfig::default()
    };
    let nets = ChannelCodec::identity(cfg.codec.semantic_dim);
    let mut mean = |mode: SegmentationMode| {
        cfg.segmenter.mode = mode;
        let out = run_streaming(&source, &cfg, &nets).unwrap();
        let stats = average_latency(&out.log).unwrap();
        (stats.mean_segment_latency, out.log.entries.len())
    };
    let (fixed, n_fixed) = mean(SegmentationMode::Fixed);
    let (dynamic, n_dyn) = mean(SegmentationMode::Dynamic);
    let reduction = 100.0 * (1.0 - dynamic / fixed);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        (14.0..=19.5).contains(&reduction) && secs < 30.0,
        format!(
            "mean segment latency fixed {fixed:.4} s ({n_fixed} segments), dynamic {dynamic:.4} s ({n_dyn} segments): \
             {reduction:.2}% reduction (band 14-19.5%), {secs:.1} s (limit 30 s)"
        ),
    )
}

// criterion 4

fn random_metas(rng: &mut ChaCha8Rng) -> Vec<SegmentMeta> {
    let n = rng.random_range(2..200);
    let mut t = 0.0;
    (0..n)
        .map(|i| {
            let duration = rng.random_range(0.05..1.5);
            let m = SegmentMeta {
                index: i as u64,
                capture_start: t,
                duration,
                slope: 0.0,
                silent: rng.random_bool(0.1),
                samples: (duration * 16_000.0) as usize,
            };
            t += duration;
            m
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut logs = 0usize;
    for _ in 0..10_000 {
        let metas = random_metas(&mut rng);
        let lin = |rng: &mut ChaCha8Rng| LinearCost::new(rng.random_range(0.0..1.0), rng.random_range(0.0..0.1));
        let model = ComputeModel {
            device_compress: lin(&mut rng),
            edge_model: lin(&mut rng),
            edge_codec: rng.random_range(0.0..0.05),
            channel: rng.random_range(0.0..0.05),
            device_predict: lin(&mut rng),
        };
        let log = schedule(&metas, &model, rng.random_bool(0.8), rng.random_bool(0.5));
        if let Ok(s) = average_latency(&log) {
            worst = worst.max((s.average_latency - s.average_latency_telescoped).abs());
            logs += 1;
        }
    }
    outcome(worst <= 1e-12, format!("max |sum - telescoped| {worst:.2e} over {logs} logs (limit 1e-12)"))
}

// criterion 5

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f64> = (0..2_000_000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let s = map_to_symbols(&x).unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    for snr in [0.0, 10.0, 20.0] {
        let cfg = ChannelConfig { seed: 5, ..ChannelConfig::awgn(snr) };
        let y = transmit(&s, &cfg, &mut rng).unwrap().symbols;
        let noise: f64 = y
            .re
            .iter()
            .zip(&y.im)
            .zip(s.re.iter().zip(&s.im))
            .map(|((a, b), (c, d))| (a - c).powi(2) + (b - d).powi(2))
            .sum::<f64>()
            / s.len() as f64;
        let measured = 10.0 * (s.mean_power() / noise).log10();
        pass &= (measured - snr).abs() <= 0.1;
        details.push(format!("AWGN {snr} dB -> {measured:.3} dB"));
    }
    let ray = ChannelConfig::rayleigh(10.0);
    let gain: f64 = (0..1_000_000)
        .map(|_| ChannelDraw::sample(&ray, 0, &mut rng).gain.norm_sqr())
        .sum::<f64>()
        / 1e6;
    pass &= (0.99..=1.01).contains(&gain);
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 10.0;
    outcome(
        pass,
        format!(
            "{} at 1e6 symbols (tolerance 0.1 dB); Rayleigh mean |h|^2 {gain:.4} over 1e6 draws (band [0.99, 1.01]); {secs:.2} s",
            details.join(", ")
        ),
    )
}

// criterion 6

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut compared = 0usize;
    for net in 0..100 {
        let dim = rng.random_range(2..6);
        let hidden: Vec<usize> = (0..rng.random_range(0..3)).map(|_| rng.random_range(2..7)).collect();
        let shape = NetShape {
            semantic_dim: dim,
            hidden,
            symbol_budget: rng.random_range(1..5),
            linear: net % 4 == 0,
        };
        let (mut enc, mut dec) = shape.init_seeded(net).unwrap();
        for p in enc.params_mut().chain(dec.params_mut()) {
            *p += rng.random_range(-0.3..0.3);
        }
        let channel = match net % 3 {
            0 => ChannelConfig::clean(),
            1 => ChannelConfig::awgn(rng.random_range(0.0..20.0)),
            _ => ChannelConfig::rayleigh(rng.random_range(0.0..20.0)),
        };
        let f: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let draw = ChannelDraw::sample(&channel, shape.symbol_budget, &mut rng);
        let loss = |e: &DenseNetwork, d: &DenseNetwork| LossGraph::new(e, d, channel).forward(&f, &draw).unwrap();
        let (ge, gd) = {
            let mut g = LossGraph::new(&enc, &dec, channel);
            g.forward(&f, &draw).unwrap();
            g.backward(1.0).unwrap()
        };
        let mut check = |which: usize, analytic: Vec<f64>| {
            let count = if which == 0 { enc.param_count() } else { dec.param_count() };
            for (i, a) in analytic.iter().enumerate().take(count) {
                let h = 1e-6;
                let mut at = |delta: f64| {
                    let target = if which == 0 { &mut enc } else { &mut dec };
                    *target.params_mut().nth(i).unwrap() += delta;
                    let l = loss(&enc, &dec);
                    let target = if which == 0 { &mut enc } else { &mut dec };
                    *target.params_mut().nth(i).unwrap() -= delta;
                    l
                };
                let numeric = (at(h) - at(-h)) / (2.0 * h);
                let scale = a.abs().max(numeric.abs());
                // both sides at rounding level: the gradient is zero
                if scale < 1e-7 {
                    continue;
                }
                worst = worst.max((a - numeric).abs() / scale);
                compared += 1;
            }
        };
        check(0, ge.iter().copied().collect());
        check(1, gd.iter().copied().collect());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && secs < 30.0,
        format!("max relative error {worst:.2e} over {compared} parameters of 100 nets (limit 1e-4), {secs:.2} s"),
    )
}

// criterion 7

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let spec = CodecSpec {
        frame_len: 320,
        coeffs_kept: 64,
        semantic_dim: 64,
        span_frames: 43,
        projection_seed: 7,
        translator: Translator::Identity,
    };
    let codec = ReferenceCodec::new(spec).unwrap();
    let seg_cfg = SegmenterConfig::default();
    let mut corpus = Vec::new();
    for seed in 0..32 {
        let audio = synth_test_signal(&SignalSpec::noise((0.05, 0.5), 20.0, seed)).unwrap();
        corpus.extend(segment_stream(&audio, &seg_cfg).unwrap());
    }

    let linear = NetShape {
        linear: true,
        ..NetShape::default()
    };
    let (e, d) = linear.init_seeded(1).unwrap();
    let clean_cfg = TrainConfig {
        epochs: 1000,
        max_steps: Some(500),
        learning_rate: 3e-3,
        final_lr_fraction: 0.01,
        ..TrainConfig::default()
    };
    let clean = train(&codec, &ChannelConfig::clean(), &corpus, e, d, &clean_cfg).unwrap();
    let clean_db = clean.report.epochs.last().map(|e| e.val_nmse_db).unwrap();

    let (e, d) = NetShape::default().init_seeded(1).unwrap();
    let noisy_cfg = TrainConfig {
        epochs: 1000,
        ..TrainConfig::default()
    };
    let noisy = train(&codec, &ChannelConfig::awgn(18.0), &corpus, e, d, &noisy_cfg).unwrap();
    let ratio = noisy.report.initial_val_mse / noisy.report.final_val_mse();

    let secs = start.elapsed().as_secs_f64();
    outcome(
        clean_db <= -30.0 && clean.report.steps <= 500 && ratio >= 20.0 && noisy.report.converged && secs < 300.0,
        format!(
            "clean NMSE {clean_db:.2} dB after {} steps (limit -30 dB in 500); AWGN 18 dB MSE {:.3e} -> {:.3e}, \
             {ratio:.1}x lower (limit 20x), converged {} after {} epochs; {secs:.1} s (limit 300 s)",
            clean.report.steps,
            noisy.report.initial_val_mse,
            noisy.report.final_val_mse(),
            noisy.report.converged,
            noisy.report.epochs.len()
        ),
    )
}

// criterion 8

fn criterion_8() -> Outcome {
    let rate = 2000;
    let mut cfg = RunConfig {
        sample_rate: rate,
        channel: ChannelConfig::clean(),
        ..RunConfig::default()
    };
    let codec = CodecSpec {
        frame_len: 32,
        coeffs_kept: 32,
        translator: Translator::Identity,
        ..CodecSpec::default()
    }
    .with_span_for(cfg.max_segment_samples());
    cfg.codec = CodecSpec {
        semantic_dim: codec.span_len(),
        ..codec
    };
    let mut samples = synth_test_signal(&SignalSpec {
        sample_rate: rate,
        ..SignalSpec::noise((0.05, 0.95), 10.0, 8)
    })
    .unwrap()
    .into_samples();
    // a silent stretch in the middle
    samples[8000..11000].iter_mut().for_each(|s| *s = 0.0);
    let source = AudioBuffer::new(samples, rate).unwrap();
    let nets = ChannelCodec::identity(cfg.codec.semantic_dim);
    let out = run_streaming(&source, &cfg, &nets).unwrap();
    let err = source
        .samples()
        .iter()
        .zip(&out.aligned)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let same_len = out.aligned.len() == source.len();
    outcome(
        err < 1e-5 && same_len,
        format!(
            "max abs error {err:.2e} over {} samples (limit 1e-5), L = {}, {} silent segments",
            source.len(),
            cfg.codec.semantic_dim,
            out.log.skipped.len()
        ),
    )
}

// criterion 9

fn random_tensor(rng: &mut ChaCha8Rng, cols: u32) -> Tensor {
    let rows = rng.random_range(0..6);
    let values = (0..rows * cols).map(|_| rng.random_range(-1e3f32..1e3)).collect();
    Tensor::new(vec![rows, cols], values).unwrap()
}

fn random_message(rng: &mut ChaCha8Rng) -> Message {
    match rng.random_range(0..8) {
        0 => Message::Hello(Hello {
            version: rng.random(),
            role: Role::ALL[rng.random_range(0..4)],
            codec_digest: rng.random(),
        }),
        1 => Message::Config(SessionConfig {
            channel: ChannelConfig {
                kind: [ChannelKind::Clean, ChannelKind::Awgn, ChannelKind::Rayleigh][rng.random_range(0..3)],
                snr_db: rng.random_range(-20.0..40.0),
                equalize: rng.random(),
                seed: rng.random(),
            },
            codec: CodecSpec {
                frame_len: rng.random_range(1..1000),
                coeffs_kept: rng.random_range(1..1000),
                semantic_dim: rng.random_range(1..5000),
                span_frames: rng.random_range(1..100),
                projection_seed: rng.random(),
                translator: if rng.random() {
                    Translator::Identity
                } else {
                    Translator::Permutation { seed: rng.random() }
                },
            },
            sample_rate: rng.random(),
        }),
        2 | 4 => {
            let cols = rng.random_range(1..8);
            let f = FeatureFrame {
                t: rng.random(),
                frame_len: rng.random_range(1..1000),
                source_len: rng.random(),
                coeffs: random_tensor(rng, cols),
            };
            if rng.random() {
                Message::UploadFeatures(f)
            } else {
                Message::DownloadFeatures(f)
            }
        }
        3 => Message::LinkSymbols(LinkFrame {
            t: rng.random(),
            frames: rng.random(),
            source_len: rng.random(),
            power_scale: rng.random_range(0.0..10.0),
            padded: rng.random(),
            deep_fade: rng.random(),
            symbols: random_tensor(rng, 2),
        }),
        5 => Message::SegmentMeta(MetaFrame {
            t: rng.random(),
            duration: rng.random_range(0.0..2.0),
            capture_start: rng.random_range(0.0..1e4),
            slope: rng.random_range(-1.0..10.0),
            silent: rng.random(),
            samples: rng.random(),
        }),
        6 => Message::Eos,
        _ => Message::Error {
            code: rng.random(),
            text: (0..rng.random_range(0..30)).map(|_| rng.random_range('a'..='z')).collect(),
        },
    }
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut round_trip_failures = 0;
    let mut valid = Vec::new();
    for _ in 0..10_000 {
        let m = random_message(&mut rng);
        let bytes = encode_message(&m).unwrap();
        if decode_message(&bytes).ok().as_ref() != Some(&m) {
            round_trip_failures += 1;
        }
        if valid.len() < 256 {
            valid.push(bytes);
        }
    }

    // any panic inside the decoder aborts this process and fails the run
    let mut buf = vec![0u8; 1 << 20];
    let mut decoded_ok = 0usize;
    for case in 0..100_000usize {
        let len = match case % 1000 {
            0 => rng.random_range(0..=1 << 20),
            1..=30 => rng.random_range(0..65_536),
            _ => rng.random_range(0..300),
        };
        let bytes = &mut buf[..len];
        rng.fill_bytes(bytes);
        match case % 3 {
            0 if len >= HEADER_LEN => {
                bytes[..4].copy_from_slice(MAGIC);
                bytes[4] = PROTOCOL_VERSION;
                bytes[5] = rng.random_range(1..=8);
                bytes[6..10].copy_from_slice(&((len - HEADER_LEN) as u32).to_be_bytes());
            }
            1 => {
                let mut frame = valid[case % valid.len()].clone();
                let i = rng.random_range(0..frame.len());
                frame[i] = rng.random();
                frame.truncate(rng.random_range(0..=frame.len()));
                decoded_ok += decode_message(&frame).is_ok() as usize;
                continue;
            }
            _ => {}
        }
        decoded_ok += decode_message(bytes).is_ok() as usize;
    }

    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write(
        dir.path(),
        "cfg.toml",
        &common::LOSSLESS.replace("kind = \"clean\"", "kind = \"rayleigh\"\nsnr_db = 8.0"),
    );
    let input = common::write_wav(dir.path(), "in.wav", common::tone_1k(8.0));
    let local = dir.path().join("local");
    common::run_ok(
        common::lssc()
            .args(["run", "--identity", "-c"])
            .arg(&cfg)
            .arg("--input")
            .arg(&input)
            .arg("--out")
            .arg(&local)
            .arg("--dump-downloads")
            .arg(local.join("downloads.bin")),
    );
    let dist = dir.path().join("dist");
    let results = common::serve_chain(&cfg, &cfg, &input, &["--identity"], &dist);
    let all_ok = results.iter().all(|(_, o)| o.status.success());
    let a = std::fs::read(local.join("downloads.bin")).unwrap_or_default();
    let b = std::fs::read(dist.join("downloads.bin")).unwrap_or_default();
    let frames = {
        let mut n = 0;
        let mut pos = 0;
        while pos < a.len() {
            let (m, used) = decode_frame(&a[pos..]).unwrap();
            assert!(matches!(m, Message::DownloadFeatures(_)));
            pos += used;
            n += 1;
        }
        n
    };
    let identical = all_ok && !a.is_empty() && a == b;
    outcome(
        round_trip_failures == 0 && identical,
        format!(
            "{round_trip_failures} round-trip mismatches in 10^4 messages; 10^5 fuzz inputs decoded without a crash \
             ({decoded_ok} accepted); 4-process run {} with {frames} DOWNLOAD_FEATURES frames ({} bytes) {}",
            if all_ok { "completed" } else { "FAILED" },
            a.len(),
            if a == b { "byte-identical to in-process" } else { "DIFFERENT from in-process" }
        ),
    )
}

// criterion 10

fn criterion_10() -> Outcome {
    let mut cfg = RunConfig {
        sample_rate: 1000,
        channel: ChannelConfig::clean(),
        compute: ComputeModel::proportional(0.5),
        clock: ClockMode::Wall { time_scale: 0.1 },
        realtime_capture: true,
        ..RunConfig::default()
    };
    cfg.codec = CodecSpec {
        frame_len: 16,
        coeffs_kept: 4,
        semantic_dim: 32,
        ..CodecSpec::default()
    }
    .with_span_for(cfg.max_segment_samples());
    let source = synth_test_signal(&SignalSpec {
        sample_rate: 1000,
        ..SignalSpec::noise((0.2, 0.6), 12.0, 10)
    })
    .unwrap();
    let nets = ChannelCodec::identity(32);
    let mut wall = |pipelined: bool| {
        cfg.pipelined = pipelined;
        run_streaming(&source, &cfg, &nets).unwrap().wall_seconds
    };
    let pipelined = wall(true);
    let serialized = wall(false);
    let ratio = pipelined / serialized;
    outcome(
        ratio <= 0.75,
        format!("pipelined {pipelined:.3} s vs serialized {serialized:.3} s wall: ratio {ratio:.3} (limit 0.75)"),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "duration update matches high-precision oracle", criterion_1),
        (2, "dynamic durations confined", criterion_2),
        (3, "dynamic segmentation latency reduction", criterion_3),
        (4, "average latency telescoping identity", criterion_4),
        (5, "channel statistics", criterion_5),
        (6, "gradients match finite differences", criterion_6),
        (7, "channel codec training efficacy", criterion_7),
        (8, "end-to-end identity reconstruction", criterion_8),
        (9, "protocol safety and distributed fidelity", criterion_9),
        (10, "pipelining overlap", criterion_10),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        let r = check();
        println!(
            "{} criterion {n:>2}: {name}: {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
        failed += !r.pass as usize;
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
