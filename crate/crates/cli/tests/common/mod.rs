#![allow(dead_code)]

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use lssc_core::audio::{synth_test_signal, write_wav_pcm16, AudioBuffer, SignalSpec};

pub const BIN: &str = env!("CARGO_BIN_EXE_lssc");

/// 1 kHz, K = frame_len and L = span length: the reference codec is
/// lossless, so identity networks over a clean channel reproduce the input.
pub const LOSSLESS: &str = r#"
seed = 3
[run]
sample_rate = 1000
[run.codec]
frame_len = 16
coeffs_kept = 16
semantic_dim = 864
span_frames = 54
[run.channel]
kind = "clean"
"#;

/// Small trainable setup on the same rate.
pub const SMALL: &str = r#"
seed = 3
[run]
sample_rate = 1000
[run.codec]
frame_len = 16
coeffs_kept = 4
semantic_dim = 32
span_frames = 54
[run.channel]
kind = "awgn"
snr_db = 10.0
[net]
hidden = [32]
symbol_budget = 16
[train]
epochs = 5
batch_size = 8
[[corpus.signals]]
kind = "noise"
amplitude_start = 0.05
amplitude_end = 0.5
duration_seconds = 12.0
seed = 1
sample_rate = 1000
"#;

pub fn lssc() -> Command {
    let mut c = Command::new(BIN);
    c.env_remove("LSSC_SEED");
    c
}

pub fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn lssc");
    assert!(
        out.status.success(),
        "lssc failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

pub fn write_wav(dir: &Path, name: &str, spec: SignalSpec) -> PathBuf {
    let audio = synth_test_signal(&spec).unwrap();
    write_audio(dir, name, &audio)
}

pub fn write_audio(dir: &Path, name: &str, audio: &AudioBuffer) -> PathBuf {
    let p = dir.join(name);
    write_wav_pcm16(&p, audio).unwrap();
    p
}

pub fn tone_1k(seconds: f64) -> SignalSpec {
    SignalSpec {
        sample_rate: 1000,
        ..SignalSpec::tone(50.0, (0.1, 0.9), seconds)
    }
}

pub fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn wait_all(children: Vec<(&'static str, Child)>, limit: Duration) -> Vec<(&'static str, Output)> {
    let deadline = Instant::now() + limit;
    let mut children = children;
    loop {
        let done = children
            .iter_mut()
            .all(|(_, c)| c.try_wait().map(|s| s.is_some()).unwrap_or(true));
        if done || Instant::now() > deadline {
            break;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    children
        .into_iter()
        .map(|(name, mut c)| {
            let _ = c.kill();
            (name, c.wait_with_output().unwrap())
        })
        .collect()
}

/// Four `lssc serve` processes wired in a chain on loopback. Returns the
/// exit outputs keyed by role.
pub fn serve_chain(
    config_tx: &Path,
    config_rest: &Path,
    input: &Path,
    net_flag: &[&str],
    out: &Path,
) -> Vec<(&'static str, Output)> {
    let (p_tx, p_a, p_b) = (free_port(), free_port(), free_port());
    let addr = |p: u16| format!("127.0.0.1:{p}");
    let spawn = |args: Vec<String>| {
        lssc()
            .args(args)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .expect("spawn lssc serve")
    };
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let mut rx_args = s(&["serve", "--role", "device_rx", "--timeout", "20", "--config"]);
    rx_args.push(config_rest.display().to_string());
    rx_args.extend(s(&["--upstream", &addr(p_b), "--out"]));
    rx_args.push(out.display().to_string());
    rx_args.extend(s(&["--reference", &input.display().to_string()]));
    rx_args.extend(s(&["--dump-downloads", &out.join("downloads.bin").display().to_string()]));

    let relay = |role: &str, up: u16, listen: u16| {
        let mut a = s(&["serve", "--role", role, "--timeout", "20", "--config"]);
        a.push(config_rest.display().to_string());
        a.extend(s(&["--upstream", &addr(up), "--listen", &addr(listen)]));
        a.extend(s(net_flag));
        a
    };
    let mut tx_args = s(&["serve", "--role", "device_tx", "--timeout", "20", "--config"]);
    tx_args.push(config_tx.display().to_string());
    tx_args.extend(s(&["--listen", &addr(p_tx), "--input", &input.display().to_string()]));

    // start downstream first so every role exercises connect retries
    let children = vec![
        ("device_rx", spawn(rx_args)),
        ("edge_b", spawn(relay("edge_b", p_a, p_b))),
        ("edge_a", spawn(relay("edge_a", p_tx, p_a))),
        ("device_tx", spawn(tx_args)),
    ];
    wait_all(children, Duration::from_secs(60))
}
