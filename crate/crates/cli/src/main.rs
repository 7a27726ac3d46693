//! `lssc`: train channel codecs, run the streaming pipeline in-process or
//! across four processes, sweep SNRs and inspect segmentation.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.

mod commands;
mod config;
mod output;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lssc_core::channelsim::ChannelKind;
use lssc_core::segmenter::SegmentationMode;
use lssc_core::transport::Role;

/// Error caused by how the tool was invoked; exits with code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug, Parser)]
#[command(name = "lssc", version, about = "Streaming speech semantic communication over simulated wireless links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the channel encoder and decoder; writes an LSSCNET checkpoint.
    Train(TrainArgs),
    /// Stream one input through the whole pipeline in this process.
    Run(RunArgs),
    /// Run the pipeline over a grid of SNRs, channels, modes and seeds.
    Sweep(SweepArgs),
    /// Print or save the segmentation table of a WAV file.
    Segment(SegmentArgs),
    /// Run one role of a distributed pipeline over TCP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Seed for channel draws and training (overrides the file).
    #[arg(long, env = "LSSC_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ChannelArgs {
    /// clean, awgn or rayleigh.
    #[arg(long)]
    pub channel: Option<ChannelKind>,
    /// Channel SNR in dB.
    #[arg(long, allow_negative_numbers = true)]
    pub snr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct NetArgs {
    /// Channel codec checkpoint written by `lssc train`.
    #[arg(long, conflicts_with = "identity")]
    pub checkpoint: Option<PathBuf>,
    /// Use pass-through channel codec networks instead of a checkpoint.
    #[arg(long)]
    pub identity: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of training WAV files (overrides `corpus.dir`).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Input WAV; defaults to the configured synthetic source.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<SegmentationMode>,
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[command(flatten)]
    pub net: NetArgs,
    /// Process each segment before capturing the next.
    #[arg(long)]
    pub serialized: bool,
    /// Treat the whole input as available at once.
    #[arg(long)]
    pub no_realtime: bool,
    /// Run on the wall clock, one stream second lasting this many seconds.
    #[arg(long)]
    pub time_scale: Option<f64>,
    /// Also save the DOWNLOAD_FEATURES frames to this file.
    #[arg(long)]
    pub dump_downloads: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `start:stop:step` (inclusive) or a comma list, in dB.
    #[arg(long, allow_hyphen_values = true)]
    pub snr_list: String,
    #[arg(long, value_delimiter = ',', default_value = "awgn")]
    pub channels: Vec<ChannelKind>,
    #[arg(long, value_delimiter = ',', default_value = "fixed,dynamic")]
    pub modes: Vec<SegmentationMode>,
    /// Seeds to run; defaults to the resolved seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeChoice {
    Fixed,
    Dynamic,
    Both,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "dynamic")]
    pub mode: ModeChoice,
    /// Write the table here instead of standard output.
    #[arg(long)]
    pub emit_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// device_tx, edge_a, edge_b or device_rx.
    #[arg(long)]
    pub role: Role,
    /// Address to accept the downstream role on (all roles but device_rx).
    #[arg(long)]
    pub listen: Option<String>,
    /// Address of the upstream role (all roles but device_tx).
    #[arg(long)]
    pub upstream: Option<String>,
    /// Seconds to wait for a peer to connect or accept.
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
    /// device_tx: input WAV; defaults to the configured synthetic source.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub net: NetArgs,
    /// device_rx: output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// device_rx: source WAV for the quality proxy.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// device_rx: save the received DOWNLOAD_FEATURES frames here.
    #[arg(long)]
    pub dump_downloads: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Run(a) => commands::run(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Segment(a) => commands::segment(a),
        Command::Serve(a) => serve::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lssc: error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
