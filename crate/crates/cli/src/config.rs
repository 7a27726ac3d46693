use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use lssc_core::audio::{synth_test_signal, AudioBuffer, SignalSpec};
use lssc_core::neuralcodec::{NetShape, TrainConfig, CHECKPOINT_VERSION};
use lssc_core::pipeline::{RunConfig, SUMMARY_SCHEMA};
use lssc_core::transport::PROTOCOL_VERSION;
use serde::{Deserialize, Serialize};

use crate::Usage;

pub const MANIFEST_SCHEMA: &str = "lssc.manifest.v1";

/// Training corpus: a directory of WAV files, or synthetic signals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub dir: Option<PathBuf>,
    pub signals: Vec<SignalSpec>,
}

/// Everything a command reads from its TOML file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub run: RunConfig,
    pub train: TrainConfig,
    pub net: NetShape,
    pub corpus: CorpusConfig,
    /// Input used by `run`, `sweep` and `serve --role device_tx` when no WAV is given.
    pub source: Option<SignalSpec>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Usage(format!("invalid config {}: {e}", path.display())).into())
    }

    /// Applies the seed precedence (flag or LSSC_SEED, then file, then 0)
    /// to every seeded component.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> u64 {
        let seed = flag.or(self.seed).unwrap_or(0);
        self.seed = Some(seed);
        self.run.seed = seed;
        self.train.seed = seed;
        seed
    }

    pub fn validate_run(&self) -> anyhow::Result<()> {
        self.run.validate().map_err(|e| Usage(e.to_string()))?;
        Ok(())
    }

    /// The audio to process: `input` if given, else the configured or
    /// default synthetic source.
    pub fn source_audio(&self, input: Option<&Path>) -> anyhow::Result<AudioBuffer> {
        let audio = match input {
            Some(path) => {
                if !path.exists() {
                    return Err(Usage(format!("input {} does not exist", path.display())).into());
                }
                lssc_core::audio::load_wav(path).with_context(|| format!("reading {}", path.display()))?
            }
            None => {
                // 500 Hz at 16 kHz; scaled so low rates stay well below Nyquist
                let rate = self.run.sample_rate;
                let spec = self.source.unwrap_or_else(|| SignalSpec {
                    sample_rate: rate,
                    ..SignalSpec::tone(rate as f64 / 32.0, (0.1, 0.9), 20.0)
                });
                synth_test_signal(&spec).map_err(|e| Usage(format!("source: {e}")))?
            }
        };
        if audio.sample_rate() != self.run.sample_rate {
            return Err(Usage(format!(
                "input is sampled at {} Hz but run.sample_rate is {}",
                audio.sample_rate(),
                self.run.sample_rate
            ))
            .into());
        }
        Ok(audio)
    }
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub lssc: &'static str,
    pub protocol: u8,
    pub checkpoint_format: u8,
    pub summary_schema: &'static str,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            lssc: env!("CARGO_PKG_VERSION"),
            protocol: PROTOCOL_VERSION,
            checkpoint_format: CHECKPOINT_VERSION,
            summary_schema: SUMMARY_SCHEMA,
        }
    }
}

/// Written as `manifest.json` by every command with an output directory.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub schema: &'static str,
    pub command: &'a str,
    pub config_path: Option<&'a Path>,
    pub seed: u64,
    pub out_dir: &'a Path,
    /// Input files, by role (`input`, `checkpoint`, ...).
    pub inputs: BTreeMap<&'static str, PathBuf>,
    pub config: &'a FileConfig,
    pub versions: Versions,
}

impl RunManifest<'_> {
    pub fn write(&self) -> anyhow::Result<()> {
        crate::output::write_json(&self.out_dir.join("manifest.json"), self)
    }
}
