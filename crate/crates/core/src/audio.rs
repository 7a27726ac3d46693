//! Mono PCM buffers, WAV I/O, synthetic test signals and short-time RMS.

use std::io::{Read, Seek, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV: {0}")]
    Malformed(String),
    #[error("unsupported WAV encoding: {0}")]
    Unsupported(String),
    #[error("audio contains no samples")]
    Empty,
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("segment of {samples} samples is shorter than one {frame}-sample frame")]
    TooShort { samples: usize, frame: usize },
    #[error("invalid envelope parameters: frame {frame_seconds}s, hop {hop_seconds}s")]
    BadEnvelopeParams { frame_seconds: f64, hop_seconds: f64 },
    #[error("invalid signal spec: {0}")]
    BadSignal(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<hound::Error> for AudioError {
    fn from(err: hound::Error) -> Self {
        match err {
            hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                AudioError::Malformed("unexpected end of file".into())
            }
            hound::Error::IoError(e) => AudioError::Io(e),
            hound::Error::FormatError(msg) => AudioError::Malformed(msg.into()),
            hound::Error::Unsupported => AudioError::Unsupported("unsupported format".into()),
            other => AudioError::Malformed(other.to_string()),
        }
    }
}

/// A mono buffer of samples nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite { index });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn empty(sample_rate: u32) -> Self {
        Self {
            samples: Vec::new(),
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a RIFF/WAVE file, averaging channels down to mono.
///
/// Integer PCM is scaled by `1 / 2^(bits-1)`, so 16-bit `+32767` maps to
/// `32767 / 32768`. The stored sample rate is reported as-is.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let reader = hound::WavReader::open(path)?;
    decode_wav(reader)
}

pub fn read_wav<R: Read>(reader: R) -> Result<AudioBuffer, AudioError> {
    decode_wav(hound::WavReader::new(reader)?)
}

fn decode_wav<R: Read>(reader: hound::WavReader<R>) -> Result<AudioBuffer, AudioError> {
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(AudioError::Malformed("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()?,
        (format, bits) => {
            return Err(AudioError::Unsupported(format!(
                "{bits}-bit {format:?}; expected 16-bit PCM or 32-bit float"
            )))
        }
    };
    if interleaved.is_empty() {
        return Err(AudioError::Empty);
    }
    let mono = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioBuffer::new(mono, spec.sample_rate)
}

/// Writes 16-bit PCM mono. Samples are clamped to the representable range.
pub fn write_wav_pcm16(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<(), AudioError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    encode_wav_pcm16(file, audio)
}

pub fn encode_wav_pcm16<W: Write + Seek>(writer: W, audio: &AudioBuffer) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut wav = hound::WavWriter::new(writer, spec)?;
    for &s in &audio.samples {
        wav.write_sample(pcm16(s))?;
    }
    wav.finalize()?;
    Ok(())
}

fn pcm16(sample: f64) -> i16 {
    (sample * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Short-time analysis window, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvelopeParams {
    pub frame_seconds: f64,
    pub hop_seconds: f64,
}

impl Default for EnvelopeParams {
    fn default() -> Self {
        Self {
            frame_seconds: 0.020,
            hop_seconds: 0.010,
        }
    }
}

impl EnvelopeParams {
    /// Frame and hop lengths in samples at `sample_rate`.
    pub fn lengths(&self, sample_rate: u32) -> Result<(usize, usize), AudioError> {
        let bad = || AudioError::BadEnvelopeParams {
            frame_seconds: self.frame_seconds,
            hop_seconds: self.hop_seconds,
        };
        if !(self.hop_seconds > 0.0 && self.frame_seconds >= self.hop_seconds) {
            return Err(bad());
        }
        let frame = (self.frame_seconds * sample_rate as f64).round() as usize;
        let hop = (self.hop_seconds * sample_rate as f64).round() as usize;
        if hop == 0 || frame < hop {
            return Err(bad());
        }
        Ok((frame, hop))
    }
}

/// Per-frame RMS amplitude of a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub values: Vec<f64>,
    pub frame_seconds: f64,
    pub hop_seconds: f64,
}

impl Envelope {
    /// Centre time of frame `i`, relative to the segment start.
    pub fn frame_center(&self, i: usize) -> f64 {
        i as f64 * self.hop_seconds + 0.5 * self.frame_seconds
    }
}

/// Computes `sqrt(mean(x^2))` over frames starting at multiples of the hop.
/// A trailing partial frame is dropped.
pub fn rms_envelope(
    samples: &[f64],
    sample_rate: u32,
    params: EnvelopeParams,
) -> Result<Envelope, AudioError> {
    let (frame, hop) = params.lengths(sample_rate)?;
    if samples.len() < frame {
        return Err(AudioError::TooShort {
            samples: samples.len(),
            frame,
        });
    }
    let count = (samples.len() - frame) / hop + 1;
    let values = (0..count)
        .map(|i| rms(&samples[i * hop..i * hop + frame]))
        .collect();
    Ok(Envelope {
        values,
        frame_seconds: frame as f64 / sample_rate as f64,
        hop_seconds: hop as f64 / sample_rate as f64,
    })
}

pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SignalKind {
    Tone { frequency_hz: f64 },
    Noise,
}

/// Recipe for a deterministic synthetic signal whose amplitude ramps
/// linearly from `amplitude_start` to `amplitude_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    #[serde(flatten)]
    pub kind: SignalKind,
    pub amplitude_start: f64,
    pub amplitude_end: f64,
    pub duration_seconds: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
}

fn default_rate() -> u32 {
    DEFAULT_SAMPLE_RATE
}

impl SignalSpec {
    pub fn tone(frequency_hz: f64, ramp: (f64, f64), duration_seconds: f64) -> Self {
        Self {
            kind: SignalKind::Tone { frequency_hz },
            amplitude_start: ramp.0,
            amplitude_end: ramp.1,
            duration_seconds,
            seed: 0,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }

    pub fn noise(ramp: (f64, f64), duration_seconds: f64, seed: u64) -> Self {
        Self {
            kind: SignalKind::Noise,
            amplitude_start: ramp.0,
            amplitude_end: ramp.1,
            duration_seconds,
            seed,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

/// Generates the signal described by `spec`. Tones are sinusoids scaled
/// by the ramp; noise is uniform on `[-a(t), a(t)]`.
pub fn synth_test_signal(spec: &SignalSpec) -> Result<AudioBuffer, AudioError> {
    let amp_ok = |a: f64| (0.0..=1.0).contains(&a);
    if !(spec.duration_seconds > 0.0 && spec.duration_seconds.is_finite()) {
        return Err(AudioError::BadSignal("duration must be positive".into()));
    }
    if !amp_ok(spec.amplitude_start) || !amp_ok(spec.amplitude_end) {
        return Err(AudioError::BadSignal("amplitudes must lie in [0, 1]".into()));
    }
    if spec.sample_rate == 0 {
        return Err(AudioError::ZeroSampleRate);
    }
    let rate = spec.sample_rate as f64;
    let len = (spec.duration_seconds * rate).round() as usize;
    let ramp = |i: usize| {
        let frac = if len > 1 {
            i as f64 / (len - 1) as f64
        } else {
            0.0
        };
        spec.amplitude_start + (spec.amplitude_end - spec.amplitude_start) * frac
    };
    let samples = match spec.kind {
        SignalKind::Tone { frequency_hz } => (0..len)
            .map(|i| {
                let phase = 2.0 * std::f64::consts::PI * frequency_hz * i as f64 / rate;
                ramp(i) * phase.sin()
            })
            .collect(),
        SignalKind::Noise => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            (0..len)
                .map(|i| ramp(i) * rng.random_range(-1.0..=1.0))
                .collect()
        }
    };
    AudioBuffer::new(samples, spec.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn wav_bytes(spec: hound::WavSpec, write: impl FnOnce(&mut hound::WavWriter<&mut Cursor<Vec<u8>>>)) -> Vec<u8> {
        let mut cursor = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
            write(&mut w);
            w.finalize().unwrap();
        }
        cursor.into_inner()
    }

    fn pcm16_spec(channels: u16) -> hound::WavSpec {
        hound::WavSpec {
            channels,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        }
    }

    #[test]
    fn pcm16_full_scale_positive() {
        let bytes = wav_bytes(pcm16_spec(1), |w| w.write_sample(32767i16).unwrap());
        let audio = read_wav(Cursor::new(bytes)).unwrap();
        assert_eq!(audio.samples(), &[32767.0 / 32768.0]);
    }

    #[test]
    fn zero_file_is_one_second_of_silence() {
        let bytes = wav_bytes(pcm16_spec(1), |w| {
            for _ in 0..16_000 {
                w.write_sample(0i16).unwrap();
            }
        });
        let audio = read_wav(Cursor::new(bytes)).unwrap();
        assert_eq!(audio.duration_seconds(), 1.0);
        assert!(audio.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn stereo_opposites_average_to_zero() {
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8_000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let bytes = wav_bytes(spec, |w| {
            for _ in 0..100 {
                w.write_sample(0.5f32).unwrap();
                w.write_sample(-0.5f32).unwrap();
            }
        });
        let audio = read_wav(Cursor::new(bytes)).unwrap();
        assert_eq!(audio.len(), 100);
        assert_eq!(audio.sample_rate(), 8_000);
        assert!(audio.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn wav_errors() {
        assert!(matches!(
            read_wav(Cursor::new(b"RIFX\0\0\0\0WAVEjunk".to_vec())),
            Err(AudioError::Malformed(_))
        ));
        let spec = hound::WavSpec {
            bits_per_sample: 24,
            ..pcm16_spec(1)
        };
        let bytes = wav_bytes(spec, |w| w.write_sample(1i32).unwrap());
        assert!(matches!(
            read_wav(Cursor::new(bytes)),
            Err(AudioError::Unsupported(_))
        ));
        let bytes = wav_bytes(pcm16_spec(1), |_| {});
        assert!(matches!(read_wav(Cursor::new(bytes)), Err(AudioError::Empty)));
    }

    #[test]
    fn envelope_of_constant_and_zero() {
        let constant = vec![0.3; 1600];
        let env = rms_envelope(&constant, 16_000, EnvelopeParams::default()).unwrap();
        assert!(env.values.iter().all(|v| (v - 0.3).abs() < 1e-12));
        let zeros = vec![0.0; 1600];
        let env = rms_envelope(&zeros, 16_000, EnvelopeParams::default()).unwrap();
        assert!(env.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn envelope_of_unit_sine() {
        let tone = synth_test_signal(&SignalSpec::tone(1000.0, (1.0, 1.0), 0.5)).unwrap();
        let env = rms_envelope(tone.samples(), 16_000, EnvelopeParams::default()).unwrap();
        for v in env.values {
            assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn envelope_rejects_short_segment() {
        let err = rms_envelope(&[0.0; 100], 16_000, EnvelopeParams::default()).unwrap_err();
        assert!(matches!(err, AudioError::TooShort { frame: 320, .. }));
    }

    #[test]
    fn synth_zero_tone_and_determinism() {
        let silent = synth_test_signal(&SignalSpec::tone(440.0, (0.0, 0.0), 0.25)).unwrap();
        assert!(silent.samples().iter().all(|&s| s == 0.0));

        let spec = SignalSpec::noise((0.1, 0.6), 0.3, 17);
        let a = synth_test_signal(&spec).unwrap();
        let b = synth_test_signal(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ramped_tone_envelope_rises() {
        let tone = synth_test_signal(&SignalSpec::tone(500.0, (0.2, 0.4), 1.0)).unwrap();
        let env = rms_envelope(tone.samples(), 16_000, EnvelopeParams::default()).unwrap();
        let n = env.values.len() as f64;
        let t_mean = (0..env.values.len()).map(|i| env.frame_center(i)).sum::<f64>() / n;
        let v_mean = env.values.iter().sum::<f64>() / n;
        let cov: f64 = env
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| (env.frame_center(i) - t_mean) * (v - v_mean))
            .sum();
        assert!(cov > 0.0);
    }

    #[test]
    fn synth_rejects_bad_specs() {
        assert!(synth_test_signal(&SignalSpec::tone(440.0, (0.0, 1.5), 1.0)).is_err());
        assert!(synth_test_signal(&SignalSpec::tone(440.0, (0.0, 1.0), 0.0)).is_err());
    }

    #[test]
    fn pcm16_round_trip_is_bit_exact() {
        let ints: Vec<i16> = (-400..400).map(|i| (i * 81) as i16).chain([i16::MIN, i16::MAX]).collect();
        let bytes = wav_bytes(pcm16_spec(1), |w| {
            for &v in &ints {
                w.write_sample(v).unwrap();
            }
        });
        let audio = read_wav(Cursor::new(bytes.clone())).unwrap();
        let mut out = Cursor::new(Vec::new());
        encode_wav_pcm16(&mut out, &audio).unwrap();
        assert_eq!(out.into_inner(), bytes);
    }

    proptest! {
        #[test]
        fn envelope_length_formula(len in 320usize..5000, frame in 1usize..400, hop_frac in 0.05f64..=1.0) {
            let hop = ((frame as f64 * hop_frac).round() as usize).max(1);
            let rate = 16_000u32;
            let params = EnvelopeParams {
                frame_seconds: frame as f64 / rate as f64,
                hop_seconds: hop as f64 / rate as f64,
            };
            let samples = vec![0.1; len];
            let env = rms_envelope(&samples, rate, params);
            if len < frame {
                prop_assert!(env.is_err());
            } else {
                prop_assert_eq!(env.unwrap().values.len(), (len - frame) / hop + 1);
            }
        }

        #[test]
        fn envelope_scale_equivariant(seed in any::<u64>(), c in -5.0f64..5.0) {
            let x = synth_test_signal(&SignalSpec::noise((0.2, 0.9), 0.1, seed)).unwrap();
            let scaled: Vec<f64> = x.samples().iter().map(|s| c * s).collect();
            let p = EnvelopeParams::default();
            let e1 = rms_envelope(x.samples(), 16_000, p).unwrap();
            let e2 = rms_envelope(&scaled, 16_000, p).unwrap();
            for (a, b) in e1.values.iter().zip(&e2.values) {
                let expect = c.abs() * a;
                prop_assert!((b - expect).abs() <= 1e-9 * expect.abs().max(1e-300));
            }
        }
    }
}
