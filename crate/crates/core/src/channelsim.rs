//! Real-to-complex symbol mapping and the impaired wireless hop
//! `y = h s + n` with block fading (one gain per transmission).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gains at or below this magnitude are not equalized.
pub const H_FLOOR: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("cannot map an empty vector to symbols")]
    Empty,
    #[error("SNR must be finite, got {0}")]
    Snr(f64),
    #[error("noise draw has {actual} samples for {expected} symbols")]
    DrawLength { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Clean,
    Awgn,
    Rayleigh,
}

impl std::str::FromStr for ChannelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "clean" => Ok(Self::Clean),
            "awgn" => Ok(Self::Awgn),
            "rayleigh" => Ok(Self::Rayleigh),
            other => Err(format!("unknown channel `{other}`")),
        }
    }
}

impl std::fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Clean => "clean",
            Self::Awgn => "awgn",
            Self::Rayleigh => "rayleigh",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    pub snr_db: f64,
    /// Divide by the known gain at the receiver (perfect CSI).
    pub equalize: bool,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            kind: ChannelKind::Awgn,
            snr_db: 10.0,
            equalize: true,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn clean() -> Self {
        Self {
            kind: ChannelKind::Clean,
            ..Self::default()
        }
    }

    pub fn awgn(snr_db: f64) -> Self {
        Self {
            kind: ChannelKind::Awgn,
            snr_db,
            ..Self::default()
        }
    }

    pub fn rayleigh(snr_db: f64) -> Self {
        Self {
            kind: ChannelKind::Rayleigh,
            snr_db,
            ..Self::default()
        }
    }

    /// Total complex noise variance per unit-power symbol.
    pub fn noise_variance(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.kind != ChannelKind::Clean && !self.snr_db.is_finite() {
            return Err(ChannelError::Snr(self.snr_db));
        }
        Ok(())
    }
}

/// Unit-average-power complex symbols and what is needed to undo the mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSymbols {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    /// Reals were divided by this to normalise power.
    pub power_scale: f64,
    /// An odd-length input was padded with one zero.
    pub padded: bool,
}

impl ComplexSymbols {
    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        if self.re.is_empty() {
            return 0.0;
        }
        let total: f64 = self.re.iter().zip(&self.im).map(|(a, b)| a * a + b * b).sum();
        total / self.re.len() as f64
    }
}

/// Pairs consecutive reals as `(re, im)` and scales to unit mean power.
pub fn map_to_symbols(x: &[f64]) -> Result<ComplexSymbols, ChannelError> {
    if x.is_empty() {
        return Err(ChannelError::Empty);
    }
    let count = x.len().div_ceil(2);
    let energy: f64 = x.iter().map(|v| v * v).sum();
    let power_scale = if energy > 0.0 {
        (energy / count as f64).sqrt()
    } else {
        1.0
    };
    let mut re = Vec::with_capacity(count);
    let mut im = Vec::with_capacity(count);
    for pair in x.chunks(2) {
        re.push(pair[0] / power_scale);
        im.push(pair.get(1).copied().unwrap_or(0.0) / power_scale);
    }
    Ok(ComplexSymbols {
        re,
        im,
        power_scale,
        padded: x.len() % 2 == 1,
    })
}

/// Inverse of [`map_to_symbols`].
pub fn demap(s: &ComplexSymbols) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * s.len());
    for (a, b) in s.re.iter().zip(&s.im) {
        out.push(a * s.power_scale);
        out.push(b * s.power_scale);
    }
    if s.padded {
        out.pop();
    }
    out
}

/// One realisation of the channel for a block of symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    pub gain: Complex64,
    pub noise: Vec<Complex64>,
}

impl ChannelDraw {
    pub fn sample<R: Rng + ?Sized>(cfg: &ChannelConfig, symbols: usize, rng: &mut R) -> Self {
        let gain = match cfg.kind {
            ChannelKind::Rayleigh => {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            }
            _ => Complex64::new(1.0, 0.0),
        };
        let noise = match cfg.kind {
            ChannelKind::Clean => vec![Complex64::new(0.0, 0.0); symbols],
            _ => {
                let sd = (cfg.noise_variance() / 2.0).sqrt();
                let normal = Normal::new(0.0, sd).expect("finite noise deviation");
                (0..symbols)
                    .map(|_| Complex64::new(normal.sample(rng), normal.sample(rng)))
                    .collect()
            }
        };
        Self { gain, noise }
    }

    /// The post-receiver channel written as `z = scale * s + offset`.
    pub fn effective(&self, cfg: &ChannelConfig) -> EffectiveChannel {
        let deep_fade = self.gain.norm() <= H_FLOOR;
        let equalized = cfg.equalize && cfg.kind == ChannelKind::Rayleigh && !deep_fade;
        let (scale, offset) = match cfg.kind {
            ChannelKind::Clean => (Complex64::new(1.0, 0.0), self.noise.iter().map(|_| Complex64::new(0.0, 0.0)).collect()),
            _ if equalized => (Complex64::new(1.0, 0.0), self.noise.iter().map(|n| n / self.gain).collect()),
            _ => (self.gain, self.noise.clone()),
        };
        EffectiveChannel {
            scale,
            offset,
            deep_fade: cfg.kind == ChannelKind::Rayleigh && deep_fade,
        }
    }
}

/// Linear form of a drawn channel after (optional) equalization.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    pub scale: Complex64,
    pub offset: Vec<Complex64>,
    pub deep_fade: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub symbols: ComplexSymbols,
    pub gain: Complex64,
    /// `|h| <= H_FLOOR`: output was passed on unequalized.
    pub deep_fade: bool,
}

/// Applies an existing draw.
pub fn apply_draw(
    s: &ComplexSymbols,
    draw: &ChannelDraw,
    cfg: &ChannelConfig,
) -> Result<Transmission, ChannelError> {
    if draw.noise.len() != s.len() {
        return Err(ChannelError::DrawLength {
            expected: s.len(),
            actual: draw.noise.len(),
        });
    }
    if cfg.kind == ChannelKind::Clean {
        return Ok(Transmission {
            symbols: s.clone(),
            gain: draw.gain,
            deep_fade: false,
        });
    }
    let h = draw.gain;
    let deep_fade = cfg.kind == ChannelKind::Rayleigh && h.norm() <= H_FLOOR;
    let equalize = cfg.equalize && cfg.kind == ChannelKind::Rayleigh && !deep_fade;
    let mut re = Vec::with_capacity(s.len());
    let mut im = Vec::with_capacity(s.len());
    for ((a, b), n) in s.re.iter().zip(&s.im).zip(&draw.noise) {
        let mut y = h * Complex64::new(*a, *b) + n;
        if equalize {
            y /= h;
        }
        re.push(y.re);
        im.push(y.im);
    }
    Ok(Transmission {
        symbols: ComplexSymbols {
            re,
            im,
            power_scale: s.power_scale,
            padded: s.padded,
        },
        gain: h,
        deep_fade,
    })
}

/// Draws `h` and `n` from `rng` and passes `s` through the channel.
pub fn transmit<R: Rng + ?Sized>(
    s: &ComplexSymbols,
    cfg: &ChannelConfig,
    rng: &mut R,
) -> Result<Transmission, ChannelError> {
    cfg.validate()?;
    let draw = ChannelDraw::sample(cfg, s.len(), rng);
    apply_draw(s, &draw, cfg)
}

/// Independent, order-free RNG stream for transmission `index`.
pub fn segment_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
