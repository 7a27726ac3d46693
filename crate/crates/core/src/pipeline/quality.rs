//! Reconstruction quality of the translated stream against its source.
//! Only meaningful with the identity translator.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use super::PipelineError;

/// Reported in place of an infinite SNR.
pub const SNR_CAP_DB: f64 = 120.0;
const LSD_FRAME: usize = 512;
const LSD_HOP: usize = 256;
const POWER_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quality {
    /// Mean log-spectral distance over frames, dB (0 is identical).
    pub lsd_db: f64,
    /// `10 log10(sum s^2 / sum (s - y)^2)`, capped at [`SNR_CAP_DB`].
    pub recon_snr_db: f64,
}

/// Compares `translated` to `source` sample by sample. Lengths may differ by
/// at most `tolerance` samples; the shorter signal is zero-extended.
pub fn quality_proxy(source: &[f64], translated: &[f64], tolerance: usize) -> Result<Quality, PipelineError> {
    if source.len().abs_diff(translated.len()) > tolerance {
        return Err(PipelineError::Length {
            expected: source.len(),
            translated: translated.len(),
            tolerance,
        });
    }
    let n = source.len().max(translated.len());
    let at = |x: &[f64], i: usize| x.get(i).copied().unwrap_or(0.0);
    let (mut signal, mut error) = (0.0, 0.0);
    for i in 0..n {
        let s = at(source, i);
        signal += s * s;
        error += (s - at(translated, i)).powi(2);
    }
    let recon_snr_db = if error == 0.0 {
        SNR_CAP_DB
    } else if signal == 0.0 {
        -SNR_CAP_DB
    } else {
        (10.0 * (signal / error).log10()).min(SNR_CAP_DB)
    };
    Ok(Quality {
        lsd_db: log_spectral_distance(source, translated, n),
        recon_snr_db,
    })
}

fn log_spectral_distance(a: &[f64], b: &[f64], n: usize) -> f64 {
    let frame = LSD_FRAME.min(n.max(1));
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame);
    let window: Vec<f64> = (0..frame)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / frame as f64).cos())
        .collect();
    let bins = frame / 2 + 1;
    let spectrum = |x: &[f64], start: usize| -> Vec<f64> {
        let mut buf: Vec<Complex64> = (0..frame)
            .map(|i| Complex64::new(x.get(start + i).copied().unwrap_or(0.0) * window[i], 0.0))
            .collect();
        fft.process(&mut buf);
        buf[..bins].iter().map(|c| 10.0 * (c.norm_sqr() + POWER_FLOOR).log10()).collect()
    };
    let mut total = 0.0;
    let mut frames = 0usize;
    let mut start = 0;
    while start < n {
        let (sa, sb) = (spectrum(a, start), spectrum(b, start));
        let mean_sq = sa.iter().zip(&sb).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / bins as f64;
        total += mean_sq.sqrt();
        frames += 1;
        if start + frame >= n {
            break;
        }
        start += LSD_HOP;
    }
    if frames == 0 {
        0.0
    } else {
        total / frames as f64
    }
}
