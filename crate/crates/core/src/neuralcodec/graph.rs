//! One training example as a differentiable graph:
//! `features -> encoder -> map/normalise -> channel -> demap -> decoder -> MSE`.
//!
//! For a drawn channel the received reals are `r = H x + c(x) m`, where `H`
//! is complex multiplication by the effective gain (identity after
//! equalization), `m` is the interleaved effective noise and
//! `c(x) = sqrt(|x|^2 / symbols)` is the power normalisation. Noise and
//! gain are constants of the step; `c(x)` is differentiated.

use num_complex::Complex64;

use super::network::{DenseNetwork, Gradients, Trace};
use super::NetError;
use crate::channelsim::{ChannelConfig, ChannelDraw};

/// `(1/L) sum (f - f_hat)^2`.
pub fn mse_loss(f: &[f64], f_hat: &[f64]) -> Result<f64, NetError> {
    if f.len() != f_hat.len() {
        return Err(NetError::Dim {
            expected: f.len(),
            actual: f_hat.len(),
        });
    }
    if f.is_empty() {
        return Ok(0.0);
    }
    Ok(f.iter().zip(f_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / f.len() as f64)
}

/// `d mse / d f_hat`.
pub fn mse_grad(f: &[f64], f_hat: &[f64]) -> Vec<f64> {
    let scale = 2.0 / f.len() as f64;
    f.iter().zip(f_hat).map(|(a, b)| scale * (b - a)).collect()
}

#[derive(Debug, Clone)]
struct LinkTape {
    x: Vec<f64>,
    scale: Complex64,
    noise: Vec<f64>,
    power_scale: f64,
    symbols: usize,
    energy: f64,
}

impl LinkTape {
    fn forward(x: Vec<f64>, draw: &ChannelDraw, cfg: &ChannelConfig) -> Result<(Self, Vec<f64>), NetError> {
        let symbols = x.len().div_ceil(2);
        if draw.noise.len() != symbols {
            return Err(NetError::Dim {
                expected: symbols,
                actual: draw.noise.len(),
            });
        }
        let eff = draw.effective(cfg);
        let energy: f64 = x.iter().map(|v| v * v).sum();
        let power_scale = if energy > 0.0 {
            (energy / symbols as f64).sqrt()
        } else {
            1.0
        };
        let noise: Vec<f64> = eff
            .offset
            .iter()
            .flat_map(|n| [n.re, n.im])
            .take(x.len())
            .collect();
        let mut r = Vec::with_capacity(x.len());
        for (j, pair) in x.chunks(2).enumerate() {
            let z = eff.scale * Complex64::new(pair[0], pair.get(1).copied().unwrap_or(0.0));
            r.push(z.re + power_scale * noise[2 * j]);
            if pair.len() == 2 {
                r.push(z.im + power_scale * noise[2 * j + 1]);
            }
        }
        let tape = Self {
            x,
            scale: eff.scale,
            noise,
            power_scale,
            symbols,
            energy,
        };
        Ok((tape, r))
    }

    fn backward(&self, g: &[f64]) -> Vec<f64> {
        let (a, b) = (self.scale.re, self.scale.im);
        let mut gx = vec![0.0; g.len()];
        // transpose of [[a, -b], [b, a]]; a padded imaginary part has no
        // output, so its gradient is zero
        for j in 0..self.symbols {
            let g_re = g[2 * j];
            let g_im = g.get(2 * j + 1).copied().unwrap_or(0.0);
            gx[2 * j] = a * g_re + b * g_im;
            if 2 * j + 1 < g.len() {
                gx[2 * j + 1] = -b * g_re + a * g_im;
            }
        }
        if self.energy > 0.0 {
            let g_noise: f64 = g.iter().zip(&self.noise).map(|(u, v)| u * v).sum();
            let k = g_noise / (self.symbols as f64 * self.power_scale);
            for (gv, xv) in gx.iter_mut().zip(&self.x) {
                *gv += k * xv;
            }
        }
        gx
    }
}

#[derive(Debug, Clone)]
struct Tape {
    target: Vec<f64>,
    encoder: Trace,
    link: LinkTape,
    decoder: Trace,
}

/// Records one forward pass so [`LossGraph::backward`] can return exact
/// gradients for both networks.
#[derive(Debug)]
pub struct LossGraph<'a> {
    encoder: &'a DenseNetwork,
    decoder: &'a DenseNetwork,
    channel: ChannelConfig,
    tape: Option<Tape>,
}

impl<'a> LossGraph<'a> {
    pub fn new(encoder: &'a DenseNetwork, decoder: &'a DenseNetwork, channel: ChannelConfig) -> Self {
        Self {
            encoder,
            decoder,
            channel,
            tape: None,
        }
    }

    /// Runs the example and returns its loss.
    pub fn forward(&mut self, features: &[f64], draw: &ChannelDraw) -> Result<f64, NetError> {
        let encoder = self.encoder.forward_trace(features)?;
        let (link, received) = LinkTape::forward(encoder.output.clone(), draw, &self.channel)?;
        let decoder = self.decoder.forward_trace(&received)?;
        let loss = mse_loss(features, &decoder.output)?;
        self.tape = Some(Tape {
            target: features.to_vec(),
            encoder,
            link,
            decoder,
        });
        Ok(loss)
    }

    pub fn output(&self) -> Option<&[f64]> {
        self.tape.as_ref().map(|t| t.decoder.output.as_slice())
    }

    /// Gradients of `loss_scale * loss`, accumulated into `(enc, dec)`.
    pub fn backward_into(
        &self,
        loss_scale: f64,
        enc: &mut Gradients,
        dec: &mut Gradients,
    ) -> Result<(), NetError> {
        let tape = self.tape.as_ref().ok_or(NetError::NotForwarded)?;
        let mut g = mse_grad(&tape.target, &tape.decoder.output);
        g.iter_mut().for_each(|v| *v *= loss_scale);
        let g_received = self.decoder.backward(&tape.decoder, &g, dec);
        let g_encoded = tape.link.backward(&g_received);
        self.encoder.backward(&tape.encoder, &g_encoded, enc);
        Ok(())
    }

    pub fn backward(&self, loss_scale: f64) -> Result<(Gradients, Gradients), NetError> {
        let mut enc = Gradients::zeros_like(self.encoder);
        let mut dec = Gradients::zeros_like(self.decoder);
        self.backward_into(loss_scale, &mut enc, &mut dec)?;
        Ok((enc, dec))
    }
}
