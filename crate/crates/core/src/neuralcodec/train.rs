use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::encode_checkpoint;
use super::graph::LossGraph;
use super::network::{DenseNetwork, Gradients};
use super::optim::{Optimizer, OptimizerKind};
use super::NetError;
use crate::channelsim::{segment_rng, ChannelConfig, ChannelDraw};
use crate::segmenter::SpeechSegment;
use crate::semcodec::{SemanticModel, SpeechCodec};

const VALIDATION_SALT: u64 = 0x7a11_da7e_5eed_0001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum SnrPolicy {
    /// Train at the channel config's SNR.
    Fixed,
    /// Draw each example's SNR uniformly from `[min_db, max_db]`.
    Uniform { min_db: f64, max_db: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Optional cap on optimizer updates across all epochs.
    pub max_steps: Option<usize>,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub snr: SnrPolicy,
    pub seed: u64,
    /// Stop after this many epochs without a relative validation-MSE
    /// improvement of at least `min_improvement`.
    pub patience: usize,
    pub min_improvement: f64,
    pub validation_fraction: f64,
    /// Learning rate decays linearly to `learning_rate * final_lr_fraction`
    /// over `max_steps` (constant when `max_steps` is unset).
    pub final_lr_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 50,
            max_steps: None,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            snr: SnrPolicy::Fixed,
            seed: 0,
            patience: 5,
            min_improvement: 1e-3,
            validation_fraction: 0.2,
            final_lr_fraction: 1.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), NetError> {
        let fail = |m: &str| Err(NetError::Config(m.into()));
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.patience == 0 {
            return fail("patience must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return fail("validation_fraction must lie in [0, 1)");
        }
        if !(self.final_lr_fraction >= 0.0 && self.final_lr_fraction <= 1.0) {
            return fail("final_lr_fraction must lie in [0, 1]");
        }
        if let SnrPolicy::Uniform { min_db, max_db } = self.snr {
            if !(min_db.is_finite() && max_db.is_finite() && min_db <= max_db) {
                return fail("uniform SNR range must be finite and ordered");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Optimizer updates completed by the end of this epoch.
    pub steps: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub val_nmse_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub train_examples: usize,
    pub validation_examples: usize,
    /// Validation error of the networks as passed in, before any update.
    pub initial_val_mse: f64,
    pub initial_val_nmse_db: f64,
    pub epochs: Vec<EpochStats>,
    pub steps: usize,
    pub converged: bool,
    pub wall_seconds: f64,
    pub encoder_crc32: u32,
    pub decoder_crc32: u32,
}

impl TrainReport {
    pub fn final_val_mse(&self) -> f64 {
        self.epochs.last().map_or(self.initial_val_mse, |e| e.val_mse)
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub encoder: DenseNetwork,
    pub decoder: DenseNetwork,
    pub report: TrainReport,
}

/// Runs the frozen device compressor and edge extractor over the non-silent
/// corpus segments. Uploaded features are rounded to binary32, as they are
/// on the wire.
pub fn extract_corpus_features<C: SpeechCodec + SemanticModel>(
    codec: &C,
    corpus: &[SpeechSegment],
) -> Result<Vec<Vec<f64>>, NetError> {
    corpus
        .iter()
        .filter(|s| !s.silent && !s.samples.is_empty())
        .map(|s| {
            let mut p = codec.compress(s.index, &s.samples)?;
            p.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
            Ok(codec.extract_semantics(&p)?.values)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStats {
    pub mse: f64,
    pub nmse_db: f64,
}

/// Mean per-example MSE and overall NMSE (dB). Example `i` always sees the
/// same channel draw for a given `seed`.
pub fn evaluate(
    encoder: &DenseNetwork,
    decoder: &DenseNetwork,
    channel: &ChannelConfig,
    features: &[Vec<f64>],
    seed: u64,
) -> Result<EvalStats, NetError> {
    let symbols = encoder.output_dim().div_ceil(2);
    let mut graph = LossGraph::new(encoder, decoder, *channel);
    let (mut mse, mut err, mut energy) = (0.0, 0.0, 0.0);
    for (i, f) in features.iter().enumerate() {
        let draw = ChannelDraw::sample(channel, symbols, &mut segment_rng(seed ^ VALIDATION_SALT, i as u64));
        let loss = graph.forward(f, &draw)?;
        mse += loss;
        err += loss * f.len() as f64;
        energy += f.iter().map(|v| v * v).sum::<f64>();
    }
    let n = features.len().max(1) as f64;
    Ok(EvalStats {
        mse: mse / n,
        nmse_db: 10.0 * (err / energy.max(f64::MIN_POSITIVE)).log10(),
    })
}

fn check_shapes(encoder: &DenseNetwork, decoder: &DenseNetwork, dim: usize) -> Result<(), NetError> {
    let mismatch = |expected, actual| Err(NetError::Dim { expected, actual });
    if encoder.input_dim() != dim {
        return mismatch(dim, encoder.input_dim());
    }
    if decoder.output_dim() != dim {
        return mismatch(dim, decoder.output_dim());
    }
    if decoder.input_dim() != encoder.output_dim() {
        return mismatch(encoder.output_dim(), decoder.input_dim());
    }
    Ok(())
}

/// Trains the channel encoder and decoder over the frozen codec.
///
/// Each step takes a batch of segments through compress, upload, extract,
/// encode, the channel, decode and the MSE, then updates both networks.
/// Since the codec is frozen, extracted features are computed once.
pub fn train<C: SpeechCodec + SemanticModel>(
    codec: &C,
    channel: &ChannelConfig,
    corpus: &[SpeechSegment],
    encoder: DenseNetwork,
    decoder: DenseNetwork,
    cfg: &TrainConfig,
) -> Result<Trained, NetError> {
    cfg.validate()?;
    channel.validate()?;
    check_shapes(&encoder, &decoder, codec.semantic_dim())?;
    let started = Instant::now();
    let features = extract_corpus_features(codec, corpus)?;
    if features.is_empty() {
        return Err(NetError::EmptyCorpus);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if features.len() < 2 {
        0
    } else {
        ((features.len() as f64 * cfg.validation_fraction).ceil() as usize).clamp(1, features.len() - 1)
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let validation: Vec<Vec<f64>> = if val_idx.is_empty() {
        features.clone()
    } else {
        val_idx.iter().map(|&i| features[i].clone()).collect()
    };
    let mut train_idx = train_idx.to_vec();

    let initial = evaluate(&encoder, &decoder, channel, &validation, cfg.seed)?;
    let (mut encoder, mut decoder) = (encoder, decoder);
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, &[&encoder, &decoder]);
    let symbols = encoder.output_dim().div_ceil(2);
    let max_steps = cfg.max_steps.unwrap_or(usize::MAX);

    let mut epochs = Vec::new();
    let mut steps = 0usize;
    let mut best = initial.mse;
    let mut stale = 0usize;
    let mut converged = false;

    for epoch in 1..=cfg.epochs {
        if steps >= max_steps {
            break;
        }
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_examples = 0usize;
        for batch in train_idx.chunks(cfg.batch_size) {
            if steps >= max_steps {
                break;
            }
            let mut g_enc = Gradients::zeros_like(&encoder);
            let mut g_dec = Gradients::zeros_like(&decoder);
            let mut batch_loss = 0.0;
            {
                let weight = 1.0 / batch.len() as f64;
                for &i in batch {
                    let example_channel = match cfg.snr {
                        SnrPolicy::Fixed => *channel,
                        SnrPolicy::Uniform { min_db, max_db } => ChannelConfig {
                            snr_db: rng.random_range(min_db..=max_db),
                            ..*channel
                        },
                    };
                    let draw = ChannelDraw::sample(&example_channel, symbols, &mut rng);
                    let mut graph = LossGraph::new(&encoder, &decoder, example_channel);
                    batch_loss += graph.forward(&features[i], &draw)?;
                    graph.backward_into(weight, &mut g_enc, &mut g_dec)?;
                }
            }
            if !batch_loss.is_finite() {
                return Err(NetError::Diverged { epoch, step: steps, loss: batch_loss });
            }
            if let Some(total) = cfg.max_steps {
                let progress = steps as f64 / total.max(1) as f64;
                optimizer.set_learning_rate(cfg.learning_rate * (1.0 - (1.0 - cfg.final_lr_fraction) * progress));
            }
            optimizer.step(&mut [&mut encoder, &mut decoder], &[&g_enc, &g_dec]);
            steps += 1;
            epoch_loss += batch_loss;
            epoch_examples += batch.len();
        }
        let val = evaluate(&encoder, &decoder, channel, &validation, cfg.seed)?;
        if !val.mse.is_finite() {
            return Err(NetError::Diverged { epoch, step: steps, loss: val.mse });
        }
        epochs.push(EpochStats {
            epoch,
            steps,
            train_mse: epoch_loss / epoch_examples.max(1) as f64,
            val_mse: val.mse,
            val_nmse_db: val.nmse_db,
        });
        if best - val.mse < cfg.min_improvement * best {
            stale += 1;
        } else {
            stale = 0;
        }
        best = best.min(val.mse);
        if stale >= cfg.patience {
            converged = true;
            break;
        }
    }

    let crc = |net: &DenseNetwork| crc32fast::hash(&encode_checkpoint(&[net]));
    let report = TrainReport {
        train_examples: train_idx.len(),
        validation_examples: validation.len(),
        initial_val_mse: initial.mse,
        initial_val_nmse_db: initial.nmse_db,
        epochs,
        steps,
        converged,
        wall_seconds: started.elapsed().as_secs_f64(),
        encoder_crc32: crc(&encoder),
        decoder_crc32: crc(&decoder),
    };
    Ok(Trained {
        encoder,
        decoder,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{synth_test_signal, SignalSpec};
    use crate::neuralcodec::NetShape;
    use crate::segmenter::{segment_stream, SegmentationMode, SegmenterConfig};
    use crate::semcodec::{CodecSpec, ReferenceCodec, Translator};

    fn tiny_setup() -> (ReferenceCodec, Vec<SpeechSegment>) {
        let spec = CodecSpec {
            frame_len: 32,
            coeffs_kept: 4,
            semantic_dim: 8,
            span_frames: 5,
            projection_seed: 1,
            translator: Translator::Identity,
        };
        let codec = ReferenceCodec::new(spec).unwrap();
        let mut seg_cfg = SegmenterConfig::default().with_mode(SegmentationMode::Fixed);
        seg_cfg.fixed_duration = 0.01;
        let sig = synth_test_signal(&SignalSpec::noise((0.2, 0.8), 0.6, 3)).unwrap();
        let segs = segment_stream(&sig, &seg_cfg).unwrap().collect();
        (codec, segs)
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let (codec, segs) = tiny_setup();
        let shape = NetShape { semantic_dim: 8, hidden: vec![], symbol_budget: 4, linear: true };
        let (enc, dec) = shape.init(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let out = train(&codec, &ChannelConfig::clean(), &segs, enc.clone(), dec.clone(), &cfg).unwrap();
        assert_eq!(out.encoder, enc);
        assert_eq!(out.decoder, dec);
        assert!(out.report.epochs.is_empty());
        assert_eq!(out.report.steps, 0);
    }

    #[test]
    fn clean_linear_identity_is_learnable() {
        let (codec, segs) = tiny_setup();
        let shape = NetShape { semantic_dim: 8, hidden: vec![], symbol_budget: 4, linear: true };
        let (enc, dec) = shape.init(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let cfg = TrainConfig {
            epochs: 1_000,
            max_steps: Some(500),
            learning_rate: 1e-2,
            batch_size: 8,
            patience: 1_000,
            ..TrainConfig::default()
        };
        let out = train(&codec, &ChannelConfig::clean(), &segs, enc, dec, &cfg).unwrap();
        assert!(out.report.steps <= 500);
        let last = out.report.epochs.last().unwrap();
        assert!(last.val_nmse_db <= -30.0, "{}", last.val_nmse_db);
    }

    #[test]
    fn training_is_deterministic() {
        let (codec, segs) = tiny_setup();
        let shape = NetShape { semantic_dim: 8, hidden: vec![6], symbol_budget: 4, linear: false };
        let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
        let run = || {
            let (enc, dec) = shape.init(&mut ChaCha8Rng::seed_from_u64(5)).unwrap();
            train(&codec, &ChannelConfig::awgn(10.0), &segs, enc, dec, &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.encoder, b.encoder);
        assert_eq!(a.report.epochs, b.report.epochs);
        assert_eq!(a.report.encoder_crc32, b.report.encoder_crc32);
        assert_eq!(a.report.epochs.len(), 3);
    }

    #[test]
    fn error_paths() {
        let (codec, segs) = tiny_setup();
        let shape = NetShape { semantic_dim: 8, hidden: vec![], symbol_budget: 4, linear: true };
        let (enc, dec) = shape.init(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let cfg = TrainConfig::default();
        let silent: Vec<_> = segs.iter().cloned().map(|mut s| { s.silent = true; s }).collect();
        assert!(matches!(
            train(&codec, &ChannelConfig::clean(), &silent, enc.clone(), dec.clone(), &cfg),
            Err(NetError::EmptyCorpus)
        ));
        let wrong = DenseNetwork::identity(6);
        assert!(matches!(
            train(&codec, &ChannelConfig::clean(), &segs, wrong, dec.clone(), &cfg),
            Err(NetError::Dim { .. })
        ));
        let diverge = TrainConfig { learning_rate: 1e6, optimizer: OptimizerKind::Sgd, epochs: 50, ..cfg };
        assert!(matches!(
            train(&codec, &ChannelConfig::clean(), &segs, enc, dec, &diverge),
            Err(NetError::Diverged { .. })
        ));
    }
}
