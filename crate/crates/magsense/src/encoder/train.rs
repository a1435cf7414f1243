//! Pretraining loop: adaptive-moment gradient descent over the hierarchical
//! contrastive loss, with two random overlapping crops of 32-frame contexts
//! as the augmented views plus 10 % random timestamp masking.
//!
//! Every random draw comes from one seeded ChaCha8 stream consumed in a
//! fixed order, and all reductions are sequential, so a given seed
//! reproduces the run bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MagsenseError, Result};
use crate::frame::{Recording, CHANNELS, WINDOW_LEN};
use crate::magdelta::QUEUE_LEN;
use crate::preprocess::{profile_from_meta, smooth_recording, CalibrationProfile, DEFAULT_ALPHA};
use crate::scalar::{real, Real};

use super::loss::{hierarchical_contrastive_loss, ReprBlock};
use super::net;
use super::{EncoderConfig, EncoderModel};

/// Ambient-field magnitude fallback when a recording does not declare one.
pub const DEFAULT_EARTH_FIELD_UT: f64 = 45.0;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Softmax temperature for both contrastive terms.
    pub temperature: f64,
    /// Fraction of timestamps masked per view.
    pub mask_rate: f64,
    /// Length of the context from which the two crops are drawn.
    pub context_len: usize,
    /// Stride between contexts taken from each recording.
    pub context_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            max_epochs: 60,
            batch_size: 8,
            seed: 0,
            temperature: 1.0,
            mask_rate: 0.1,
            context_len: 2 * WINDOW_LEN,
            context_stride: 8,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(MagsenseError::Validation("learning_rate must be positive".into()));
        }
        if self.max_epochs < 1 {
            return Err(MagsenseError::Validation("max_epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(MagsenseError::Validation(
                "batch_size must be >= 2 for the instance contrastive term".into(),
            ));
        }
        if !(self.temperature > 0.0) {
            return Err(MagsenseError::Validation("temperature must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.mask_rate) {
            return Err(MagsenseError::Validation("mask_rate must lie in [0, 1)".into()));
        }
        if self.context_len < WINDOW_LEN {
            return Err(MagsenseError::Validation(format!(
                "context_len must be >= {WINDOW_LEN}"
            )));
        }
        Ok(())
    }
}

/// Adaptive moment estimation with the standard decay constants.
pub struct Adam<T: Real> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
}

impl<T: Real> Adam<T> {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            t: 0,
            lr: real(lr),
            beta1: real(0.9),
            beta2: real(0.999),
            eps: real(1e-8),
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        self.t += 1;
        let bc1 = T::one() - self.beta1.powi(self.t);
        let bc2 = T::one() - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] = params[i] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Preprocessed training contexts: smoothed, background-subtracted,
/// normalized slices of `context_len` frames.
fn build_contexts<T: Real>(corpus: &[Recording<T>], cfg: &TrainConfig) -> Result<Vec<Vec<T>>> {
    let mut contexts = Vec::new();
    for rec in corpus {
        if rec.len() < cfg.context_len {
            continue;
        }
        let smoothed = smooth_recording(rec, real(DEFAULT_ALPHA))?;
        // Sessions start magnet-far, so the first queue-full of frames
        // estimates the background.
        let mut background = [T::zero(); CHANNELS];
        let head = QUEUE_LEN.min(smoothed.len());
        for f in &smoothed.frames()[..head] {
            let ch = f.channels();
            for i in 0..CHANNELS {
                background[i] = background[i] + ch[i];
            }
        }
        for b in &mut background {
            *b = *b / T::from(head).unwrap();
        }
        let profile: CalibrationProfile<T> = profile_from_meta(&rec.meta)
            .unwrap_or_else(|| CalibrationProfile::unbiased(real(DEFAULT_EARTH_FIELD_UT)).unwrap());
        let scale = profile.earth_field_magnitude;

        let rows: Vec<[T; CHANNELS]> = smoothed
            .frames()
            .iter()
            .map(|f| {
                let ch = f.channels();
                let mut out = [T::zero(); CHANNELS];
                for i in 0..CHANNELS {
                    out[i] = (ch[i] - background[i]) / scale;
                }
                out
            })
            .collect();
        let mut start = 0;
        while start + cfg.context_len <= rows.len() {
            let flat: Vec<T> = rows[start..start + cfg.context_len]
                .iter()
                .flat_map(|r| r.iter().copied())
                .collect();
            contexts.push(flat);
            start += cfg.context_stride;
        }
    }
    if contexts.is_empty() {
        return Err(MagsenseError::Training(format!(
            "no recording is long enough to supply a {}-frame context",
            cfg.context_len
        )));
    }
    Ok(contexts)
}

/// Pretrains an encoder on unlabeled recordings. Returns the model and the
/// per-epoch mean loss trace.
pub fn pretrain<T: Real>(
    corpus: &[Recording<T>],
    cfg: &TrainConfig,
) -> Result<(EncoderModel<T>, Vec<f64>)> {
    cfg.validate()?;
    let config = EncoderConfig::default();
    pretrain_with_config(corpus, cfg, config)
}

pub fn pretrain_with_config<T: Real>(
    corpus: &[Recording<T>],
    cfg: &TrainConfig,
    config: EncoderConfig,
) -> Result<(EncoderModel<T>, Vec<f64>)> {
    cfg.validate()?;
    let contexts = build_contexts(corpus, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = EncoderModel::init(config, cfg.seed ^ 0x1234_5678);
    let mut adam = Adam::<T>::new(model.params.len(), cfg.learning_rate);
    let crop_max = cfg.context_len - WINDOW_LEN;
    let temperature: T = real(cfg.temperature);

    let mut history = Vec::with_capacity(cfg.max_epochs);
    for epoch in 0..cfg.max_epochs {
        // Seeded Fisher-Yates shuffle of context order.
        let mut order: Vec<usize> = (0..contexts.len()).collect();
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0f64;
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            // Batch-level crop offsets with a guaranteed overlap of >= 2.
            let (a_start, b_start) = loop {
                let a = rng.gen_range(0..=crop_max);
                let b = rng.gen_range(0..=crop_max);
                if a.abs_diff(b) <= WINDOW_LEN - 2 {
                    break (a, b);
                }
            };
            let ov_start = a_start.max(b_start);
            let ov_len = WINDOW_LEN - a_start.abs_diff(b_start);
            let d = model.config.embed;

            let mut traces_a = Vec::with_capacity(chunk.len());
            let mut traces_b = Vec::with_capacity(chunk.len());
            let mut z_a = Vec::with_capacity(chunk.len() * ov_len * d);
            let mut z_b = Vec::with_capacity(chunk.len() * ov_len * d);
            for &ctx_idx in chunk {
                let ctx = &contexts[ctx_idx];
                for (start, traces, z) in [
                    (a_start, &mut traces_a, &mut z_a),
                    (b_start, &mut traces_b, &mut z_b),
                ] {
                    let crop = &ctx[start * CHANNELS..(start + WINDOW_LEN) * CHANNELS];
                    let mask: Vec<bool> =
                        (0..WINDOW_LEN).map(|_| rng.gen_bool(cfg.mask_rate)).collect();
                    let trace =
                        net::forward(&model.config, &model.params, crop, WINDOW_LEN, Some(&mask));
                    let local = ov_start - start;
                    z.extend_from_slice(&trace.output[local * d..(local + ov_len) * d]);
                    traces.push(trace);
                }
            }

            let grad = hierarchical_contrastive_loss(
                &ReprBlock::new(z_a, chunk.len(), ov_len, d),
                &ReprBlock::new(z_b, chunk.len(), ov_len, d),
                temperature,
            )?;
            let loss = grad.loss.as_f64();
            if !loss.is_finite() {
                return Err(MagsenseError::Training(format!(
                    "loss diverged (non-finite) at epoch {epoch}, step {steps}"
                )));
            }

            let mut grads = vec![T::zero(); model.params.len()];
            for (i, (trace, d_view)) in traces_a
                .iter()
                .zip(grad.d_view_a.chunks(ov_len * d))
                .enumerate()
            {
                let mut d_out = vec![T::zero(); WINDOW_LEN * d];
                let local = ov_start - a_start;
                d_out[local * d..(local + ov_len) * d].copy_from_slice(d_view);
                net::backward(&model.config, &model.params, trace, &d_out, &mut grads);
                let _ = i;
            }
            for (trace, d_view) in traces_b.iter().zip(grad.d_view_b.chunks(ov_len * d)) {
                let mut d_out = vec![T::zero(); WINDOW_LEN * d];
                let local = ov_start - b_start;
                d_out[local * d..(local + ov_len) * d].copy_from_slice(d_view);
                net::backward(&model.config, &model.params, trace, &d_out, &mut grads);
            }

            adam.step(&mut model.params, &grads);
            epoch_loss += loss;
            steps += 1;
        }
        if steps == 0 {
            return Err(MagsenseError::Training(
                "no usable batches (corpus too small for the batch size)".into(),
            ));
        }
        history.push(epoch_loss / steps as f64);
    }
    Ok((model, history))
}

/// Writes the loss history alongside a model file.
pub fn write_loss_history(history: &[f64], path: impl AsRef<std::path::Path>) -> Result<()> {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, l) in history.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldsim::corpus::synth_pretrain_corpus;
    use crate::fieldsim::MagnetPreset;

    fn tiny_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            max_epochs: 3,
            batch_size: 4,
            context_stride: 24,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn seed_fixed_retrain_is_bit_identical() {
        let corpus = synth_pretrain_corpus::<f64>(MagnetPreset::Ring, 2, 1, 5).unwrap();
        let (m1, h1) = pretrain(&corpus, &tiny_cfg(9)).unwrap();
        let (m2, h2) = pretrain(&corpus, &tiny_cfg(9)).unwrap();
        assert_eq!(m1.params, m2.params);
        assert_eq!(h1, h2);
        assert!((h1.last().unwrap() - h2.last().unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn loss_drops_within_first_epochs() {
        let corpus = synth_pretrain_corpus::<f64>(MagnetPreset::Ring, 3, 1, 6).unwrap();
        let cfg = TrainConfig {
            max_epochs: 5,
            batch_size: 6,
            context_stride: 16,
            seed: 4,
            ..TrainConfig::default()
        };
        let (_, history) = pretrain(&corpus, &cfg).unwrap();
        assert!(history.len() == 5);
        assert!(
            history[4] < history[0],
            "loss did not decrease: {history:?}"
        );
    }

    #[test]
    fn rejects_too_short_recordings_only_when_nothing_usable() {
        let corpus = synth_pretrain_corpus::<f64>(MagnetPreset::Ring, 1, 1, 7).unwrap();
        let cfg = TrainConfig {
            context_len: 100_000,
            ..tiny_cfg(1)
        };
        assert!(pretrain(&corpus, &cfg).is_err());
    }

    #[test]
    fn rejects_batch_size_one() {
        let corpus = synth_pretrain_corpus::<f64>(MagnetPreset::Ring, 1, 1, 8).unwrap();
        let cfg = TrainConfig {
            batch_size: 1,
            ..tiny_cfg(1)
        };
        assert!(pretrain(&corpus, &cfg).is_err());
    }
}
