//! The temporal-convolution encoder network and its hand-derived backward
//! pass.
//!
//! Layout: per-timestep input projection (9 -> H), an optional binomial
//! timestep mask applied to the projected sequence during training, three
//! residual blocks of causal dilated convolutions (kernel 3, dilations 1, 2,
//! 4) with GELU activations, and a per-timestep output projection (H -> D).
//! Causality means position t only sees positions <= t, so per-timestep
//! representations shift along with the input.
//!
//! Parameters live in one flat buffer so the optimizer and the
//! finite-difference checks can treat the model as a single vector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::{real, Real};

/// Architecture description; the defaults are fixed for the shipped model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub embed: usize,
    pub blocks: usize,
    pub kernel: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: crate::frame::CHANNELS,
            hidden: 32,
            embed: 64,
            blocks: 3,
            kernel: 3,
        }
    }
}

impl EncoderConfig {
    /// Tiny variant used by gradient checks.
    pub fn tiny() -> Self {
        Self {
            input_dim: crate::frame::CHANNELS,
            hidden: 4,
            embed: 8,
            blocks: 3,
            kernel: 3,
        }
    }

    pub fn dilation(&self, block: usize) -> usize {
        1 << block
    }

    pub fn param_count(&self) -> usize {
        let (h, d, k) = (self.hidden, self.embed, self.kernel);
        h * self.input_dim + h + self.blocks * (h * h * k + h) + d * h + d
    }

    // Flat-buffer offsets.
    fn off_w_in(&self) -> usize {
        0
    }
    fn off_b_in(&self) -> usize {
        self.hidden * self.input_dim
    }
    fn off_block(&self, l: usize) -> usize {
        self.off_b_in() + self.hidden + l * (self.hidden * self.hidden * self.kernel + self.hidden)
    }
    fn off_block_bias(&self, l: usize) -> usize {
        self.off_block(l) + self.hidden * self.hidden * self.kernel
    }
    fn off_w_out(&self) -> usize {
        self.off_block(self.blocks)
    }
    fn off_b_out(&self) -> usize {
        self.off_w_out() + self.embed * self.hidden
    }
}

/// GELU (tanh approximation) and its derivative; smooth everywhere, which
/// keeps finite-difference gradient checks clean.
fn gelu<T: Real>(x: T) -> T {
    let c: T = real(0.797_884_560_802_865_4); // sqrt(2/pi)
    let a: T = real(0.044715);
    let u = c * (x + a * x * x * x);
    let half: T = real(0.5);
    half * x * (T::one() + u.tanh())
}

fn dgelu<T: Real>(x: T) -> T {
    let c: T = real(0.797_884_560_802_865_4);
    let a: T = real(0.044715);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let half: T = real(0.5);
    let sech2 = T::one() - t * t;
    half * (T::one() + t) + half * x * sech2 * c * (T::one() + real::<T>(3.0) * a * x * x)
}

/// Saved intermediates from one forward pass over one sequence.
pub struct ForwardTrace<T: Real> {
    pub len: usize,
    input: Vec<T>,          // len x input_dim
    mask: Option<Vec<bool>>, // masked timesteps (post input projection)
    h0: Vec<T>,             // len x hidden, after mask
    block_inputs: Vec<Vec<T>>, // blocks + 1 entries of len x hidden
    preacts: Vec<Vec<T>>,   // per block, len x hidden
    pub output: Vec<T>,     // len x embed (per-timestep representations)
}

/// Runs the network over a sequence of `len` frames (row-major
/// `len x input_dim`). `mask` marks timesteps whose projected features are
/// zeroed (training-time augmentation); pass `None` for inference.
pub fn forward<T: Real>(
    config: &EncoderConfig,
    params: &[T],
    input: &[T],
    len: usize,
    mask: Option<&[bool]>,
) -> ForwardTrace<T> {
    let (h, d, k) = (config.hidden, config.embed, config.kernel);
    let in_dim = config.input_dim;
    debug_assert_eq!(input.len(), len * in_dim);
    debug_assert_eq!(params.len(), config.param_count());

    let w_in = &params[config.off_w_in()..config.off_w_in() + h * in_dim];
    let b_in = &params[config.off_b_in()..config.off_b_in() + h];

    let mut h0 = vec![T::zero(); len * h];
    for t in 0..len {
        let masked = mask.map(|m| m[t]).unwrap_or(false);
        if masked {
            continue; // projected features stay zero
        }
        for j in 0..h {
            let mut acc = b_in[j];
            for i in 0..in_dim {
                acc = acc + w_in[j * in_dim + i] * input[t * in_dim + i];
            }
            h0[t * h + j] = acc;
        }
    }

    let mut block_inputs = Vec::with_capacity(config.blocks + 1);
    let mut preacts = Vec::with_capacity(config.blocks);
    block_inputs.push(h0.clone());

    for l in 0..config.blocks {
        let dil = config.dilation(l);
        let kernel = &params[config.off_block(l)..config.off_block(l) + h * h * k];
        let bias = &params[config.off_block_bias(l)..config.off_block_bias(l) + h];
        let x = &block_inputs[l];
        let mut u = vec![T::zero(); len * h];
        for t in 0..len {
            for o in 0..h {
                let mut acc = bias[o];
                for tap in 0..k {
                    let offset = tap * dil;
                    if offset > t {
                        break; // zero padding before the sequence start
                    }
                    let src = t - offset;
                    for i in 0..h {
                        acc = acc + kernel[(o * h + i) * k + tap] * x[src * h + i];
                    }
                }
                u[t * h + o] = acc;
            }
        }
        let mut next = vec![T::zero(); len * h];
        for idx in 0..len * h {
            next[idx] = x[idx] + gelu(u[idx]);
        }
        preacts.push(u);
        block_inputs.push(next);
    }

    let w_out = &params[config.off_w_out()..config.off_w_out() + d * h];
    let b_out = &params[config.off_b_out()..config.off_b_out() + d];
    let last = &block_inputs[config.blocks];
    let mut output = vec![T::zero(); len * d];
    for t in 0..len {
        for o in 0..d {
            let mut acc = b_out[o];
            for j in 0..h {
                acc = acc + w_out[o * h + j] * last[t * h + j];
            }
            output[t * d + o] = acc;
        }
    }

    ForwardTrace {
        len,
        input: input.to_vec(),
        mask: mask.map(|m| m.to_vec()),
        h0,
        block_inputs,
        preacts,
        output,
    }
}

/// Accumulates parameter gradients for `d_output` (same shape as
/// `trace.output`) into `grads`.
pub fn backward<T: Real>(
    config: &EncoderConfig,
    params: &[T],
    trace: &ForwardTrace<T>,
    d_output: &[T],
    grads: &mut [T],
) {
    let (h, d, k) = (config.hidden, config.embed, config.kernel);
    let in_dim = config.input_dim;
    let len = trace.len;
    debug_assert_eq!(d_output.len(), len * d);
    debug_assert_eq!(grads.len(), config.param_count());

    let w_out = &params[config.off_w_out()..config.off_w_out() + d * h];
    let last = &trace.block_inputs[config.blocks];

    // Output projection.
    let mut dh = vec![T::zero(); len * h];
    {
        let (gw, rest) = grads[config.off_w_out()..].split_at_mut(d * h);
        let gb = &mut rest[..d];
        for t in 0..len {
            for o in 0..d {
                let g = d_output[t * d + o];
                if g == T::zero() {
                    continue;
                }
                gb[o] = gb[o] + g;
                for j in 0..h {
                    gw[o * h + j] = gw[o * h + j] + g * last[t * h + j];
                    dh[t * h + j] = dh[t * h + j] + g * w_out[o * h + j];
                }
            }
        }
    }

    // Residual conv blocks, reversed.
    for l in (0..config.blocks).rev() {
        let dil = config.dilation(l);
        let kernel = &params[config.off_block(l)..config.off_block(l) + h * h * k];
        let x = &trace.block_inputs[l];
        let u = &trace.preacts[l];

        let mut dx = dh.clone(); // residual path
        {
            let (gk, rest) = grads[config.off_block(l)..].split_at_mut(h * h * k);
            let gb = &mut rest[..h];
            for t in 0..len {
                for o in 0..h {
                    let du = dh[t * h + o] * dgelu(u[t * h + o]);
                    if du == T::zero() {
                        continue;
                    }
                    gb[o] = gb[o] + du;
                    for tap in 0..k {
                        let offset = tap * dil;
                        if offset > t {
                            break;
                        }
                        let src = t - offset;
                        for i in 0..h {
                            gk[(o * h + i) * k + tap] =
                                gk[(o * h + i) * k + tap] + du * x[src * h + i];
                            dx[src * h + i] = dx[src * h + i] + du * kernel[(o * h + i) * k + tap];
                        }
                    }
                }
            }
        }
        dh = dx;
    }

    // Mask: gradients do not flow into masked timesteps.
    if let Some(mask) = &trace.mask {
        for t in 0..len {
            if mask[t] {
                for j in 0..h {
                    dh[t * h + j] = T::zero();
                }
            }
        }
    }

    // Input projection.
    {
        let (gw, rest) = grads[config.off_w_in()..].split_at_mut(h * in_dim);
        let gb = &mut rest[..h];
        for t in 0..len {
            for j in 0..h {
                let g = dh[t * h + j];
                if g == T::zero() {
                    continue;
                }
                gb[j] = gb[j] + g;
                for i in 0..in_dim {
                    gw[j * in_dim + i] = gw[j * in_dim + i] + g * trace.input[t * in_dim + i];
                }
            }
        }
    }
}

/// He-style Gaussian initialization, deterministic per seed.
pub fn init_params<T: Real>(config: &EncoderConfig, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![T::zero(); config.param_count()];
    let mut fill = |range: std::ops::Range<usize>, fan_in: usize, params: &mut Vec<T>| {
        let std = (2.0 / fan_in as f64).sqrt();
        for idx in range {
            let n: f64 = StandardNormal.sample(&mut rng);
            params[idx] = real(n * std);
        }
    };
    let (h, k) = (config.hidden, config.kernel);
    fill(config.off_w_in()..config.off_w_in() + h * config.input_dim, config.input_dim, &mut params);
    for l in 0..config.blocks {
        fill(
            config.off_block(l)..config.off_block(l) + h * h * k,
            h * k,
            &mut params,
        );
    }
    fill(
        config.off_w_out()..config.off_w_out() + config.embed * h,
        h,
        &mut params,
    );
    // Biases start at zero.
    params
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_input(len: usize, dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = EncoderConfig::tiny();
        let params = init_params::<f64>(&cfg, 3);
        let x = random_input(16, cfg.input_dim, 1);
        let a = forward(&cfg, &params, &x, 16, None);
        let b = forward(&cfg, &params, &x, 16, None);
        assert_eq!(a.output, b.output);
    }

    #[test]
    fn zero_input_yields_finite_bias_path() {
        let cfg = EncoderConfig::default();
        let params = init_params::<f64>(&cfg, 9);
        let x = vec![0.0; 16 * cfg.input_dim];
        let tr = forward(&cfg, &params, &x, 16, None);
        assert!(tr.output.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn causal_shift_covariance() {
        // Shifting the input right by s shifts per-timestep representations
        // by s wherever the receptive field sees identical (non-padded)
        // history.
        let cfg = EncoderConfig::tiny();
        let params = init_params::<f64>(&cfg, 5);
        let len = 40;
        let x = random_input(len, cfg.input_dim, 2);
        let shift = 4;
        let mut shifted = vec![0.0; (len + shift) * cfg.input_dim];
        shifted[shift * cfg.input_dim..].copy_from_slice(&x);
        let plain = forward(&cfg, &params, &x, len, None);
        let moved = forward(&cfg, &params, &shifted, len + shift, None);
        // Receptive field of 3 blocks, kernel 3: 1 + 2*(1+2+4) = 15.
        let receptive = 15;
        for t in receptive..len {
            for o in 0..cfg.embed {
                assert_relative_eq!(
                    plain.output[t * cfg.embed + o],
                    moved.output[(t + shift) * cfg.embed + o],
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn network_gradients_match_finite_differences() {
        // Scalar probe loss: weighted sum of all outputs, so dL/dtheta can
        // be checked directly against central differences.
        let cfg = EncoderConfig::tiny();
        let params = init_params::<f64>(&cfg, 7);
        let len = 12;
        let x = random_input(len, cfg.input_dim, 11);
        let mask: Vec<bool> = (0..len).map(|t| t % 5 == 0).collect();
        let weights: Vec<f64> = (0..len * cfg.embed)
            .map(|i| ((i as f64) * 0.37).sin())
            .collect();

        let loss_of = |p: &[f64]| -> f64 {
            let tr = forward(&cfg, p, &x, len, Some(&mask));
            tr.output.iter().zip(&weights).map(|(a, b)| a * b).sum()
        };

        let trace = forward(&cfg, &params, &x, len, Some(&mask));
        let mut grads = vec![0.0; cfg.param_count()];
        backward(&cfg, &params, &trace, &weights, &mut grads);

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let eps = 1e-6;
        for _ in 0..200 {
            let idx = rng.gen_range(0..cfg.param_count());
            let mut plus = params.clone();
            plus[idx] += eps;
            let mut minus = params.clone();
            minus[idx] -= eps;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
            let denom = fd.abs().max(grads[idx].abs()).max(1e-6);
            assert!(
                (fd - grads[idx]).abs() / denom < 1e-4,
                "param {idx}: analytic {} vs fd {fd}",
                grads[idx]
            );
        }
    }
}
