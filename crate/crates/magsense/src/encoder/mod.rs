//! Self-supervised contrastive time-series encoder: maps normalized 16x9
//! windows to fixed-dimension embeddings. Pretrained once on unlabeled
//! movement data, then reused across users and tasks.

pub mod loss;
pub mod net;
pub mod train;

use std::fs;
use std::path::Path;

use crate::error::{MagsenseError, Result};
use crate::frame::{Window, CHANNELS};
use crate::scalar::{real, scalar_tag, Real};

pub use net::EncoderConfig;
pub use train::{pretrain, TrainConfig};

pub const MODEL_MAGIC: &str = "magsense-encoder v1";

/// A trained (or freshly initialized) encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel<T: Real> {
    pub config: EncoderConfig,
    pub params: Vec<T>,
}

impl<T: Real> EncoderModel<T> {
    /// Fresh model with seeded Gaussian initialization.
    pub fn init(config: EncoderConfig, seed: u64) -> Self {
        let params = net::init_params(&config, seed);
        Self { config, params }
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed
    }

    /// Per-timestep representations for an arbitrary-length channel-row
    /// sequence (no masking; inference path).
    pub fn representations(&self, rows: &[[T; CHANNELS]]) -> Vec<T> {
        let flat: Vec<T> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        net::forward(&self.config, &self.params, &flat, rows.len(), None).output
    }

    /// Embeds one normalized window: per-timestep representations
    /// max-pooled over time into a `D`-vector. Deterministic.
    pub fn encode(&self, w: &Window<T>) -> Result<Vec<T>> {
        if self.config.input_dim != CHANNELS {
            return Err(MagsenseError::Shape(format!(
                "encoder expects {} input channels, configured for {}",
                CHANNELS, self.config.input_dim
            )));
        }
        let reprs = self.representations(w.rows());
        let d = self.config.embed;
        let len = w.rows().len();
        let mut out = vec![T::neg_infinity(); d];
        for t in 0..len {
            for k in 0..d {
                let v = reprs[t * d + k];
                if v > out[k] {
                    out[k] = v;
                }
            }
        }
        Ok(out)
    }

    /// Writes the model as a versioned text container with named fields.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let c = &self.config;
        let mut out = String::new();
        out.push_str(MODEL_MAGIC);
        out.push('\n');
        out.push_str(&format!("scalar {}\n", scalar_tag::<T>()));
        out.push_str(&format!(
            "arch input={} hidden={} embed={} blocks={} kernel={}\n",
            c.input_dim, c.hidden, c.embed, c.blocks, c.kernel
        ));
        out.push_str(&format!("params {}\n", self.params.len()));
        for p in &self.params {
            out.push_str(&format!("{p}\n"));
        }
        fs::write(path.as_ref(), out)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref())?;
        let mut lines = text.lines();
        match lines.next() {
            Some(l) if l.trim() == MODEL_MAGIC => {}
            other => {
                return Err(MagsenseError::Format(format!(
                    "bad encoder header: {other:?}"
                )))
            }
        }
        match lines.next() {
            Some(l) if l.trim() == format!("scalar {}", scalar_tag::<T>()) => {}
            other => {
                return Err(MagsenseError::Format(format!(
                    "scalar type mismatch: file says {other:?}, expected {}",
                    scalar_tag::<T>()
                )))
            }
        }
        let arch_line = lines
            .next()
            .ok_or_else(|| MagsenseError::Format("missing arch line".into()))?;
        let mut config = EncoderConfig::default();
        for field in arch_line.trim().strip_prefix("arch ").unwrap_or("").split(' ') {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| MagsenseError::Format(format!("bad arch field `{field}`")))?;
            let v: usize = value
                .parse()
                .map_err(|_| MagsenseError::Format(format!("bad arch value `{value}`")))?;
            match key {
                "input" => config.input_dim = v,
                "hidden" => config.hidden = v,
                "embed" => config.embed = v,
                "blocks" => config.blocks = v,
                "kernel" => config.kernel = v,
                other => {
                    return Err(MagsenseError::Format(format!(
                        "unknown arch field `{other}`"
                    )))
                }
            }
        }
        let count: usize = lines
            .next()
            .and_then(|l| l.trim().strip_prefix("params ").map(str::to_string))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| MagsenseError::Format("missing params count".into()))?;
        if count != config.param_count() {
            return Err(MagsenseError::Format(format!(
                "param count {count} does not match architecture ({} expected)",
                config.param_count()
            )));
        }
        let mut params = Vec::with_capacity(count);
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let v: f64 = line
                .trim()
                .parse()
                .map_err(|_| MagsenseError::Format(format!("bad parameter `{line}`")))?;
            params.push(real(v));
        }
        if params.len() != count {
            return Err(MagsenseError::Format(format!(
                "expected {count} parameters, file has {}",
                params.len()
            )));
        }
        Ok(Self { config, params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::WINDOW_LEN;

    fn window_of(seed: u64) -> Window<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..WINDOW_LEN)
            .map(|_| {
                let mut r = [0.0; 9];
                for v in &mut r {
                    *v = rng.gen_range(-1.0..1.0);
                }
                r
            })
            .collect();
        Window::new(rows, 0).unwrap()
    }

    #[test]
    fn identical_windows_embed_identically() {
        let model = EncoderModel::<f64>::init(EncoderConfig::default(), 1);
        let w = window_of(5);
        assert_eq!(model.encode(&w).unwrap(), model.encode(&w).unwrap());
    }

    #[test]
    fn zero_window_embeds_finite_bias_path() {
        let model = EncoderModel::<f64>::init(EncoderConfig::default(), 2);
        let w = Window::new(vec![[0.0; 9]; WINDOW_LEN], 0).unwrap();
        let e = model.encode(&w).unwrap();
        assert_eq!(e.len(), 64);
        assert!(e.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn model_file_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("encoder.model");
        let model = EncoderModel::<f64>::init(EncoderConfig::tiny(), 3);
        model.save(&p).unwrap();
        let back = EncoderModel::<f64>::load(&p).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn f32_model_file_rejected_by_f64_loader() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("encoder32.model");
        let model = EncoderModel::<f32>::init(EncoderConfig::tiny(), 3);
        model.save(&p).unwrap();
        assert!(EncoderModel::<f64>::load(&p).is_err());
        assert!(EncoderModel::<f32>::load(&p).is_ok());
    }
}
