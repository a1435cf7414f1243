//! Streaming noise filtering, device-bias calibration, and the
//! zero-preserving normalization that feeds the encoder.
//!
//! The filter is a first-order exponential smoother, causal by construction.
//! Calibration is a per-sensor hard-iron sphere fit: with the unit rotated
//! through enough orientations in a constant ambient field, readings lie on
//! a sphere whose center is the device bias and whose radius estimates the
//! ambient field magnitude. Normalization subtracts that fixed bias and
//! divides by the fitted magnitude, so bias-corrected zero readings stay
//! exactly zero.

use std::fs;
use std::path::Path;

use crate::error::{MagsenseError, Result};
use crate::frame::{Meta, Recording, SampleFrame, Window, SENSOR_COUNT};
use crate::linalg::{jacobi_eigen_sym, solve};
use crate::scalar::{real, Real};
use crate::vec::{all_finite9, Vec3, Vec9};

/// Default smoothing weight for new observations.
pub const DEFAULT_ALPHA: f64 = 0.5;

/// State of the exponential smoothing filter over the 9 channels.
#[derive(Debug, Clone)]
pub struct SmoothingState<T: Real> {
    alpha: T,
    estimate: Option<Vec9<T>>,
}

impl<T: Real> SmoothingState<T> {
    pub fn new(alpha: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(MagsenseError::Validation(format!(
                "smoothing alpha must lie in (0, 1), got {alpha}"
            )));
        }
        Ok(Self {
            alpha,
            estimate: None,
        })
    }

    /// Starts from a known estimate instead of the first sample.
    pub fn with_estimate(alpha: T, estimate: Vec9<T>) -> Result<Self> {
        let mut s = Self::new(alpha)?;
        s.estimate = Some(estimate);
        Ok(s)
    }

    pub fn estimate(&self) -> Option<&Vec9<T>> {
        self.estimate.as_ref()
    }

    /// One filter update: `est' = alpha * y + (1 - alpha) * est`.
    ///
    /// The first sample initializes the estimate and passes through
    /// unchanged. Uses no future data.
    pub fn smooth_step(&mut self, y: &Vec9<T>) -> Result<Vec9<T>> {
        if !all_finite9(y) {
            return Err(MagsenseError::Validation(
                "non-finite input to smoothing filter".into(),
            ));
        }
        let next = match &self.estimate {
            None => *y,
            Some(est) => {
                let mut out = [T::zero(); 9];
                for i in 0..9 {
                    out[i] = self.alpha * y[i] + (T::one() - self.alpha) * est[i];
                }
                out
            }
        };
        self.estimate = Some(next);
        Ok(next)
    }
}

/// Filters a whole recording with a fresh smoother (state never carries over
/// between recordings).
pub fn smooth_recording<T: Real>(rec: &Recording<T>, alpha: T) -> Result<Recording<T>> {
    let mut state = SmoothingState::new(alpha)?;
    let mut frames = Vec::with_capacity(rec.len());
    for f in rec.frames() {
        let ch = state.smooth_step(&f.channels())?;
        frames.push(SampleFrame::from_channels(f.timestamp_ms, ch)?);
    }
    Recording::new(frames, rec.sample_rate_hz(), rec.meta.clone())
}

/// Per-sensor hard-iron bias plus the ambient-field magnitude used as the
/// normalization scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationProfile<T: Real> {
    pub device_bias: [Vec3<T>; SENSOR_COUNT],
    pub earth_field_magnitude: T,
}

impl<T: Real> CalibrationProfile<T> {
    pub fn new(device_bias: [Vec3<T>; SENSOR_COUNT], earth_field_magnitude: T) -> Result<Self> {
        if !(earth_field_magnitude > T::zero()) {
            return Err(MagsenseError::Validation(format!(
                "earth_field_magnitude must be positive, got {earth_field_magnitude}"
            )));
        }
        Ok(Self {
            device_bias,
            earth_field_magnitude,
        })
    }

    /// Bias-free profile with a given normalization scale.
    pub fn unbiased(earth_field_magnitude: T) -> Result<Self> {
        Self::new([[T::zero(); 3]; SENSOR_COUNT], earth_field_magnitude)
    }

    fn bias_channels(&self) -> Vec9<T> {
        let mut out = [T::zero(); 9];
        for (s, b) in self.device_bias.iter().enumerate() {
            out[3 * s] = b[0];
            out[3 * s + 1] = b[1];
            out[3 * s + 2] = b[2];
        }
        out
    }
}

/// Least-squares sphere fit: returns (center, radius).
///
/// Solves the linear system for `2 c . p + (r^2 - |c|^2) = |p|^2` over all
/// points, then recovers the radius.
fn fit_sphere<T: Real>(points: &[Vec3<T>]) -> Result<(Vec3<T>, T)> {
    let n = points.len();
    if n < 8 {
        return Err(MagsenseError::Calibration(format!(
            "sphere fit needs at least 8 points, got {n}"
        )));
    }
    // Normal equations for the 4-parameter system [2p, 1] * [c; d] = |p|^2.
    let mut ata = vec![T::zero(); 16];
    let mut aty = vec![T::zero(); 4];
    for p in points {
        let row = [real::<T>(2.0) * p[0], real::<T>(2.0) * p[1], real::<T>(2.0) * p[2], T::one()];
        let y = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        for i in 0..4 {
            for j in 0..4 {
                ata[i * 4 + j] = ata[i * 4 + j] + row[i] * row[j];
            }
            aty[i] = aty[i] + row[i] * y;
        }
    }
    let x = solve(&mut ata, &mut aty, 4)?;
    let center = [x[0], x[1], x[2]];
    let r2 = x[3] + center[0] * center[0] + center[1] * center[1] + center[2] * center[2];
    if !(r2 > T::zero()) {
        return Err(MagsenseError::Calibration(
            "sphere fit produced a non-positive radius".into(),
        ));
    }
    Ok((center, r2.sqrt()))
}

/// Checks that the points cover enough of the sphere for the fit to be
/// trustworthy: the centered point cloud must not be close to degenerate.
fn orientation_diversity_ok<T: Real>(points: &[Vec3<T>]) -> bool {
    let n = T::from(points.len()).unwrap();
    let mut mean = [T::zero(); 3];
    for p in points {
        for i in 0..3 {
            mean[i] = mean[i] + p[i];
        }
    }
    for m in &mut mean {
        *m = *m / n;
    }
    let mut cov = vec![T::zero(); 9];
    for p in points {
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for i in 0..3 {
            for j in 0..3 {
                cov[i * 3 + j] = cov[i * 3 + j] + d[i] * d[j];
            }
        }
    }
    for c in &mut cov {
        *c = *c / n;
    }
    let (vals, _) = jacobi_eigen_sym(&cov, 3);
    let max = vals[0];
    let min = vals[2];
    max > T::zero() && min / max > real(0.02)
}

/// Fits per-sensor device bias from the first `duration_s` seconds of a
/// magnet-free recording that includes natural re-orientation of the unit.
pub fn calibrate_device_bias<T: Real>(
    rec: &Recording<T>,
    duration_s: f64,
) -> Result<CalibrationProfile<T>> {
    if rec.duration_s() + 1e-9 < duration_s {
        return Err(MagsenseError::Calibration(format!(
            "calibration needs {duration_s} s of data, recording has {:.2} s",
            rec.duration_s()
        )));
    }
    let t0 = rec.frames()[0].timestamp_ms;
    let cutoff = t0 + (duration_s * 1000.0).round() as i64;
    let frames: Vec<&SampleFrame<T>> = rec
        .frames()
        .iter()
        .take_while(|f| f.timestamp_ms <= cutoff)
        .collect();

    let mut biases = [[T::zero(); 3]; SENSOR_COUNT];
    let mut radius_sum = T::zero();
    for s in 0..SENSOR_COUNT {
        let points: Vec<Vec3<T>> = frames.iter().map(|f| f.readings[s]).collect();
        if !orientation_diversity_ok(&points) {
            return Err(MagsenseError::Calibration(format!(
                "insufficient orientation diversity on sensor {s} for a reliable fit"
            )));
        }
        let (center, radius) = fit_sphere(&points)?;
        biases[s] = center;
        radius_sum = radius_sum + radius;
    }
    let magnitude = radius_sum / T::from(SENSOR_COUNT).unwrap();
    CalibrationProfile::new(biases, magnitude)
}

/// Subtracts the per-sensor bias and scales by the ambient-field magnitude.
/// No mean subtraction happens beyond the fixed bias, so zero
/// (bias-corrected) readings map to zero.
pub fn normalize_window<T: Real>(w: &Window<T>, profile: &CalibrationProfile<T>) -> Window<T> {
    let bias = profile.bias_channels();
    let scale = profile.earth_field_magnitude;
    w.map_rows(|row| {
        let mut out = [T::zero(); 9];
        for i in 0..9 {
            out[i] = (row[i] - bias[i]) / scale;
        }
        out
    })
}

/// Exact inverse of [`normalize_window`] for the same profile.
pub fn denormalize_window<T: Real>(w: &Window<T>, profile: &CalibrationProfile<T>) -> Window<T> {
    let bias = profile.bias_channels();
    let scale = profile.earth_field_magnitude;
    w.map_rows(|row| {
        let mut out = [T::zero(); 9];
        for i in 0..9 {
            out[i] = row[i] * scale + bias[i];
        }
        out
    })
}

/// Applies bias subtraction and scaling to a whole recording.
pub fn normalize_recording<T: Real>(
    rec: &Recording<T>,
    profile: &CalibrationProfile<T>,
) -> Result<Recording<T>> {
    let bias = profile.bias_channels();
    let scale = profile.earth_field_magnitude;
    let frames = rec
        .frames()
        .iter()
        .map(|f| {
            let ch = f.channels();
            let mut out = [T::zero(); 9];
            for i in 0..9 {
                out[i] = (ch[i] - bias[i]) / scale;
            }
            SampleFrame::from_channels(f.timestamp_ms, out)
        })
        .collect::<Result<Vec<_>>>()?;
    Recording::new(frames, rec.sample_rate_hz(), rec.meta.clone())
}

const PROFILE_MAGIC: &str = "magsense-profile v1";

/// Writes the profile as a small versioned key/value text file.
pub fn write_profile<T: Real>(profile: &CalibrationProfile<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from(PROFILE_MAGIC);
    out.push('\n');
    for (s, b) in profile.device_bias.iter().enumerate() {
        out.push_str(&format!(
            "bias{s} {} {} {}\n",
            b[0].as_f64(),
            b[1].as_f64(),
            b[2].as_f64()
        ));
    }
    out.push_str(&format!(
        "earth_mag {}\n",
        profile.earth_field_magnitude.as_f64()
    ));
    fs::write(path.as_ref(), out)?;
    Ok(())
}

pub fn read_profile<T: Real>(path: impl AsRef<Path>) -> Result<CalibrationProfile<T>> {
    let text = fs::read_to_string(path.as_ref())?;
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.trim() == PROFILE_MAGIC => {}
        other => {
            return Err(MagsenseError::Format(format!(
                "bad profile header: {other:?}"
            )))
        }
    }
    let mut bias = [[T::zero(); 3]; SENSOR_COUNT];
    let mut mag: Option<T> = None;
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            [key, x, y, z] if key.starts_with("bias") => {
                let idx: usize = key[4..]
                    .parse()
                    .map_err(|_| MagsenseError::Format(format!("bad bias key `{key}`")))?;
                if idx >= SENSOR_COUNT {
                    return Err(MagsenseError::Format(format!("sensor index {idx} out of range")));
                }
                bias[idx] = [parse_scalar(x)?, parse_scalar(y)?, parse_scalar(z)?];
            }
            ["earth_mag", m] => mag = Some(parse_scalar(m)?),
            [] => {}
            _ => {
                return Err(MagsenseError::Format(format!(
                    "unrecognized profile line `{line}`"
                )))
            }
        }
    }
    let mag = mag.ok_or_else(|| MagsenseError::Format("profile missing earth_mag".into()))?;
    CalibrationProfile::new(bias, mag)
}

fn parse_scalar<T: Real>(s: &str) -> Result<T> {
    let v: f64 = s
        .parse()
        .map_err(|_| MagsenseError::Format(format!("bad scalar `{s}`")))?;
    Ok(real(v))
}

/// Extracts meta-declared environment info into a profile when present
/// (synthetic corpora record the uniform field they were generated with).
pub fn profile_from_meta<T: Real>(meta: &Meta) -> Option<CalibrationProfile<T>> {
    let get = |k: &str| meta.get(k).and_then(|v| v.parse::<f64>().ok());
    let (x, y, z) = (get("env_ux")?, get("env_uy")?, get("env_uz")?);
    let mag = (x * x + y * y + z * z).sqrt();
    if mag <= 0.0 {
        return None;
    }
    CalibrationProfile::unbiased(real(mag)).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{Meta, WINDOW_LEN};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn alpha_bounds_enforced() {
        assert!(SmoothingState::<f64>::new(0.0).is_err());
        assert!(SmoothingState::<f64>::new(1.0).is_err());
        assert!(SmoothingState::<f64>::new(0.5).is_ok());
    }

    #[test]
    fn first_sample_passes_through_then_halves_gap() {
        let mut s = SmoothingState::<f64>::with_estimate(0.5, [0.0; 9]).unwrap();
        let out = s.smooth_step(&[10.0; 9]).unwrap();
        assert_eq!(out, [5.0; 9]);
    }

    #[test]
    fn constant_stream_is_fixed_point() {
        // Exact fixed point at alpha = 0.5 (an exact binary fraction).
        let mut s = SmoothingState::<f64>::new(0.5).unwrap();
        let c = [7.25; 9];
        let first = s.smooth_step(&c).unwrap();
        assert_eq!(first, c);
        for _ in 0..20 {
            assert_eq!(s.smooth_step(&c).unwrap(), c);
        }
        // At other alphas the stream converges to c within rounding.
        let mut s = SmoothingState::<f64>::new(0.3).unwrap();
        for _ in 0..50 {
            s.smooth_step(&c).unwrap();
        }
        let out = s.smooth_step(&c).unwrap();
        assert_relative_eq!(out[0], 7.25, epsilon = 1e-12);
    }

    #[test]
    fn unit_step_response_matches_closed_form() {
        // From estimate 0 with constant input 1: |est_t - 1| = (1 - alpha)^t.
        for &alpha in &[0.5, 0.25, 0.8] {
            let mut s = SmoothingState::<f64>::with_estimate(alpha, [0.0; 9]).unwrap();
            for t in 1..=10 {
                let out = s.smooth_step(&[1.0; 9]).unwrap();
                let expected = (1.0 - alpha).powi(t);
                assert_relative_eq!((out[0] - 1.0).abs(), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn contraction_toward_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let alpha: f64 = rng.gen_range(0.05..0.95);
            let est = [rng.gen_range(-50.0..50.0); 9];
            let y = [rng.gen_range(-50.0..50.0); 9];
            let mut s = SmoothingState::with_estimate(alpha, est).unwrap();
            let out = s.smooth_step(&y).unwrap();
            assert_relative_eq!(
                (out[0] - y[0]).abs(),
                (1.0 - alpha) * (est[0] - y[0]).abs(),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn steady_state_variance_ratio_one_third_at_half_alpha() {
        // For i.i.d. input noise, output variance -> alpha / (2 - alpha)
        // times input variance; at alpha = 0.5 the ratio is 1/3.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut s = SmoothingState::<f64>::new(0.5).unwrap();
        let mut outputs = Vec::new();
        for i in 0..60_000 {
            let y = [<StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng); 9];
            let out = s.smooth_step(&y).unwrap();
            if i > 100 {
                outputs.push(out[0]);
            }
        }
        let n = outputs.len() as f64;
        let mean = outputs.iter().sum::<f64>() / n;
        let var = outputs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!(
            (var - 1.0 / 3.0).abs() < 0.1 / 3.0,
            "variance ratio {var} not within 10 % of 1/3"
        );
    }

    fn sphere_recording(center: [f64; 3], radius: f64, n: usize, seed: u64) -> Recording<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..n)
            .map(|i| {
                let dir = loop {
                    let v: [f64; 3] = [
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    ];
                    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    if norm > 1e-6 {
                        break [v[0] / norm, v[1] / norm, v[2] / norm];
                    }
                };
                let p = [
                    center[0] + radius * dir[0],
                    center[1] + radius * dir[1],
                    center[2] + radius * dir[2],
                ];
                SampleFrame::new(i as i64 * 59, [p, p, p]).unwrap()
            })
            .collect();
        Recording::new(frames, 17.0, Meta::new()).unwrap()
    }

    #[test]
    fn sphere_fit_recovers_known_bias_within_one_percent() {
        let rec = sphere_recording([30.0, 0.0, 0.0], 50.0, 200, 99);
        let profile = calibrate_device_bias(&rec, 10.0).unwrap();
        for s in 0..SENSOR_COUNT {
            assert!((profile.device_bias[s][0] - 30.0).abs() < 0.5);
            assert!(profile.device_bias[s][1].abs() < 0.5);
            assert!(profile.device_bias[s][2].abs() < 0.5);
        }
        assert!((profile.earth_field_magnitude - 50.0).abs() < 0.5);
    }

    #[test]
    fn zero_bias_input_fits_near_origin() {
        let rec = sphere_recording([0.0, 0.0, 0.0], 45.0, 200, 4);
        let profile = calibrate_device_bias(&rec, 10.0).unwrap();
        for s in 0..SENSOR_COUNT {
            for a in 0..3 {
                assert!(profile.device_bias[s][a].abs() < 0.5);
            }
        }
    }

    #[test]
    fn large_offset_scenario_recenters_readings() {
        // Strong constant offset plus rotation coverage: after subtracting the
        // fitted bias the readings sit on an origin-centered sphere.
        let center = [120.0, -40.0, 80.0];
        let rec = sphere_recording(center, 48.0, 300, 21);
        let profile = calibrate_device_bias(&rec, 10.0).unwrap();
        for f in rec.frames().iter().take(50) {
            for s in 0..SENSOR_COUNT {
                let r = f.readings[s];
                let b = profile.device_bias[s];
                let centered =
                    ((r[0] - b[0]).powi(2) + (r[1] - b[1]).powi(2) + (r[2] - b[2]).powi(2)).sqrt();
                assert!((centered - 48.0).abs() < 1.0);
            }
        }
    }

    #[test]
    fn poor_orientation_diversity_is_rejected() {
        // All points in a tiny arc: the fit must refuse.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let frames = (0..200)
            .map(|i| {
                let t = rng.gen_range(-0.02..0.02f64);
                let p = [50.0 * t.cos(), 50.0 * t.sin(), 0.0];
                SampleFrame::new(i as i64 * 59, [p, p, p]).unwrap()
            })
            .collect();
        let rec = Recording::new(frames, 17.0, Meta::new()).unwrap();
        assert!(calibrate_device_bias(&rec, 10.0).is_err());
    }

    #[test]
    fn short_recording_is_rejected() {
        let rec = sphere_recording([0.0; 3], 45.0, 20, 4);
        assert!(calibrate_device_bias(&rec, 10.0).is_err());
    }

    fn window_of(value: f64) -> Window<f64> {
        Window::new(vec![[value; 9]; WINDOW_LEN], 0).unwrap()
    }

    #[test]
    fn normalization_preserves_zeros_and_scale() {
        let profile = CalibrationProfile::unbiased(48.0).unwrap();
        let zero = normalize_window(&window_of(0.0), &profile);
        assert!(zero.rows().iter().flatten().all(|&x| x == 0.0));
        let ones = normalize_window(&window_of(48.0), &profile);
        for &x in ones.rows().iter().flatten() {
            assert_relative_eq!(x, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn normalization_round_trips_below_1e9_relative() {
        let profile = CalibrationProfile::new([[3.0, -2.0, 7.5]; 3], 47.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rows: Vec<[f64; 9]> = (0..WINDOW_LEN)
            .map(|_| {
                let mut r = [0.0; 9];
                for v in &mut r {
                    *v = rng.gen_range(-80.0..80.0);
                }
                r
            })
            .collect();
        let w = Window::new(rows, 0).unwrap();
        let back = denormalize_window(&normalize_window(&w, &profile), &profile);
        for (a, b) in w.rows().iter().flatten().zip(back.rows().iter().flatten()) {
            let rel = (a - b).abs() / a.abs().max(1.0);
            assert!(rel < 1e-9, "round-trip relative error {rel}");
        }
    }

    #[test]
    fn normalize_commutes_with_window_slicing() {
        let profile = CalibrationProfile::new([[1.0, 2.0, 3.0]; 3], 45.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let frames: Vec<SampleFrame<f64>> = (0..40)
            .map(|i| {
                let mut ch = [0.0; 9];
                for v in &mut ch {
                    *v = rng.gen_range(-60.0..60.0);
                }
                SampleFrame::from_channels(i * 59, ch).unwrap()
            })
            .collect();
        let rec = Recording::new(frames, 17.0, Meta::new()).unwrap();

        let normalized_first = normalize_recording(&rec, &profile).unwrap();
        let a = crate::frame::sliding_windows(&normalized_first, WINDOW_LEN, 1);
        let b: Vec<Window<f64>> = crate::frame::sliding_windows(&rec, WINDOW_LEN, 1)
            .iter()
            .map(|w| normalize_window(w, &profile))
            .collect();
        assert_eq!(a.len(), b.len());
        for (wa, wb) in a.iter().zip(b.iter()) {
            for (ra, rb) in wa.rows().iter().zip(wb.rows().iter()) {
                for i in 0..9 {
                    assert_relative_eq!(ra[i], rb[i], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn profile_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("profile.txt");
        let profile =
            CalibrationProfile::new([[1.5, -2.25, 0.0], [0.1, 0.2, 0.3], [-4.0, 5.0, -6.0]], 47.25)
                .unwrap();
        write_profile(&profile, &p).unwrap();
        let back: CalibrationProfile<f64> = read_profile(&p).unwrap();
        assert_eq!(profile, back);
    }
}
