//! Magnetic dipole physics, sensor-array geometry, and synthetic recording
//! generation.
//!
//! Units are fixed across the crate: positions in centimeters, dipole
//! moments in A·cm², fields in microtesla. In those units the point-dipole
//! law reads
//!
//! ```text
//! B = 10 * (3 (m . rhat) rhat - m) / |r|^3    [µT]
//! ```
//!
//! because (µ0 / 4π) * (A·cm² / cm³) = 1e-5 T = 10 µT.

pub mod corpus;
pub mod study;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{MagsenseError, Result};
use crate::frame::{Meta, Recording, SampleFrame, SENSOR_COUNT};
use crate::magdelta::{max_pair_delta_fields, DEFAULT_THRESHOLD_UT};
use crate::scalar::{real, Real};
use crate::vec::{add3, dot3, lerp3, norm3, scale3, sub3, Vec3};

/// Field constant for cm / A·cm² / µT units.
pub const DIPOLE_UT_PER_ACM2_CM3: f64 = 10.0;
/// Below this separation the point-dipole assumption is not meaningful; the
/// field is evaluated at the clamp radius instead and flagged.
pub const DEFAULT_R_MIN_CM: f64 = 0.5;
/// Spacing of the sensing unit's magnetometers along x, in cm.
pub const SENSOR_SPACING_CM: f64 = 0.8;
/// Ring magnets stay detectable out to roughly this range.
pub const RING_DETECT_RANGE_CM: f64 = 11.0;
/// Realistic bound on the uniform ambient field magnitude.
pub const MAX_UNIFORM_FIELD_UT: f64 = 100.0;

/// A dipole field evaluation, flagged when the separation had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleSample<T: Real> {
    pub field: Vec3<T>,
    pub clamped: bool,
}

/// Point-dipole field of `moment` (A·cm²) at `sensor_pos`, magnet at
/// `magnet_pos` (both cm), in µT.
pub fn dipole_field<T: Real>(
    moment: Vec3<T>,
    magnet_pos: Vec3<T>,
    sensor_pos: Vec3<T>,
    r_min_cm: T,
) -> DipoleSample<T> {
    let r = sub3(sensor_pos, magnet_pos);
    let dist = norm3(r);
    let clamped = dist < r_min_cm;
    let eff_dist = if clamped { r_min_cm } else { dist };
    let rhat = if dist > T::min_positive_value() {
        scale3(r, T::one() / dist)
    } else {
        [T::zero(), T::zero(), T::one()]
    };
    let m_dot_r = dot3(moment, rhat);
    let term = sub3(scale3(rhat, real::<T>(3.0) * m_dot_r), moment);
    let scale = real::<T>(DIPOLE_UT_PER_ACM2_CM3) / (eff_dist * eff_dist * eff_dist);
    DipoleSample {
        field: scale3(term, scale),
        clamped,
    }
}

/// Geometry and noise model of a (simulated) sensing unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray<T: Real> {
    pub positions: Vec<Vec3<T>>,
    /// Per-axis Gaussian noise standard deviation, µT.
    pub noise_std: Vec3<T>,
    pub sample_rate_hz: f64,
}

impl<T: Real> SensorArray<T> {
    /// Array of `n` sensors at 0.8 cm spacing along x with the datasheet
    /// noise figures at 17 Hz.
    pub fn with_sensor_count(n: usize) -> Result<Self> {
        let positions = (0..n)
            .map(|k| [real::<T>(SENSOR_SPACING_CM * k as f64), T::zero(), T::zero()])
            .collect();
        Self::new(positions, [real(0.6), real(0.6), real(1.1)], 17.0)
    }

    pub fn new(positions: Vec<Vec3<T>>, noise_std: Vec3<T>, sample_rate_hz: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(MagsenseError::Validation("array needs at least one sensor".into()));
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if norm3(sub3(positions[i], positions[j])) < real(1e-9) {
                    return Err(MagsenseError::Validation(format!(
                        "sensor positions {i} and {j} coincide"
                    )));
                }
            }
        }
        if noise_std.iter().any(|&s| s < T::zero()) {
            return Err(MagsenseError::Validation("noise_std components must be >= 0".into()));
        }
        if !(sample_rate_hz > 0.0) {
            return Err(MagsenseError::Validation("sample_rate_hz must be positive".into()));
        }
        Ok(Self {
            positions,
            noise_std,
            sample_rate_hz,
        })
    }

    /// Standard 3-sensor unit.
    pub fn standard() -> Self {
        Self::with_sensor_count(SENSOR_COUNT).expect("standard array is valid")
    }

    /// Noise-free copy, for ground-truth simulation.
    pub fn noiseless(&self) -> Self {
        Self {
            positions: self.positions.clone(),
            noise_std: [T::zero(); 3],
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub fn centroid(&self) -> Vec3<T> {
        let n = T::from(self.positions.len()).unwrap();
        let mut c = [T::zero(); 3];
        for p in &self.positions {
            c = add3(c, *p);
        }
        scale3(c, T::one() / n)
    }
}

/// Uniform ambient field plus fixed per-sensor device bias, both µT.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentField<T: Real> {
    pub uniform_field: Vec3<T>,
    pub device_bias: Vec<Vec3<T>>,
}

impl<T: Real> EnvironmentField<T> {
    pub fn new(uniform_field: Vec3<T>, device_bias: Vec<Vec3<T>>) -> Result<Self> {
        if norm3(uniform_field) > real(MAX_UNIFORM_FIELD_UT) {
            return Err(MagsenseError::Validation(format!(
                "uniform field magnitude exceeds {MAX_UNIFORM_FIELD_UT} µT"
            )));
        }
        Ok(Self {
            uniform_field,
            device_bias,
        })
    }

    pub fn zero() -> Self {
        Self {
            uniform_field: [T::zero(); 3],
            device_bias: Vec::new(),
        }
    }

    /// Mid-latitude ambient field, |B| ~ 44.7 µT.
    pub fn earth() -> Self {
        Self {
            uniform_field: [real(20.0), T::zero(), real(40.0)],
            device_bias: Vec::new(),
        }
    }

    fn bias_for(&self, sensor: usize) -> Vec3<T> {
        self.device_bias.get(sensor).copied().unwrap_or([T::zero(); 3])
    }
}

/// Time-stamped pose of a magnet along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct Waypoint<T: Real> {
    pub time_s: f64,
    pub position: Vec3<T>,
    pub moment: Vec3<T>,
}

/// Piecewise-linear magnet path with a linearly interpolated moment.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnetTrajectory<T: Real> {
    waypoints: Vec<Waypoint<T>>,
    duration_s: f64,
}

impl<T: Real> MagnetTrajectory<T> {
    pub fn new(waypoints: Vec<Waypoint<T>>, duration_s: f64) -> Result<Self> {
        if !(duration_s > 0.0) {
            return Err(MagsenseError::Validation("trajectory duration must be positive".into()));
        }
        if waypoints.is_empty() {
            return Err(MagsenseError::Validation("trajectory needs at least one waypoint".into()));
        }
        for pair in waypoints.windows(2) {
            if pair[1].time_s <= pair[0].time_s {
                return Err(MagsenseError::Validation("waypoint times must be increasing".into()));
            }
        }
        if waypoints.first().unwrap().time_s < 0.0
            || waypoints.last().unwrap().time_s > duration_s + 1e-9
        {
            return Err(MagsenseError::Validation(
                "waypoint times must lie within [0, duration]".into(),
            ));
        }
        Ok(Self {
            waypoints,
            duration_s,
        })
    }

    /// Straight constant-speed pass between two points with a fixed moment.
    pub fn straight_pass(start: Vec3<T>, end: Vec3<T>, moment: Vec3<T>, duration_s: f64) -> Result<Self> {
        Self::new(
            vec![
                Waypoint {
                    time_s: 0.0,
                    position: start,
                    moment,
                },
                Waypoint {
                    time_s: duration_s,
                    position: end,
                    moment,
                },
            ],
            duration_s,
        )
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn waypoints(&self) -> &[Waypoint<T>] {
        &self.waypoints
    }

    /// Pose at time `t`, clamped to the first/last waypoint outside the
    /// covered interval.
    pub fn sample(&self, t: f64) -> (Vec3<T>, Vec3<T>) {
        let wps = &self.waypoints;
        if t <= wps[0].time_s {
            return (wps[0].position, wps[0].moment);
        }
        if t >= wps[wps.len() - 1].time_s {
            let last = &wps[wps.len() - 1];
            return (last.position, last.moment);
        }
        let hi = wps.partition_point(|w| w.time_s <= t).min(wps.len() - 1);
        let (a, b) = (&wps[hi - 1], &wps[hi]);
        let frac = real::<T>((t - a.time_s) / (b.time_s - a.time_s));
        (
            lerp3(a.position, b.position, frac),
            lerp3(a.moment, b.moment, frac),
        )
    }
}

/// One simulated tick: timestamp plus the field at every sensor.
pub type FieldTick<T> = (i64, Vec<Vec3<T>>);

/// Simulates raw per-sensor fields for an arbitrary sensor count.
///
/// Each tick sums the dipole contribution of every magnet, the uniform
/// field, the per-sensor device bias, and per-axis Gaussian noise. Noise is
/// drawn in a fixed (tick, sensor, axis) order from a ChaCha8 stream, so a
/// given seed always produces the same recording.
pub fn simulate_fields<T: Real>(
    trajs: &[MagnetTrajectory<T>],
    array: &SensorArray<T>,
    env: &EnvironmentField<T>,
    seed: u64,
) -> Vec<FieldTick<T>> {
    let duration = trajs
        .iter()
        .map(MagnetTrajectory::duration_s)
        .fold(0.0f64, f64::max);
    let rate = array.sample_rate_hz;
    let n_ticks = (duration * rate).floor() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_min: T = real(DEFAULT_R_MIN_CM);

    let mut out = Vec::with_capacity(n_ticks);
    for i in 0..n_ticks {
        let t = i as f64 / rate;
        let timestamp_ms = (i as f64 * 1000.0 / rate).round() as i64;
        let mut fields = Vec::with_capacity(array.positions.len());
        for (s, &pos) in array.positions.iter().enumerate() {
            let mut b = add3(env.uniform_field, env.bias_for(s));
            for traj in trajs {
                let (magnet_pos, moment) = traj.sample(t);
                b = add3(b, dipole_field(moment, magnet_pos, pos, r_min).field);
            }
            for axis in 0..3 {
                let n: f64 = StandardNormal.sample(&mut rng);
                b[axis] = b[axis] + array.noise_std[axis] * real(n);
            }
            fields.push(b);
        }
        out.push((timestamp_ms, fields));
    }
    out
}

/// Simulates a [`Recording`] on the standard 3-sensor unit.
pub fn simulate_recording<T: Real>(
    traj: &MagnetTrajectory<T>,
    array: &SensorArray<T>,
    env: &EnvironmentField<T>,
    seed: u64,
) -> Result<Recording<T>> {
    simulate_recording_multi(std::slice::from_ref(traj), array, env, seed, Meta::new())
}

/// Multi-magnet variant of [`simulate_recording`]; readings superpose.
pub fn simulate_recording_multi<T: Real>(
    trajs: &[MagnetTrajectory<T>],
    array: &SensorArray<T>,
    env: &EnvironmentField<T>,
    seed: u64,
    mut meta: Meta,
) -> Result<Recording<T>> {
    if array.positions.len() != SENSOR_COUNT {
        return Err(MagsenseError::Validation(format!(
            "recordings are defined for the {SENSOR_COUNT}-sensor unit, array has {}",
            array.positions.len()
        )));
    }
    let ticks = simulate_fields(trajs, array, env, seed);
    let frames = ticks
        .into_iter()
        .map(|(t, fields)| SampleFrame::new(t, [fields[0], fields[1], fields[2]]))
        .collect::<Result<Vec<_>>>()?;
    meta.insert("env_ux".into(), format!("{}", env.uniform_field[0].as_f64()));
    meta.insert("env_uy".into(), format!("{}", env.uniform_field[1].as_f64()));
    meta.insert("env_uz".into(), format!("{}", env.uniform_field[2].as_f64()));
    Recording::new(frames, array.sample_rate_hz, meta)
}

/// Passive magnet form factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MagnetPreset {
    /// Axially magnetized finger ring; moment calibrated so the maximum
    /// pairwise sensor difference equals the trigger threshold at the
    /// 11 cm detection range.
    Ring,
    /// Flexible magnetic silicon patch, modeled at a tenth of the ring moment.
    Silicon,
}

impl MagnetPreset {
    pub fn name(&self) -> &'static str {
        match self {
            MagnetPreset::Ring => "ring",
            MagnetPreset::Silicon => "silicon",
        }
    }

    /// Dipole moment magnitude in A·cm² for the given array geometry.
    pub fn moment_magnitude<T: Real>(&self, array: &SensorArray<T>) -> T {
        let ring = ring_moment_magnitude(array);
        match self {
            MagnetPreset::Ring => ring,
            MagnetPreset::Silicon => ring / real(10.0),
        }
    }
}

/// Solves for the ring moment: pair deltas are linear in the moment, so one
/// unit-moment evaluation at the detection range fixes the scale.
pub fn ring_moment_magnitude<T: Real>(array: &SensorArray<T>) -> T {
    let probe = approach_point(array, real(RING_DETECT_RANGE_CM));
    let unit_moment = [T::zero(), T::zero(), T::one()];
    let fields: Vec<Vec3<T>> = array
        .positions
        .iter()
        .map(|&p| dipole_field(unit_moment, probe, p, real(DEFAULT_R_MIN_CM)).field)
        .collect();
    let delta = max_pair_delta_fields(&fields);
    real::<T>(DEFAULT_THRESHOLD_UT) / delta
}

/// Canonical approach point: on the +z axis above the array centroid.
pub fn approach_point<T: Real>(array: &SensorArray<T>, height_cm: T) -> Vec3<T> {
    let mut c = array.centroid();
    c[2] = c[2] + height_cm;
    c
}

/// Deterministic seed mixing for derived streams (one stream per trajectory,
/// user, or sample). SplitMix64 finalizer over `seed ^ (stream * phi64)`.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
