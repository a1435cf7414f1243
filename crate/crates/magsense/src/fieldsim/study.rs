//! Trajectory generation for the sensor-count design study: straight passes
//! through the array region along evenly spaced directions, with Gaussian
//! jitter on the endpoints to emulate natural variation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{MagsenseError, Result};
use crate::scalar::{real, Real};
use crate::vec::{norm3, sub3, Vec3};

use super::{mix_seed, ring_moment_magnitude, MagnetTrajectory, SensorArray};

/// Passes start and end this far from the origin, cm.
pub const STUDY_PASS_RADIUS_CM: f64 = 5.0;
/// Height of the pass plane above the sensor plane, cm.
pub const STUDY_STANDOFF_CM: f64 = 2.0;
/// Constant pass speed, cm/s.
pub const STUDY_SPEED_CM_S: f64 = 8.0;
/// Scale on the ring moment used for study passes. Sub-ring strength keeps
/// the far half of each pass near the sensor noise floor, which is what
/// makes sensor count matter.
pub const STUDY_MOMENT_SCALE: f64 = 0.02;
/// Endpoint jitter standard deviation, cm (per planar axis).
pub const DEFAULT_JITTER_STD_CM: f64 = 1.0;
pub const DEFAULT_DIRECTIONS: usize = 8;
pub const DEFAULT_SAMPLES_PER_ACTION: usize = 100;

/// All jittered passes for one movement direction.
#[derive(Debug, Clone)]
pub struct DirectionTrajectories<T: Real> {
    pub direction_deg: f64,
    pub trajectories: Vec<MagnetTrajectory<T>>,
}

/// Generates `samples_per_action` jittered straight passes for each of
/// `n_directions` evenly spaced directions in the sensor plane.
///
/// Direction k points along k * (360 / n) degrees; the nominal pass runs
/// from -5 cm to +5 cm through the origin at the study standoff height.
/// Endpoints are perturbed independently by an isotropic planar Gaussian.
pub fn design_study_trajectories<T: Real>(
    n_directions: usize,
    jitter_std_cm: f64,
    samples_per_action: usize,
    seed: u64,
) -> Result<Vec<DirectionTrajectories<T>>> {
    if n_directions < 2 {
        return Err(MagsenseError::Validation(
            "design study needs at least 2 directions".into(),
        ));
    }
    let moment_magnitude =
        ring_moment_magnitude(&SensorArray::<T>::standard()).as_f64() * STUDY_MOMENT_SCALE;
    let moment: Vec3<T> = [T::zero(), T::zero(), real(moment_magnitude)];

    let mut out = Vec::with_capacity(n_directions);
    for k in 0..n_directions {
        let direction_deg = k as f64 * 360.0 / n_directions as f64;
        let rad = direction_deg.to_radians();
        let u = [rad.cos(), rad.sin()];
        let nominal_start = [
            -STUDY_PASS_RADIUS_CM * u[0],
            -STUDY_PASS_RADIUS_CM * u[1],
            STUDY_STANDOFF_CM,
        ];
        let nominal_end = [
            STUDY_PASS_RADIUS_CM * u[0],
            STUDY_PASS_RADIUS_CM * u[1],
            STUDY_STANDOFF_CM,
        ];

        let mut trajectories = Vec::with_capacity(samples_per_action);
        for j in 0..samples_per_action {
            let stream = (k * samples_per_action + j) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, stream));
            let mut draw = |std: f64| -> f64 {
                let n: f64 = StandardNormal.sample(&mut rng);
                n * std
            };
            let start: Vec3<T> = [
                real(nominal_start[0] + draw(jitter_std_cm)),
                real(nominal_start[1] + draw(jitter_std_cm)),
                real(nominal_start[2]),
            ];
            let end: Vec3<T> = [
                real(nominal_end[0] + draw(jitter_std_cm)),
                real(nominal_end[1] + draw(jitter_std_cm)),
                real(nominal_end[2]),
            ];
            let length = norm3(sub3(end, start)).as_f64().max(1e-3);
            let duration_s = length / STUDY_SPEED_CM_S;
            trajectories.push(MagnetTrajectory::straight_pass(start, end, moment, duration_s)?);
        }
        out.push(DirectionTrajectories {
            direction_deg,
            trajectories,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn first_direction_is_nominal_x_pass() {
        let dirs = design_study_trajectories::<f64>(8, 0.0, 3, 1).unwrap();
        assert_eq!(dirs.len(), 8);
        assert_relative_eq!(dirs[0].direction_deg, 0.0);
        let wps = dirs[0].trajectories[0].waypoints();
        assert_relative_eq!(wps[0].position[0], -5.0, epsilon = 1e-12);
        assert_relative_eq!(wps[0].position[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(wps[1].position[0], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_jitter_makes_identical_passes() {
        let dirs = design_study_trajectories::<f64>(4, 0.0, 100, 9).unwrap();
        for d in &dirs {
            for t in &d.trajectories {
                assert_eq!(t, &d.trajectories[0]);
            }
        }
    }

    #[test]
    fn mean_planar_deviation_matches_rayleigh_mean() {
        // Isotropic planar Gaussian jitter: E|dev| = sigma * sqrt(pi / 2).
        let sigma = 1.0;
        let dirs = design_study_trajectories::<f64>(8, sigma, 100, 11).unwrap();
        let mut devs = Vec::new();
        for d in &dirs {
            let rad = d.direction_deg.to_radians();
            let nominal = [-5.0 * rad.cos(), -5.0 * rad.sin()];
            for t in &d.trajectories {
                let s = t.waypoints()[0].position;
                devs.push(((s[0] - nominal[0]).powi(2) + (s[1] - nominal[1]).powi(2)).sqrt());
            }
        }
        let mean = devs.iter().sum::<f64>() / devs.len() as f64;
        let expected = sigma * (std::f64::consts::PI / 2.0).sqrt();
        assert!(
            (mean - expected).abs() < 0.15 * expected,
            "mean deviation {mean} vs expected {expected}"
        );
    }

    #[test]
    fn rejects_single_direction() {
        assert!(design_study_trajectories::<f64>(1, 1.0, 10, 0).is_err());
    }
}
