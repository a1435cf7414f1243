//! Synthetic gesture and pretraining corpora.
//!
//! Each gesture recording embeds an approach-dwell-retreat trajectory toward
//! a class-specific anchor point, with per-user biases (anchor offset, speed,
//! magnet tilt) layered on per-sample jitter so that classes stay separable
//! but not degenerate. Ground-truth event boundaries (first/last frame whose
//! noise-free pair delta crosses the trigger threshold) are stored in the
//! recording metadata.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{MagsenseError, Result};
use crate::frame::{Meta, Recording};
use crate::magdelta::{pair_delta, DEFAULT_THRESHOLD_UT};
use crate::scalar::{real, Real};
use crate::vec::{add3, rotate_axis, rotate_z, Vec3};

use super::{
    mix_seed, simulate_recording_multi, EnvironmentField, MagnetPreset, MagnetTrajectory,
    SensorArray, Waypoint,
};

/// Classification tasks the generator can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GestureTask {
    /// Seven facial regions plus an explicit no-touch class, ring magnet.
    Face8,
    /// 3x3 skin grid around a lesion, magnetic silicon patch.
    Scratch9,
    /// Scratch9 relabeled center-vs-rest.
    ScratchBinary,
}

impl GestureTask {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "face8" => Ok(Self::Face8),
            "scratch9" => Ok(Self::Scratch9),
            "scratch_binary" => Ok(Self::ScratchBinary),
            other => Err(MagsenseError::Validation(format!(
                "unknown task `{other}` (expected face8, scratch9, or scratch_binary)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Face8 => "face8",
            Self::Scratch9 => "scratch9",
            Self::ScratchBinary => "scratch_binary",
        }
    }

    pub fn preset(&self) -> MagnetPreset {
        match self {
            Self::Face8 => MagnetPreset::Ring,
            Self::Scratch9 | Self::ScratchBinary => MagnetPreset::Silicon,
        }
    }

    /// Range of natural gesture durations, seconds.
    pub fn duration_range_s(&self) -> (f64, f64) {
        match self {
            Self::Face8 => (3.0, 15.0),
            Self::Scratch9 | Self::ScratchBinary => (2.0, 12.0),
        }
    }

    /// Class labels in id order (sorted), as the classifier will see them.
    pub fn class_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = match self {
            Self::Face8 => FACE_ANCHORS.iter().map(|(l, _)| l.to_string()).collect(),
            Self::Scratch9 => (0..3)
                .flat_map(|r| (0..3).map(move |c| format!("cell_{r}_{c}")))
                .collect(),
            Self::ScratchBinary => vec!["no_scratch".into(), "scratch".into()],
        };
        labels.sort();
        labels
    }
}

/// Full control over corpus generation; [`synth_gesture_corpus`] applies the
/// defaults.
#[derive(Debug, Clone)]
pub struct CorpusParams<T: Real> {
    pub task: GestureTask,
    pub n_per_class: usize,
    pub seed: u64,
    /// Synthetic users cycled across samples (stored in meta).
    pub n_users: usize,
    /// Rotation of the uniform ambient field about z, degrees.
    pub orientation_deg: f64,
    pub array: SensorArray<T>,
    pub base_env: EnvironmentField<T>,
}

impl<T: Real> CorpusParams<T> {
    pub fn new(task: GestureTask, n_per_class: usize, seed: u64) -> Self {
        Self {
            task,
            n_per_class,
            seed,
            n_users: 4,
            orientation_deg: 0.0,
            array: SensorArray::standard(),
            base_env: EnvironmentField::earth(),
        }
    }
}

/// Generates `n_per_class` labeled recordings per class with default users,
/// orientation, array, and environment.
pub fn synth_gesture_corpus<T: Real>(
    task: GestureTask,
    n_per_class: usize,
    seed: u64,
) -> Result<Vec<Recording<T>>> {
    generate_corpus(&CorpusParams::new(task, n_per_class, seed))
}

const FACE_ANCHOR_RADIUS_CM: f64 = 6.0;
const NO_TOUCH_RADIUS_CM: f64 = 10.0;
const SCRATCH_GRID_SPACING_CM: f64 = 3.0;
const SCRATCH_STANDOFF_CM: f64 = 1.5;
const LEAD_IN_S: f64 = 2.0;
const TAIL_S: f64 = 1.5;

/// Facial anchors: the top of a hemisphere plus a 45-degree ring, with the
/// no-touch pass farther out along the hemisphere axis.
const FACE_ANCHORS: [(&str, f64); 8] = [
    // (label, ring azimuth in degrees; NaN-free sentinel -1 marks specials)
    ("forehead", -1.0),
    ("nose", 90.0),
    ("lips", 270.0),
    ("left_eye", 150.0),
    ("right_eye", 30.0),
    ("left_cheek", 210.0),
    ("right_cheek", 330.0),
    ("no_touch", -2.0),
];

fn anchor_positions<T: Real>(task: GestureTask, array: &SensorArray<T>) -> Vec<(String, Vec3<T>)> {
    let c = array.centroid();
    match task {
        GestureTask::Face8 => FACE_ANCHORS
            .iter()
            .map(|&(label, azimuth)| {
                let pos = if azimuth == -1.0 {
                    add3(c, [T::zero(), T::zero(), real(FACE_ANCHOR_RADIUS_CM)])
                } else if azimuth == -2.0 {
                    add3(c, [T::zero(), T::zero(), real(NO_TOUCH_RADIUS_CM)])
                } else {
                    let elev = 45f64.to_radians();
                    let az = azimuth.to_radians();
                    add3(
                        c,
                        [
                            real(FACE_ANCHOR_RADIUS_CM * elev.cos() * az.cos()),
                            real(FACE_ANCHOR_RADIUS_CM * elev.cos() * az.sin()),
                            real(FACE_ANCHOR_RADIUS_CM * elev.sin()),
                        ],
                    )
                };
                (label.to_string(), pos)
            })
            .collect(),
        GestureTask::Scratch9 | GestureTask::ScratchBinary => {
            let mut out = Vec::with_capacity(9);
            for r in 0..3i32 {
                for col in 0..3i32 {
                    let pos = add3(
                        c,
                        [
                            real(((col - 1) as f64) * SCRATCH_GRID_SPACING_CM),
                            real(((r - 1) as f64) * SCRATCH_GRID_SPACING_CM),
                            real(SCRATCH_STANDOFF_CM),
                        ],
                    );
                    out.push((format!("cell_{r}_{col}"), pos));
                }
            }
            out
        }
    }
}

/// Per-user systematic variation, derived once per user id.
struct UserStyle {
    anchor_offset: [f64; 3],
    speed_factor: f64,
    tilt_polar_deg: f64,
    tilt_azimuth_deg: f64,
    park_azimuth_deg: f64,
}

const USER_SALT: u64 = 0x5EED_05E5; // distinct stream domain for user styles

fn user_style(seed: u64, user: usize) -> UserStyle {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed ^ USER_SALT, user as u64));
    let mut normal = |std: f64| -> f64 {
        let n: f64 = StandardNormal.sample(&mut rng);
        n * std
    };
    let anchor_offset = [normal(0.3), normal(0.3), normal(0.15)];
    UserStyle {
        anchor_offset,
        speed_factor: rng.gen_range(0.75..1.25),
        tilt_polar_deg: rng.gen_range(0.0..20.0),
        tilt_azimuth_deg: rng.gen_range(0.0..360.0),
        park_azimuth_deg: rng.gen_range(0.0..360.0),
    }
}

fn tilted_moment<T: Real>(magnitude: f64, polar_deg: f64, azimuth_deg: f64) -> Vec3<T> {
    let axis = [
        real::<T>(azimuth_deg.to_radians().cos()),
        real(azimuth_deg.to_radians().sin()),
        T::zero(),
    ];
    let m = rotate_axis([T::zero(), T::zero(), real(magnitude)], axis, real(polar_deg.to_radians()));
    m
}

fn spherical_point<T: Real>(center: Vec3<T>, dist: f64, azimuth_deg: f64, elevation_deg: f64) -> Vec3<T> {
    let az = azimuth_deg.to_radians();
    let el = elevation_deg.to_radians();
    add3(
        center,
        [
            real(dist * el.cos() * az.cos()),
            real(dist * el.cos() * az.sin()),
            real(dist * el.sin()),
        ],
    )
}

/// Builds one approach-dwell-retreat trajectory toward `anchor`.
#[allow(clippy::too_many_arguments)]
fn gesture_trajectory<T: Real>(
    task: GestureTask,
    anchor: Vec3<T>,
    style: &UserStyle,
    moment_magnitude: f64,
    centroid: Vec3<T>,
    rng: &mut ChaCha8Rng,
) -> Result<MagnetTrajectory<T>> {
    let (dmin, dmax) = task.duration_range_s();
    let event_s = rng.gen_range(dmin..dmax);
    let approach_s = 0.7 / style.speed_factor;
    let retreat_s = approach_s;
    let dwell_s = (event_s - approach_s - retreat_s).max(0.6);
    let total_s = LEAD_IN_S + approach_s + dwell_s + retreat_s + TAIL_S;

    let park1 = spherical_point(
        centroid,
        rng.gen_range(22.0..30.0),
        style.park_azimuth_deg + rng.gen_range(-70.0..70.0),
        rng.gen_range(15.0..65.0),
    );
    let park2 = spherical_point(
        centroid,
        rng.gen_range(22.0..30.0),
        style.park_azimuth_deg + rng.gen_range(-70.0..70.0),
        rng.gen_range(15.0..65.0),
    );

    let mut jitter = |std: f64| -> f64 {
        let n: f64 = StandardNormal.sample(rng);
        n * std
    };
    let anchor_eff = add3(
        anchor,
        [
            real(style.anchor_offset[0] + jitter(0.2)),
            real(style.anchor_offset[1] + jitter(0.2)),
            real(style.anchor_offset[2] + jitter(0.1)),
        ],
    );

    let moment = tilted_moment(
        moment_magnitude,
        style.tilt_polar_deg + rng.gen_range(-4.0..4.0),
        style.tilt_azimuth_deg + rng.gen_range(-30.0..30.0),
    );

    let mut wps = vec![
        Waypoint { time_s: 0.0, position: park1, moment },
        Waypoint { time_s: LEAD_IN_S, position: park1, moment },
        Waypoint { time_s: LEAD_IN_S + approach_s, position: anchor_eff, moment },
    ];

    // Dwell micro-motion: scratching oscillates along a random planar axis,
    // face touches wander in a small circle.
    let dwell_start = LEAD_IN_S + approach_s;
    let osc_az = rng.gen_range(0.0..std::f64::consts::TAU);
    let (amp_cm, freq_hz) = match task {
        GestureTask::Face8 => (0.3, 1.0),
        GestureTask::Scratch9 | GestureTask::ScratchBinary => (0.45, 2.5),
    };
    let step_s = 0.25;
    let mut t = dwell_start + step_s;
    while t < dwell_start + dwell_s {
        let phase = std::f64::consts::TAU * freq_hz * (t - dwell_start);
        let offset: Vec3<T> = match task {
            GestureTask::Face8 => [
                real(amp_cm * phase.cos() * osc_az.cos() - amp_cm * phase.sin() * osc_az.sin()),
                real(amp_cm * phase.cos() * osc_az.sin() + amp_cm * phase.sin() * osc_az.cos()),
                real(0.1 * amp_cm * (2.0 * phase).sin()),
            ],
            _ => [
                real(amp_cm * phase.sin() * osc_az.cos()),
                real(amp_cm * phase.sin() * osc_az.sin()),
                T::zero(),
            ],
        };
        wps.push(Waypoint {
            time_s: t,
            position: add3(anchor_eff, offset),
            moment,
        });
        t += step_s;
    }

    wps.push(Waypoint {
        time_s: dwell_start + dwell_s,
        position: anchor_eff,
        moment,
    });
    wps.push(Waypoint {
        time_s: dwell_start + dwell_s + retreat_s,
        position: park2,
        moment,
    });
    wps.push(Waypoint {
        time_s: total_s,
        position: park2,
        moment,
    });
    MagnetTrajectory::new(wps, total_s)
}

/// Generates the labeled corpus described by `params`.
///
/// Scratch-binary reuses the scratch9 generator verbatim (identical signals
/// for identical seeds) and only remaps the labels, center cell vs rest.
pub fn generate_corpus<T: Real>(params: &CorpusParams<T>) -> Result<Vec<Recording<T>>> {
    if params.n_per_class < 1 {
        return Err(MagsenseError::Validation("n_per_class must be >= 1".into()));
    }
    if params.n_users < 1 {
        return Err(MagsenseError::Validation("n_users must be >= 1".into()));
    }
    let signal_task = match params.task {
        GestureTask::ScratchBinary => GestureTask::Scratch9,
        t => t,
    };
    let anchors = anchor_positions(signal_task, &params.array);
    let preset = signal_task.preset();
    let moment_magnitude = preset.moment_magnitude(&params.array).as_f64();
    let centroid = params.array.centroid();
    let env = EnvironmentField::new(
        rotate_z(params.base_env.uniform_field, real(params.orientation_deg)),
        params.base_env.device_bias.clone(),
    )?;

    let styles: Vec<UserStyle> = (0..params.n_users)
        .map(|u| user_style(params.seed, u))
        .collect();

    let mut out = Vec::with_capacity(anchors.len() * params.n_per_class);
    for (class_idx, (label, anchor)) in anchors.iter().enumerate() {
        for j in 0..params.n_per_class {
            let global_idx = (class_idx * params.n_per_class + j) as u64;
            let user = (class_idx * params.n_per_class + j) % params.n_users;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, 1 + global_idx));
            let traj = gesture_trajectory(
                signal_task,
                *anchor,
                &styles[user],
                moment_magnitude,
                centroid,
                &mut rng,
            )?;
            let sim_seed = mix_seed(params.seed, 0x1000_0000 + global_idx);

            // Ground truth from a noise-free pass of the same scene.
            let clean = simulate_recording_multi(
                std::slice::from_ref(&traj),
                &params.array.noiseless(),
                &env,
                0,
                Meta::new(),
            )?;
            let threshold: T = real(DEFAULT_THRESHOLD_UT);
            let mut gt_start = None;
            let mut gt_last = None;
            for (i, f) in clean.frames().iter().enumerate() {
                if pair_delta(f) > threshold {
                    if gt_start.is_none() {
                        gt_start = Some(i);
                    }
                    gt_last = Some(i);
                }
            }
            let (gt_start, gt_last) = match (gt_start, gt_last) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(MagsenseError::Validation(format!(
                        "generated gesture for class `{label}` never crossed the trigger threshold"
                    )))
                }
            };

            let final_label = match params.task {
                GestureTask::ScratchBinary => {
                    if label == "cell_1_1" {
                        "scratch".to_string()
                    } else {
                        "no_scratch".to_string()
                    }
                }
                _ => label.clone(),
            };

            let mut meta = Meta::new();
            meta.insert("label".into(), final_label);
            meta.insert("task".into(), params.task.name().into());
            meta.insert("user".into(), user.to_string());
            meta.insert("seed".into(), sim_seed.to_string());
            meta.insert("gt_start".into(), gt_start.to_string());
            meta.insert("gt_end".into(), (gt_last + 1).to_string());
            meta.insert("orientation_deg".into(), format!("{}", params.orientation_deg));
            meta.insert("preset".into(), preset.name().into());

            out.push(simulate_recording_multi(
                std::slice::from_ref(&traj),
                &params.array,
                &env,
                sim_seed,
                meta,
            )?);
        }
    }
    Ok(out)
}

/// Unlabeled free-movement sessions for encoder pretraining: 45 s per
/// session of smooth wandering between random points around the array, with
/// a quiet parked lead-in.
pub fn synth_pretrain_corpus<T: Real>(
    preset: MagnetPreset,
    n_users: usize,
    sessions_per_user: usize,
    seed: u64,
) -> Result<Vec<Recording<T>>> {
    let array = SensorArray::<T>::standard();
    let moment_magnitude = preset.moment_magnitude(&array).as_f64();
    let centroid = array.centroid();
    let session_s = 45.0;

    let mut out = Vec::with_capacity(n_users * sessions_per_user);
    for user in 0..n_users {
        let style = user_style(seed ^ 0x00FF_00FF, user);
        for session in 0..sessions_per_user {
            let stream = (user * sessions_per_user + session) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x2000_0000 + stream));
            let orientation_deg = rng.gen_range(0.0..360.0);
            let env = EnvironmentField::new(
                rotate_z(EnvironmentField::<T>::earth().uniform_field, real(orientation_deg)),
                Vec::new(),
            )?;

            let park = spherical_point(
                centroid,
                rng.gen_range(20.0..28.0),
                style.park_azimuth_deg,
                rng.gen_range(20.0..60.0),
            );
            let mut wps = vec![
                Waypoint {
                    time_s: 0.0,
                    position: park,
                    moment: tilted_moment(moment_magnitude, style.tilt_polar_deg, style.tilt_azimuth_deg),
                },
                Waypoint {
                    time_s: 1.5,
                    position: park,
                    moment: tilted_moment(moment_magnitude, style.tilt_polar_deg, style.tilt_azimuth_deg),
                },
            ];
            let mut t = 1.5;
            while t < session_s - 2.0 {
                t += rng.gen_range(1.2..2.5) / style.speed_factor;
                let pos = spherical_point(
                    centroid,
                    rng.gen_range(2.5..22.0),
                    rng.gen_range(0.0..360.0),
                    rng.gen_range(5.0..80.0),
                );
                let moment = tilted_moment(
                    moment_magnitude,
                    style.tilt_polar_deg + rng.gen_range(-6.0..6.0),
                    style.tilt_azimuth_deg + rng.gen_range(-40.0..40.0),
                );
                wps.push(Waypoint {
                    time_s: t.min(session_s - 1e-3),
                    position: pos,
                    moment,
                });
            }
            wps.push(Waypoint {
                time_s: session_s,
                position: park,
                moment: tilted_moment(moment_magnitude, style.tilt_polar_deg, style.tilt_azimuth_deg),
            });
            let traj = MagnetTrajectory::new(wps, session_s)?;

            let mut meta = Meta::new();
            meta.insert("label".into(), "unlabeled".into());
            meta.insert("task".into(), "pretrain".into());
            meta.insert("user".into(), user.to_string());
            meta.insert("orientation_deg".into(), format!("{orientation_deg}"));
            out.push(simulate_recording_multi(
                std::slice::from_ref(&traj),
                &array,
                &env,
                mix_seed(seed, 0x3000_0000 + stream),
                meta,
            )?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec::{norm3 as vnorm3, sub3};

    #[test]
    fn face8_single_sample_covers_all_labels() {
        let corpus = synth_gesture_corpus::<f64>(GestureTask::Face8, 1, 7).unwrap();
        assert_eq!(corpus.len(), 8);
        let mut labels: Vec<String> = corpus
            .iter()
            .map(|r| r.meta.get("label").unwrap().clone())
            .collect();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 8);
        assert_eq!(labels, GestureTask::Face8.class_labels());
    }

    #[test]
    fn scratch_binary_matches_scratch9_signals_with_remapped_labels() {
        let nine = synth_gesture_corpus::<f64>(GestureTask::Scratch9, 2, 3).unwrap();
        let binary = synth_gesture_corpus::<f64>(GestureTask::ScratchBinary, 2, 3).unwrap();
        assert_eq!(nine.len(), binary.len());
        let mut scratch_count = 0;
        for (a, b) in nine.iter().zip(binary.iter()) {
            assert_eq!(a.frames(), b.frames());
            let la = a.meta.get("label").unwrap();
            let lb = b.meta.get("label").unwrap();
            if la == "cell_1_1" {
                assert_eq!(lb, "scratch");
                scratch_count += 1;
            } else {
                assert_eq!(lb, "no_scratch");
            }
        }
        assert_eq!(scratch_count, 2);
    }

    #[test]
    fn anchors_are_pairwise_separated() {
        for task in [GestureTask::Face8, GestureTask::Scratch9] {
            let anchors = anchor_positions::<f64>(task, &SensorArray::standard());
            for i in 0..anchors.len() {
                for j in i + 1..anchors.len() {
                    let d = vnorm3(sub3(anchors[i].1, anchors[j].1));
                    assert!(
                        d >= 2.99,
                        "{} and {} only {d} cm apart",
                        anchors[i].0,
                        anchors[j].0
                    );
                }
            }
        }
    }

    #[test]
    fn class_prototypes_are_distinct() {
        // Mean in-event signal per class: pairwise distances must be
        // strictly positive for anchors separated by >= 3 cm.
        let corpus = synth_gesture_corpus::<f64>(GestureTask::Face8, 2, 5).unwrap();
        let mut by_label: std::collections::BTreeMap<String, Vec<[f64; 9]>> = Default::default();
        for rec in &corpus {
            let label = rec.meta.get("label").unwrap().clone();
            let s: usize = rec.meta.get("gt_start").unwrap().parse().unwrap();
            let e: usize = rec.meta.get("gt_end").unwrap().parse().unwrap();
            let mut mean = [0.0f64; 9];
            for f in &rec.frames()[s..e] {
                let ch = f.channels();
                for i in 0..9 {
                    mean[i] += ch[i];
                }
            }
            for m in &mut mean {
                *m /= (e - s) as f64;
            }
            by_label.entry(label).or_default().push(mean);
        }
        let prototypes: Vec<(String, [f64; 9])> = by_label
            .into_iter()
            .map(|(label, signals)| {
                let mut proto = [0.0f64; 9];
                for s in &signals {
                    for i in 0..9 {
                        proto[i] += s[i];
                    }
                }
                for p in &mut proto {
                    *p /= signals.len() as f64;
                }
                (label, proto)
            })
            .collect();
        for i in 0..prototypes.len() {
            for j in i + 1..prototypes.len() {
                let d: f64 = (0..9)
                    .map(|k| (prototypes[i].1[k] - prototypes[j].1[k]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(
                    d > 1.0,
                    "prototypes {} and {} too close: {d}",
                    prototypes[i].0,
                    prototypes[j].0
                );
            }
        }
    }

    #[test]
    fn ground_truth_boundaries_are_recorded_and_sane() {
        let corpus = synth_gesture_corpus::<f64>(GestureTask::Scratch9, 1, 2).unwrap();
        for rec in &corpus {
            let s: usize = rec.meta.get("gt_start").unwrap().parse().unwrap();
            let e: usize = rec.meta.get("gt_end").unwrap().parse().unwrap();
            assert!(e > s);
            assert!(e <= rec.len());
            // Lead-in is quiet, so the event cannot start immediately.
            assert!(s > 10, "event starts too early: {s}");
            // Long enough to window.
            assert!(e - s >= 16, "event too short: {}", e - s);
        }
    }

    #[test]
    fn pretrain_sessions_are_45s_and_deterministic() {
        let a = synth_pretrain_corpus::<f64>(MagnetPreset::Ring, 2, 1, 3).unwrap();
        let b = synth_pretrain_corpus::<f64>(MagnetPreset::Ring, 2, 1, 3).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a, b);
        for rec in &a {
            assert!((rec.duration_s() - 45.0).abs() < 0.2);
        }
    }
}
