//! Training-free nearby-magnet trigger and environmental-field estimation.
//!
//! A uniform ambient field hits every magnetometer identically, so pairwise
//! reading differences cancel it; a nearby magnet perturbs the sensors
//! unevenly and the differences grow. The trigger fires when the largest
//! pairwise difference norm exceeds a threshold, and a 16-frame queue of
//! pre-event readings supplies the environmental-field estimate (the oldest
//! queued frame). The queue is frozen while an event is active so the
//! magnet's own field never contaminates the background estimate.

use std::collections::VecDeque;

use crate::error::{MagsenseError, Result};
use crate::frame::{Recording, SampleFrame, Window};
use crate::scalar::{real, Real};
use crate::vec::{norm3, sub3, sub9, Vec3, Vec9};

/// Queue capacity: the background snapshot reaches ~0.94 s into the past at
/// the 17 Hz sampling rate.
pub const QUEUE_LEN: usize = 16;
/// Trigger threshold in µT; suppresses sensor-noise deltas while catching
/// ring magnets out to ~11 cm.
pub const DEFAULT_THRESHOLD_UT: f64 = 18.0;
/// Shortest run of triggered frames kept as an event (~0.24 s at 17 Hz).
pub const DEFAULT_MIN_EVENT_FRAMES: usize = 4;
/// Consecutive sub-threshold frames required to close an event.
pub const DEFAULT_HYSTERESIS_FRAMES: usize = 3;
/// Lower bound applied by threshold calibration.
pub const MIN_THRESHOLD_UT: f64 = 1.0;

/// Largest pairwise difference norm over per-sensor field vectors.
pub fn max_pair_delta_fields<T: Real>(fields: &[Vec3<T>]) -> T {
    let mut best = T::zero();
    for i in 0..fields.len() {
        for j in i + 1..fields.len() {
            let d = norm3(sub3(fields[i], fields[j]));
            if d > best {
                best = d;
            }
        }
    }
    best
}

/// Maximum over sensor pairs of `|R_i - R_j|` for one frame, µT.
pub fn pair_delta<T: Real>(frame: &SampleFrame<T>) -> T {
    max_pair_delta_fields(&frame.readings)
}

/// Outcome of one trigger update.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerDecision<T: Real> {
    pub detected: bool,
    pub max_pair_delta_ut: T,
    /// Oldest queued (pre-event) reading, flattened to 9 channels. `None`
    /// until the first frame has been queued.
    pub env_estimate: Option<Vec9<T>>,
}

/// Streaming trigger state: background queue, threshold, and the event
/// machine with close hysteresis.
#[derive(Debug, Clone)]
pub struct TriggerState<T: Real> {
    queue: VecDeque<Vec9<T>>,
    threshold_ut: T,
    hysteresis_frames: usize,
    active: bool,
    below_count: usize,
    /// Background snapshot frozen at event onset.
    frozen_env: Option<Vec9<T>>,
}

impl<T: Real> TriggerState<T> {
    pub fn new(threshold_ut: T) -> Result<Self> {
        Self::with_hysteresis(threshold_ut, DEFAULT_HYSTERESIS_FRAMES)
    }

    pub fn with_hysteresis(threshold_ut: T, hysteresis_frames: usize) -> Result<Self> {
        if !(threshold_ut > T::zero()) {
            return Err(MagsenseError::Validation(format!(
                "trigger threshold must be positive, got {threshold_ut}"
            )));
        }
        Ok(Self {
            queue: VecDeque::with_capacity(QUEUE_LEN),
            threshold_ut,
            hysteresis_frames,
            active: false,
            below_count: 0,
            frozen_env: None,
        })
    }

    pub fn threshold_ut(&self) -> T {
        self.threshold_ut
    }

    /// Whether the state machine is currently inside an event.
    pub fn active(&self) -> bool {
        self.active
    }

    fn oldest(&self) -> Option<Vec9<T>> {
        self.queue.front().copied()
    }

    /// Processes one frame: returns the instantaneous detection decision and
    /// the event-level background estimate.
    ///
    /// While no event is active the frame is pushed into the background
    /// queue unless it itself triggered detection; during an event the queue
    /// stays frozen so the estimate keeps pointing at pre-onset data.
    pub fn trigger_step(&mut self, frame: &SampleFrame<T>) -> TriggerDecision<T> {
        let delta = pair_delta(frame);
        let detected = delta > self.threshold_ut;

        if detected {
            if !self.active {
                self.active = true;
                self.frozen_env = self.oldest();
            }
            self.below_count = 0;
        } else if self.active {
            self.below_count += 1;
            if self.below_count >= self.hysteresis_frames {
                self.active = false;
                self.below_count = 0;
                self.frozen_env = None;
            }
        }

        let env_estimate = if self.active {
            self.frozen_env.or_else(|| self.oldest())
        } else {
            self.oldest()
        };

        if !self.active && !detected {
            if self.queue.len() == QUEUE_LEN {
                self.queue.pop_front();
            }
            self.queue.push_back(frame.channels());
        }

        TriggerDecision {
            detected,
            max_pair_delta_ut: delta,
            env_estimate,
        }
    }
}

/// A segmented gesture candidate: `[start_idx, end_idx)` frame range plus
/// the background estimate frozen at onset.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedEvent<T: Real> {
    pub start_idx: usize,
    pub end_idx: usize,
    pub env_estimate: Vec9<T>,
}

/// Finds maximal triggered runs in a recording, bridging sub-threshold gaps
/// shorter than the hysteresis and dropping runs shorter than
/// `min_event_frames`. Events still open at the end of the stream are
/// closed there.
pub fn segment_events<T: Real>(
    rec: &Recording<T>,
    threshold_ut: T,
    min_event_frames: usize,
) -> Result<Vec<SegmentedEvent<T>>> {
    segment_events_hysteresis(rec, threshold_ut, min_event_frames, DEFAULT_HYSTERESIS_FRAMES)
}

pub fn segment_events_hysteresis<T: Real>(
    rec: &Recording<T>,
    threshold_ut: T,
    min_event_frames: usize,
    hysteresis_frames: usize,
) -> Result<Vec<SegmentedEvent<T>>> {
    let mut state = TriggerState::with_hysteresis(threshold_ut, hysteresis_frames)?;
    let mut events = Vec::new();
    let mut current: Option<(usize, usize, Vec9<T>)> = None; // (start, last_detected, env)

    for (idx, frame) in rec.frames().iter().enumerate() {
        let was_active = state.active();
        let decision = state.trigger_step(frame);

        if decision.detected {
            match &mut current {
                Some((_, last, _)) => *last = idx,
                None => {
                    let env = decision.env_estimate.unwrap_or([T::zero(); 9]);
                    current = Some((idx, idx, env));
                }
            }
        } else if was_active && !state.active() {
            // Hysteresis expired: close the run at its last detected frame.
            if let Some((start, last, env)) = current.take() {
                push_event(&mut events, start, last, env, min_event_frames);
            }
        }
    }
    if let Some((start, last, env)) = current.take() {
        push_event(&mut events, start, last, env, min_event_frames);
    }
    Ok(events)
}

fn push_event<T: Real>(
    events: &mut Vec<SegmentedEvent<T>>,
    start: usize,
    last: usize,
    env: Vec9<T>,
    min_event_frames: usize,
) {
    let end = last + 1;
    if end - start >= min_event_frames {
        events.push(SegmentedEvent {
            start_idx: start,
            end_idx: end,
            env_estimate: env,
        });
    }
}

/// Subtracts the event's background estimate from every row of a window.
pub fn subtract_env<T: Real>(w: &Window<T>, env_estimate: &Vec9<T>) -> Window<T> {
    w.map_rows(|row| sub9(*row, *env_estimate))
}

/// Derives a trigger threshold from a short magnet-free recording with
/// natural user movement: the largest observed pair delta times a safety
/// factor, floored at [`MIN_THRESHOLD_UT`].
pub fn calibrate_threshold<T: Real>(quiet_rec: &Recording<T>, safety_factor: T) -> Result<T> {
    if quiet_rec.duration_s() < 5.0 {
        return Err(MagsenseError::Calibration(format!(
            "threshold calibration needs at least 5 s of magnet-free data, got {:.2} s",
            quiet_rec.duration_s()
        )));
    }
    let max_delta = quiet_rec
        .frames()
        .iter()
        .map(pair_delta)
        .fold(T::zero(), |a, b| if b > a { b } else { a });
    let threshold = max_delta * safety_factor;
    let floor: T = real(MIN_THRESHOLD_UT);
    Ok(if threshold > floor { threshold } else { floor })
}
