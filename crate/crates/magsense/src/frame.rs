//! Core domain types: timestamped sensor frames, recordings, analysis
//! windows, and classified gesture events.
//!
//! A frame holds one reading of the three-sensor array: 3 sensors x 3 axes,
//! in microtesla. Timestamps are integer milliseconds so monotonicity checks
//! are exact.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{MagsenseError, Result};
use crate::scalar::Real;
use crate::vec::{Vec3, Vec9};

/// Number of magnetometers in the sensing unit.
pub const SENSOR_COUNT: usize = 3;
/// Flattened channel count (sensors x axes).
pub const CHANNELS: usize = 9;
/// Frames per analysis window.
pub const WINDOW_LEN: usize = 16;
/// Nominal sampling rate of the sensing unit, Hz.
pub const NOMINAL_RATE_HZ: f64 = 17.0;

/// One timestamped reading of the full array, values in microtesla.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFrame<T: Real> {
    pub timestamp_ms: i64,
    /// `readings[sensor][axis]`
    pub readings: [Vec3<T>; SENSOR_COUNT],
}

impl<T: Real> SampleFrame<T> {
    pub fn new(timestamp_ms: i64, readings: [Vec3<T>; SENSOR_COUNT]) -> Result<Self> {
        let frame = Self {
            timestamp_ms,
            readings,
        };
        if !frame.is_finite() {
            return Err(MagsenseError::Validation(format!(
                "non-finite reading in frame at t={timestamp_ms} ms"
            )));
        }
        Ok(frame)
    }

    pub fn is_finite(&self) -> bool {
        self.readings.iter().flatten().all(|x| x.is_finite())
    }

    /// Readings flattened sensor-major: `[s0x, s0y, s0z, s1x, ...]`.
    pub fn channels(&self) -> Vec9<T> {
        let mut out = [T::zero(); CHANNELS];
        for (s, r) in self.readings.iter().enumerate() {
            out[3 * s] = r[0];
            out[3 * s + 1] = r[1];
            out[3 * s + 2] = r[2];
        }
        out
    }

    pub fn from_channels(timestamp_ms: i64, ch: Vec9<T>) -> Result<Self> {
        Self::new(
            timestamp_ms,
            [
                [ch[0], ch[1], ch[2]],
                [ch[3], ch[4], ch[5]],
                [ch[6], ch[7], ch[8]],
            ],
        )
    }
}

/// Free-form metadata labels attached to a recording.
pub type Meta = BTreeMap<String, String>;

/// An ordered sequence of frames sampled at a nominal rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording<T: Real> {
    frames: Vec<SampleFrame<T>>,
    sample_rate_hz: f64,
    pub meta: Meta,
}

impl<T: Real> Recording<T> {
    /// Builds a recording, checking timestamp monotonicity and that the
    /// median inter-frame interval is within 20 % of the nominal period.
    pub fn new(frames: Vec<SampleFrame<T>>, sample_rate_hz: f64, meta: Meta) -> Result<Self> {
        if !(sample_rate_hz > 0.0) {
            return Err(MagsenseError::Validation(format!(
                "sample_rate_hz must be positive, got {sample_rate_hz}"
            )));
        }
        for pair in frames.windows(2) {
            if pair[1].timestamp_ms <= pair[0].timestamp_ms {
                return Err(MagsenseError::Validation(format!(
                    "timestamps not strictly increasing: {} then {}",
                    pair[0].timestamp_ms, pair[1].timestamp_ms
                )));
            }
        }
        if frames.len() >= 2 {
            let mut intervals: Vec<i64> = frames
                .windows(2)
                .map(|p| p[1].timestamp_ms - p[0].timestamp_ms)
                .collect();
            intervals.sort_unstable();
            let median = intervals[intervals.len() / 2] as f64;
            let nominal = 1000.0 / sample_rate_hz;
            if (median - nominal).abs() > 0.2 * nominal {
                return Err(MagsenseError::Validation(format!(
                    "median inter-frame interval {median} ms deviates more than 20 % from nominal {nominal:.2} ms"
                )));
            }
        }
        Ok(Self {
            frames,
            sample_rate_hz,
            meta,
        })
    }

    pub fn frames(&self) -> &[SampleFrame<T>] {
        &self.frames
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => (b.timestamp_ms - a.timestamp_ms) as f64 / 1000.0,
            _ => 0.0,
        }
    }
}

/// A fixed 16x9 slice of a recording, the unit the encoder consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Window<T: Real> {
    data: Vec<Vec9<T>>,
    /// Index of the first source frame in the originating recording.
    pub origin: usize,
}

impl<T: Real> Window<T> {
    pub fn new(data: Vec<Vec9<T>>, origin: usize) -> Result<Self> {
        if data.len() != WINDOW_LEN {
            return Err(MagsenseError::Shape(format!(
                "window must have {WINDOW_LEN} rows, got {}",
                data.len()
            )));
        }
        Ok(Self { data, origin })
    }

    pub fn rows(&self) -> &[Vec9<T>] {
        &self.data
    }

    /// Applies `f` to every row, keeping the origin.
    pub fn map_rows(&self, mut f: impl FnMut(&Vec9<T>) -> Vec9<T>) -> Self {
        Self {
            data: self.data.iter().map(|r| f(r)).collect(),
            origin: self.origin,
        }
    }

    /// Row-major flattening to a 144-vector.
    pub fn flatten(&self) -> Vec<T> {
        self.data.iter().flat_map(|r| r.iter().copied()).collect()
    }
}

/// Extracts sliding windows of `length` frames with the given stride.
///
/// Recordings shorter than `length` yield no windows. The window count is
/// `floor((n - length) / stride) + 1`.
pub fn sliding_windows<T: Real>(rec: &Recording<T>, length: usize, stride: usize) -> Vec<Window<T>> {
    windows_of_channels(&rec.frames.iter().map(SampleFrame::channels).collect::<Vec<_>>(), length, stride)
}

/// Same as [`sliding_windows`] but over already-flattened channel rows.
pub fn windows_of_channels<T: Real>(rows: &[Vec9<T>], length: usize, stride: usize) -> Vec<Window<T>> {
    assert!(stride >= 1, "stride must be at least 1");
    assert_eq!(length, WINDOW_LEN, "window length is fixed at {WINDOW_LEN}");
    if rows.len() < length {
        return Vec::new();
    }
    let mut out = Vec::with_capacity((rows.len() - length) / stride + 1);
    let mut start = 0;
    while start + length <= rows.len() {
        out.push(Window {
            data: rows[start..start + length].to_vec(),
            origin: start,
        });
        start += stride;
    }
    out
}

/// A triggered gesture segment with its per-window predictions and the
/// majority-voted label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureEvent {
    pub start_idx: usize,
    pub end_idx: usize,
    pub voted_label: u32,
    pub confidence: f64,
    pub window_labels: Vec<u32>,
}

impl GestureEvent {
    /// Builds an event from per-window labels, voting by count. Ties are
    /// broken by the summed per-window score, then by the lowest class id.
    pub fn from_votes(
        start_idx: usize,
        end_idx: usize,
        window_labels: Vec<u32>,
        window_scores: &[f64],
    ) -> Result<Self> {
        if end_idx <= start_idx {
            return Err(MagsenseError::Validation(format!(
                "event end_idx {end_idx} must exceed start_idx {start_idx}"
            )));
        }
        if window_labels.is_empty() {
            return Err(MagsenseError::Validation(
                "event must have at least one window label".into(),
            ));
        }
        let mut counts: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
        for (i, &label) in window_labels.iter().enumerate() {
            let score = window_scores.get(i).copied().unwrap_or(0.0);
            let e = counts.entry(label).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += score;
        }
        // BTreeMap iteration is ascending by class id, so keeping strict
        // improvements only implements the lowest-id tie rule.
        let mut best: Option<(u32, usize, f64)> = None;
        for (&label, &(count, score)) in &counts {
            let better = match best {
                None => true,
                Some((_, bc, bs)) => count > bc || (count == bc && score > bs),
            };
            if better {
                best = Some((label, count, score));
            }
        }
        let (voted_label, count, _) = best.expect("non-empty labels");
        Ok(Self {
            start_idx,
            end_idx,
            voted_label,
            confidence: count as f64 / window_labels.len() as f64,
            window_labels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(t: i64, v: f64) -> SampleFrame<f64> {
        SampleFrame::from_channels(t, [v; 9]).unwrap()
    }

    fn rec_of(n: usize) -> Recording<f64> {
        let frames = (0..n).map(|i| frame(i as i64 * 59, i as f64)).collect();
        Recording::new(frames, NOMINAL_RATE_HZ, Meta::new()).unwrap()
    }

    #[test]
    fn rejects_non_finite_reading() {
        assert!(SampleFrame::from_channels(0, [f64::NAN; 9]).is_err());
    }

    #[test]
    fn rejects_decreasing_timestamps() {
        let frames = vec![frame(10, 0.0), frame(5, 0.0)];
        assert!(Recording::new(frames, NOMINAL_RATE_HZ, Meta::new()).is_err());
    }

    #[test]
    fn rejects_off_rate_interval() {
        // 100 ms interval vs the 58.8 ms nominal period is over the 20 % band.
        let frames = (0..10).map(|i| frame(i * 100, 0.0)).collect();
        assert!(Recording::new(frames, NOMINAL_RATE_HZ, Meta::new()).is_err());
    }

    #[test]
    fn window_counts_match_formula() {
        assert_eq!(sliding_windows(&rec_of(16), 16, 1).len(), 1);
        assert_eq!(sliding_windows(&rec_of(20), 16, 1).len(), 5);
        assert_eq!(sliding_windows(&rec_of(15), 16, 1).len(), 0);
    }

    #[test]
    fn window_count_stride_4_matches_enumeration() {
        // Brute-force enumeration oracle: all start indices s with
        // s + 16 <= 48 and s divisible by the stride.
        let starts: Vec<usize> = (0..48).filter(|s| s % 4 == 0 && s + 16 <= 48).collect();
        assert_eq!(starts.len(), 9);
        let wins = sliding_windows(&rec_of(48), 16, 4);
        assert_eq!(wins.len(), 9);
        for (w, s) in wins.iter().zip(starts) {
            assert_eq!(w.origin, s);
        }
    }

    #[test]
    fn concatenated_windowing_differs_at_boundary() {
        // Windowing a concatenation is not the union of windowing the parts:
        // the windows straddling the junction exist only in the former.
        let a = rec_of(20);
        let b_frames: Vec<_> = (0..20).map(|i| frame(20 * 59 + i * 59, 100.0 + i as f64)).collect();
        let b = Recording::new(b_frames, NOMINAL_RATE_HZ, Meta::new()).unwrap();
        let mut joined = a.frames().to_vec();
        joined.extend_from_slice(b.frames());
        let joined = Recording::new(joined, NOMINAL_RATE_HZ, Meta::new()).unwrap();
        let whole = sliding_windows(&joined, 16, 1);
        let parts = sliding_windows(&a, 16, 1).len() + sliding_windows(&b, 16, 1).len();
        assert_eq!(whole.len(), 25);
        assert!(whole.len() > parts);
    }

    #[test]
    fn vote_counts_and_confidence() {
        let ev = GestureEvent::from_votes(3, 40, vec![1, 1, 2], &[0.5, 0.5, 0.9]).unwrap();
        assert_eq!(ev.voted_label, 1);
        assert!((ev.confidence - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn vote_tie_breaks_by_score_then_lowest_id() {
        // 2 vs 2 tie, class 5 has the larger summed score.
        let ev = GestureEvent::from_votes(0, 10, vec![5, 5, 3, 3], &[0.9, 0.9, 0.1, 0.1]).unwrap();
        assert_eq!(ev.voted_label, 5);
        // Exact tie in count and score falls back to the lowest id.
        let ev = GestureEvent::from_votes(0, 10, vec![5, 3], &[0.5, 0.5]).unwrap();
        assert_eq!(ev.voted_label, 3);
    }

    #[test]
    fn vote_rejects_empty_and_bad_bounds() {
        assert!(GestureEvent::from_votes(5, 5, vec![1], &[0.0]).is_err());
        assert!(GestureEvent::from_votes(0, 5, vec![], &[]).is_err());
    }
}
