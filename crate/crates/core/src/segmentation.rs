//! Task recognition on gravity-aligned data: rest and boundary detection,
//! gait-bout candidates, turn detection, and autocorrelation-based gait
//! verification.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dsp::{self, lowpass_zero_phase};
use crate::error::{Error, Result};
use crate::orientation::GravityAlignedRecording;

/// Thresholds for moving/non-moving classification and bout assembly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentationConfig {
    pub window_s: f64,
    /// Reference acceleration magnitude (m/s²).
    pub accel_ref: f64,
    /// Allowed relative deviation from `accel_ref`.
    pub accel_tol: f64,
    /// Mean gyroscope magnitude limit (rad/s), valid range 0.2 to 0.6.
    pub gyro_thresh: f64,
    /// Combined accelerometer standard deviation limit (m/s²), valid range 0.05 to 0.4.
    pub std_thresh: f64,
    pub merge_gap_s: f64,
    pub rest_split_s: f64,
    pub min_bout_s: f64,
    pub boundary_margin_s: f64,
    pub sharp_turn_deg: f64,
    /// Turn detection: low-pass cutoff applied to the yaw rate.
    pub turn_lowpass_hz: f64,
    /// Turn detection: yaw rate that opens a candidate turn (deg/s).
    pub turn_peak_dps: f64,
    /// Turn detection: yaw rate at which a turn's edges are placed (deg/s).
    pub turn_edge_dps: f64,
    pub turn_merge_s: f64,
    /// Gait verification: minimum normalized autocorrelation peak.
    pub min_autocorr: f64,
    /// Gait verification: stride-lag search band (s).
    pub stride_band_s: (f64, f64),
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            window_s: 0.6,
            accel_ref: 9.81,
            accel_tol: 0.10,
            gyro_thresh: 0.6,
            std_thresh: 0.2,
            merge_gap_s: 1.0,
            rest_split_s: 2.0,
            min_bout_s: 2.0,
            boundary_margin_s: 2.0,
            sharp_turn_deg: 90.0,
            turn_lowpass_hz: 1.5,
            turn_peak_dps: 15.0,
            turn_edge_dps: 5.0,
            turn_merge_s: 0.05,
            min_autocorr: 0.3,
            stride_band_s: (0.4, 2.25),
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("window_s", self.window_s),
            ("accel_ref", self.accel_ref),
            ("accel_tol", self.accel_tol),
            ("gyro_thresh", self.gyro_thresh),
            ("std_thresh", self.std_thresh),
            ("merge_gap_s", self.merge_gap_s),
            ("rest_split_s", self.rest_split_s),
            ("min_bout_s", self.min_bout_s),
            ("boundary_margin_s", self.boundary_margin_s),
            ("sharp_turn_deg", self.sharp_turn_deg),
            ("turn_lowpass_hz", self.turn_lowpass_hz),
            ("turn_peak_dps", self.turn_peak_dps),
            ("turn_edge_dps", self.turn_edge_dps),
            ("turn_merge_s", self.turn_merge_s),
            ("min_autocorr", self.min_autocorr),
            ("stride_band_s.0", self.stride_band_s.0),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be strictly positive, got {v}")));
            }
        }
        if !(0.2..=0.6).contains(&self.gyro_thresh) {
            return Err(Error::Config(format!("gyro_thresh {} outside 0.2..=0.6 rad/s", self.gyro_thresh)));
        }
        if !(0.05..=0.4).contains(&self.std_thresh) {
            return Err(Error::Config(format!("std_thresh {} outside 0.05..=0.4 m/s²", self.std_thresh)));
        }
        if self.turn_edge_dps > self.turn_peak_dps {
            return Err(Error::Config("turn_edge_dps must not exceed turn_peak_dps".into()));
        }
        if self.stride_band_s.1 <= self.stride_band_s.0 {
            return Err(Error::Config("stride_band_s must be an increasing pair".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    GaitBout,
    ShortRest,
    LongRest,
    Boundary,
    Unknown,
    SharpTurn,
}

impl SegmentKind {
    pub fn is_rest(self) -> bool {
        matches!(self, SegmentKind::ShortRest | SegmentKind::LongRest | SegmentKind::Boundary)
    }
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
    pub kind: SegmentKind,
}

impl Segment {
    pub fn new(start_s: f64, end_s: f64, kind: SegmentKind) -> Self {
        Self { start_s, end_s, kind }
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// One analysis window and its label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start_idx: usize,
    pub end_idx: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub moving: bool,
}

/// Splits the recording into non-overlapping windows and labels each one.
///
/// A window is non-moving when its mean acceleration magnitude lies within
/// `accel_ref * (1 ± accel_tol)`, its mean angular-rate magnitude is below
/// `gyro_thresh`, and the norm of its per-axis accelerometer standard
/// deviations is below `std_thresh`. A trailing window shorter than half a
/// window is dropped.
pub fn classify_windows(rec: &GravityAlignedRecording, cfg: &SegmentationConfig) -> Result<Vec<Window>> {
    let fs = rec.sample_rate;
    let w = (cfg.window_s * fs).round() as usize;
    if w < 2 {
        return Err(Error::Config(format!("window of {} s holds fewer than 2 samples", cfg.window_s)));
    }
    let min_tail = ((cfg.window_s / 2.0) * fs).ceil().max(2.0) as usize;
    let n = rec.len();
    let t0 = rec.start();
    let mut windows = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + w).min(n);
        if end - start < w && end - start < min_tail {
            break;
        }
        windows.push(Window {
            start_idx: start,
            end_idx: end,
            start_s: t0 + start as f64 / fs,
            end_s: t0 + end as f64 / fs,
            moving: is_moving(&rec.accel[start..end], &rec.gyro[start..end], cfg),
        });
        start = end;
    }
    Ok(windows)
}

fn is_moving(accel: &[nalgebra::Vector3<f64>], gyro: &[nalgebra::Vector3<f64>], cfg: &SegmentationConfig) -> bool {
    let n = accel.len() as f64;
    let mean_acc_mag = accel.iter().map(|a| a.norm()).sum::<f64>() / n;
    let mean_gyro_mag = gyro.iter().map(|g| g.norm()).sum::<f64>() / n;
    let mean = accel.iter().sum::<nalgebra::Vector3<f64>>() / n;
    let var = accel.iter().map(|a| (a - mean).component_mul(&(a - mean))).sum::<nalgebra::Vector3<f64>>() / (n - 1.0);
    let combined_std = var.map(f64::sqrt).norm();

    let lo = cfg.accel_ref * (1.0 - cfg.accel_tol);
    let hi = cfg.accel_ref * (1.0 + cfg.accel_tol);
    let still = (lo..=hi).contains(&mean_acc_mag) && mean_gyro_mag < cfg.gyro_thresh && combined_std < cfg.std_thresh;
    !still
}

/// Builds the segment list from window labels.
///
/// Non-moving runs separated by less than `merge_gap_s` (edge to edge) are
/// merged, absorbing the moving stretch between them. Non-moving runs within
/// `boundary_margin_s` of either end of the recording are boundaries; the
/// others are short or long rests. Moving runs shorter than `min_bout_s` are
/// unknown; the rest are gait-bout candidates.
pub fn segment(rec: &GravityAlignedRecording, cfg: &SegmentationConfig) -> Result<Vec<Segment>> {
    let windows = classify_windows(rec, cfg)?;
    Ok(segments_from_windows(&windows, rec.start(), rec.end(), cfg))
}

pub fn segments_from_windows(windows: &[Window], rec_start: f64, rec_end: f64, cfg: &SegmentationConfig) -> Vec<Segment> {
    if windows.is_empty() {
        return Vec::new();
    }
    // runs of equal labels: (start_s, end_s, moving)
    let mut runs: Vec<(f64, f64, bool)> = Vec::new();
    for w in windows {
        match runs.last_mut() {
            Some(last) if last.2 == w.moving => last.1 = w.end_s,
            _ => runs.push((w.start_s, w.end_s, w.moving)),
        }
    }

    let eps = 1e-9;
    // absorb short moving gaps between two non-moving runs
    let mut merged: Vec<(f64, f64, bool)> = Vec::new();
    let mut i = 0;
    while i < runs.len() {
        let run = runs[i];
        if run.2 && i > 0 && i + 1 < runs.len() && run.1 - run.0 < cfg.merge_gap_s - eps {
            if let Some(prev) = merged.last_mut() {
                if !prev.2 {
                    prev.1 = runs[i + 1].1;
                    i += 2;
                    continue;
                }
            }
        }
        match merged.last_mut() {
            Some(last) if last.2 == run.2 => last.1 = run.1,
            _ => merged.push(run),
        }
        i += 1;
    }

    merged
        .into_iter()
        .map(|(start, end, moving)| {
            let kind = if moving {
                if end - start < cfg.min_bout_s - eps {
                    SegmentKind::Unknown
                } else {
                    SegmentKind::GaitBout
                }
            } else if start - rec_start <= cfg.boundary_margin_s + eps || rec_end - end <= cfg.boundary_margin_s + eps {
                SegmentKind::Boundary
            } else if end - start < cfg.rest_split_s - eps {
                SegmentKind::ShortRest
            } else {
                SegmentKind::LongRest
            };
            Segment::new(start, end, kind)
        })
        .collect()
}

/// A turn detected from the vertical-axis angular rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub start_s: f64,
    pub end_s: f64,
    /// Signed heading change, degrees (positive counter-clockwise seen from above).
    pub angle_deg: f64,
    pub sharp: bool,
}

/// Detects turns from the gravity-aligned yaw rate.
///
/// The yaw rate is low-pass filtered; stretches exceeding `turn_peak_dps`
/// are expanded outward to where the rate falls to `turn_edge_dps`, turns
/// closer than `turn_merge_s` are merged, and each turn's angle is the
/// integral of the filtered rate over it.
pub fn detect_turns(rec: &GravityAlignedRecording, cfg: &SegmentationConfig) -> Result<Vec<Turn>> {
    let fs = rec.sample_rate;
    let n = rec.len();
    if n < 2 {
        return Ok(Vec::new());
    }
    let yaw_raw = rec.vertical_gyro();
    let yaw = if cfg.turn_lowpass_hz < fs / 2.0 {
        lowpass_zero_phase(&yaw_raw, cfg.turn_lowpass_hz, fs)?
    } else {
        yaw_raw
    };
    let yaw_dps: Vec<f64> = yaw.iter().map(|w| w.to_degrees()).collect();

    let mut intervals: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        if yaw_dps[i].abs() > cfg.turn_peak_dps {
            let mut s = i;
            while s > 0 && yaw_dps[s - 1].abs() > cfg.turn_edge_dps {
                s -= 1;
            }
            let mut e = i;
            while e + 1 < n && yaw_dps[e + 1].abs() > cfg.turn_edge_dps {
                e += 1;
            }
            intervals.push((s, e));
            i = e + 1;
        } else {
            i += 1;
        }
    }

    let merge_samples = cfg.turn_merge_s * fs;
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (s, e) in intervals {
        match merged.last_mut() {
            Some(last) if (s as f64 - last.1 as f64) < merge_samples => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }

    let t0 = rec.start();
    Ok(merged
        .into_iter()
        .map(|(s, e)| {
            let angle_deg: f64 = yaw_dps[s..=e].iter().sum::<f64>() / fs;
            Turn {
                start_s: t0 + s as f64 / fs,
                end_s: t0 + (e + 1) as f64 / fs,
                angle_deg,
                sharp: angle_deg.abs() >= cfg.sharp_turn_deg,
            }
        })
        .collect())
}

/// Highest local maximum of the autocorrelation inside the stride-lag band.
pub(crate) fn dominant_stride_peak(x: &[f64], fs: f64, band: (f64, f64)) -> Option<dsp::Peak> {
    let (lo, hi) = lag_band(x.len(), fs, band)?;
    let r = dsp::autocorrelation(x, hi + 1)?;
    dsp::local_maxima_in(&r, lo, hi).into_iter().max_by(|a, b| a.value.total_cmp(&b.value))
}

/// Sample-lag band searched for stride periodicity. The upper lag keeps at
/// least a quarter of the signal overlapping.
pub(crate) fn lag_band(n: usize, fs: f64, band: (f64, f64)) -> Option<(usize, usize)> {
    let lo = (band.0 * fs).floor().max(1.0) as usize;
    let hi = ((band.1 * fs).ceil() as usize).min(n * 3 / 4);
    (hi > lo).then_some((lo, hi))
}

/// True when the vertical acceleration shows periodic gait structure: its
/// autocorrelation has a local maximum in the stride-lag band reaching
/// `min_autocorr`.
pub fn verify_gait(vertical_accel: &[f64], fs: f64, cfg: &SegmentationConfig) -> bool {
    dominant_stride_peak(vertical_accel, fs, cfg.stride_band_s).is_some_and(|p| p.value >= cfg.min_autocorr)
}

/// Replaces the parts of gait bouts covered by sharp turns with
/// [`SegmentKind::SharpTurn`] segments; remaining pieces shorter than
/// `min_bout_s` become unknown.
pub fn split_at_sharp_turns(segments: &[Segment], turns: &[Turn], cfg: &SegmentationConfig) -> Vec<Segment> {
    let eps = 1e-9;
    let mut out = Vec::with_capacity(segments.len());
    for seg in segments {
        if seg.kind != SegmentKind::GaitBout {
            out.push(*seg);
            continue;
        }
        let mut cursor = seg.start_s;
        let mut pieces = Vec::new();
        for turn in turns.iter().filter(|t| t.sharp && t.end_s > seg.start_s && t.start_s < seg.end_s) {
            let (ts, te) = (turn.start_s.max(cursor), turn.end_s.min(seg.end_s));
            if te <= ts {
                continue;
            }
            if ts > cursor {
                pieces.push(Segment::new(cursor, ts, SegmentKind::GaitBout));
            }
            pieces.push(Segment::new(ts, te, SegmentKind::SharpTurn));
            cursor = te;
        }
        if cursor < seg.end_s {
            pieces.push(Segment::new(cursor, seg.end_s, SegmentKind::GaitBout));
        }
        for mut p in pieces {
            if p.kind == SegmentKind::GaitBout && p.duration() < cfg.min_bout_s - eps {
                p.kind = SegmentKind::Unknown;
            }
            out.push(p);
        }
    }
    out
}

/// Splits gait-bout candidates around sharp turns and keeps the pieces that
/// are long enough and pass gait verification.
pub fn eligible_bouts(
    rec: &GravityAlignedRecording,
    segments: &[Segment],
    turns: &[Turn],
    cfg: &SegmentationConfig,
) -> Vec<Segment> {
    let eps = 1e-9;
    let vertical = rec.vertical_accel();
    let mut out = Vec::new();
    for seg in segments.iter().filter(|s| s.kind == SegmentKind::GaitBout) {
        let mut pieces = vec![(seg.start_s, seg.end_s)];
        for turn in turns.iter().filter(|t| t.sharp) {
            pieces = pieces
                .into_iter()
                .flat_map(|(s, e)| {
                    if turn.end_s <= s || turn.start_s >= e {
                        vec![(s, e)]
                    } else {
                        let mut v = Vec::new();
                        if turn.start_s > s {
                            v.push((s, turn.start_s));
                        }
                        if turn.end_s < e {
                            v.push((turn.end_s, e));
                        }
                        v
                    }
                })
                .collect();
        }
        for (s, e) in pieces {
            if e - s < cfg.min_bout_s - eps {
                continue;
            }
            let (i0, i1) = (rec.index_at(s), rec.index_at(e));
            if verify_gait(&vertical[i0..i1], rec.sample_rate, cfg) {
                out.push(Segment::new(s, e, SegmentKind::GaitBout));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{UnitQuaternion, Vector3};
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn aligned(accel: Vec<Vector3<f64>>, gyro: Vec<Vector3<f64>>, fs: f64) -> GravityAlignedRecording {
        let n = accel.len();
        GravityAlignedRecording {
            timestamps: (0..n).map(|k| k as f64 / fs).collect(),
            accel,
            gyro,
            sample_rate: fs,
            orientation: vec![UnitQuaternion::identity(); n],
        }
    }

    fn still(n: usize) -> GravityAlignedRecording {
        aligned(vec![Vector3::new(9.81, 0.0, 0.0); n], vec![Vector3::zeros(); n], 50.0)
    }

    fn yaw_only(rate: impl Fn(f64) -> f64, seconds: f64) -> GravityAlignedRecording {
        let fs = 50.0;
        let n = (seconds * fs) as usize;
        let gyro = (0..n).map(|k| Vector3::new(rate(k as f64 / fs), 0.0, 0.0)).collect();
        aligned(vec![Vector3::new(9.81, 0.0, 0.0); n], gyro, fs)
    }

    #[test]
    fn still_recording_has_no_moving_window() {
        let w = classify_windows(&still(500), &SegmentationConfig::default()).unwrap();
        // 16 full windows plus a 0.4 s tail
        assert_eq!(w.len(), 17);
        assert!(w.iter().all(|w| !w.moving));
    }

    #[test]
    fn short_tail_window_is_dropped() {
        // 10.1 s: the trailing 0.5 s window is kept, a 0.2 s one is not
        let w = classify_windows(&still(505), &SegmentationConfig::default()).unwrap();
        assert_eq!(w.len(), 17);
        let w = classify_windows(&still(490), &SegmentationConfig::default()).unwrap();
        assert_eq!(w.len(), 16);
    }

    #[test]
    fn excessive_magnitude_is_moving() {
        let n = 300;
        let rec = aligned(vec![Vector3::new(12.0, 0.0, 0.0); n], vec![Vector3::zeros(); n], 50.0);
        let w = classify_windows(&rec, &SegmentationConfig::default()).unwrap();
        assert!(w.iter().all(|w| w.moving));
    }

    #[test]
    fn pure_rest_is_one_boundary() {
        let segs = segment(&still(500), &SegmentationConfig::default()).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].kind, SegmentKind::Boundary);
        assert!((segs[0].start_s - 0.0).abs() < 1e-9 && (segs[0].end_s - 10.0).abs() < 1e-9);
    }

    #[test]
    fn window_labels_assemble_into_kinds() {
        let cfg = SegmentationConfig::default();
        let mk = |labels: &[bool]| -> Vec<Window> {
            labels
                .iter()
                .enumerate()
                .map(|(i, &m)| Window {
                    start_idx: i * 30,
                    end_idx: (i + 1) * 30,
                    start_s: i as f64 * 0.6,
                    end_s: (i + 1) as f64 * 0.6,
                    moving: m,
                })
                .collect()
        };
        // 5 rest, 10 moving, 1 moving blip between rests merged, 5 rest at end
        let mut labels = vec![false; 5];
        labels.extend([true; 10]);
        labels.extend([false; 4]);
        labels.push(true);
        labels.extend([false; 5]);
        let windows = mk(&labels);
        let segs = segments_from_windows(&windows, 0.0, windows.last().unwrap().end_s, &cfg);
        let kinds: Vec<_> = segs.iter().map(|s| s.kind).collect();
        assert_eq!(kinds, [SegmentKind::Boundary, SegmentKind::GaitBout, SegmentKind::Boundary]);
        assert!((segs[2].start_s - 9.0).abs() < 1e-9);

        // moving 3 windows (1.8 s) is unknown; 3-window rest between moving runs is short
        let mut labels = vec![true; 10];
        labels.extend([false; 3]);
        labels.extend([true; 3]);
        labels.extend([false; 4]);
        labels.extend([true; 10]);
        let windows = mk(&labels);
        let segs = segments_from_windows(&windows, 0.0, windows.last().unwrap().end_s, &cfg);
        let kinds: Vec<_> = segs.iter().map(|s| s.kind).collect();
        assert_eq!(
            kinds,
            [
                SegmentKind::GaitBout,
                SegmentKind::ShortRest,
                SegmentKind::Unknown,
                SegmentKind::LongRest,
                SegmentKind::GaitBout
            ]
        );
    }

    #[test]
    fn long_turn_is_sharp() {
        let rec = yaw_only(|t| if (3.0..5.0).contains(&t) { 1.0 } else { 0.0 }, 8.0);
        let turns = detect_turns(&rec, &SegmentationConfig::default()).unwrap();
        assert_eq!(turns.len(), 1);
        assert!((turns[0].angle_deg - 114.59).abs() < 1.5, "{}", turns[0].angle_deg);
        assert!(turns[0].sharp);
    }

    #[test]
    fn one_radian_turn_is_not_sharp() {
        let rec = yaw_only(|t| if (3.0..5.0).contains(&t) { -0.5 } else { 0.0 }, 8.0);
        let turns = detect_turns(&rec, &SegmentationConfig::default()).unwrap();
        assert_eq!(turns.len(), 1);
        assert!((turns[0].angle_deg + 57.30).abs() < 1.0, "{}", turns[0].angle_deg);
        assert!(!turns[0].sharp);
    }

    #[test]
    fn no_rotation_no_turns() {
        let rec = yaw_only(|_| 0.0, 8.0);
        assert!(detect_turns(&rec, &SegmentationConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn periodic_signal_is_gait_and_noise_is_not() {
        let cfg = SegmentationConfig::default();
        let fs = 50.0;
        let x: Vec<f64> = (0..500)
            .map(|k| {
                let t = k as f64 / fs;
                (2.0 * std::f64::consts::PI * t / 1.2).sin() + 0.5 * (4.0 * std::f64::consts::PI * t / 1.2).sin()
            })
            .collect();
        assert!(verify_gait(&x, fs, &cfg));
        let peak = dominant_stride_peak(&x, fs, cfg.stride_band_s).unwrap();
        assert!((peak.refined_lag / fs - 1.2).abs() < 0.1);

        assert!(!verify_gait(&[9.81; 500], fs, &cfg));

        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut rejected = 0;
        for seed in 0..100u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let noise: Vec<f64> = (0..500).map(|_| normal.sample(&mut rng)).collect();
            if !verify_gait(&noise, fs, &cfg) {
                rejected += 1;
            }
        }
        assert!(rejected >= 95, "white noise accepted {} times", 100 - rejected);
    }

    #[test]
    fn config_ranges_are_enforced() {
        let mut cfg = SegmentationConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.gyro_thresh = 0.7;
        assert!(cfg.validate().is_err());
        let cfg = SegmentationConfig { std_thresh: 0.01, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = SegmentationConfig { window_s: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
