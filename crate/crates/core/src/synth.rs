//! Synthetic IMU recordings with exact ground truth.
//!
//! Body axes are `x` antero-posterior, `y` medio-lateral, `z` vertical-up.
//! During walking the vertical specific force is
//!
//! ```text
//! g - A (1 + e cos(phi)) cos(theta) - A2 cos(2 theta) - B sum_k exp(-(t - t_k)^2 / 2 w^2)
//! ```
//!
//! with step phase `theta` zero at every initial contact `t_k` and stride
//! phase `phi = theta / 2` zero at left contacts. The stride-rate modulation
//! `e` makes left and right steps differ, so the stride rather than the step
//! is the fundamental period. The antero-posterior channel mixes step and
//! stride sinusoids, the medio-lateral channel is quiet, and the yaw rate
//! is `yaw_amp cos(phi)`, positive around left contacts. Turn phases add a
//! constant yaw rate that integrates to the scripted angle.
//!
//! Body-frame vectors are rotated by `sensor_rotation` into sensor
//! coordinates before white noise is added.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::events::{EventKind, GaitEvent, Side};
use crate::ingest::ImuRecording;
use crate::segmentation::{Segment, SegmentKind, SegmentationConfig};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Phase {
    Walk { duration_s: f64 },
    Rest { duration_s: f64 },
    /// Walking while turning by `angle_deg` (positive counter-clockwise).
    Turn { duration_s: f64, angle_deg: f64 },
}

impl Phase {
    pub fn duration(&self) -> f64 {
        match *self {
            Phase::Walk { duration_s } | Phase::Rest { duration_s } | Phase::Turn { duration_s, .. } => duration_s,
        }
    }

    fn is_gait(&self) -> bool {
        !matches!(self, Phase::Rest { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Total duration; must equal the script's total when a script is given.
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub start_time_s: f64,
    pub stride_s: f64,
    /// First initial contact of a walking run, as a fraction of the stride after its start.
    pub ic_phase: f64,
    /// Final-contact delay after its initial contact, as a fraction of the stride.
    pub fc_phase: f64,
    pub vertical_amp: f64,
    pub harmonic_amp: f64,
    /// Relative left/right amplitude modulation.
    pub stride_asymmetry: f64,
    pub transient_amp: f64,
    pub transient_width_s: f64,
    pub ap_amp: f64,
    pub yaw_amp: f64,
    pub noise_sigma: f64,
    pub gyro_noise_sigma: f64,
    /// Body-to-sensor rotation as `[w, x, y, z]`.
    pub sensor_rotation: [f64; 4],
    pub script: Vec<Phase>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            sample_rate_hz: 50.0,
            start_time_s: 0.0,
            stride_s: 1.2,
            ic_phase: 0.25,
            fc_phase: 0.12,
            vertical_amp: 2.0,
            harmonic_amp: 0.3,
            stride_asymmetry: 0.5,
            transient_amp: 2.0,
            transient_width_s: 0.02,
            ap_amp: 1.5,
            yaw_amp: 0.2,
            noise_sigma: 0.0,
            gyro_noise_sigma: 0.0,
            sensor_rotation: [1.0, 0.0, 0.0, 0.0],
            script: Vec::new(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Walking for `duration_s` at `steps_per_min`.
    pub fn walk(duration_s: f64, steps_per_min: f64) -> Self {
        Self { duration_s, stride_s: 120.0 / steps_per_min, ..Self::default() }
    }

    pub fn with_script(mut self, script: Vec<Phase>) -> Self {
        self.duration_s = script.iter().map(Phase::duration).sum();
        self.script = script;
        self
    }

    pub fn rotation(&self) -> Result<UnitQuaternion<f64>> {
        let [w, x, y, z] = self.sensor_rotation;
        let q = Quaternion::new(w, x, y, z);
        if !(q.norm() > 1e-9) || !q.norm().is_finite() {
            return Err(Error::Config("sensor_rotation must be a non-zero quaternion".into()));
        }
        Ok(UnitQuaternion::from_quaternion(q))
    }

    pub fn step_s(&self) -> f64 {
        self.stride_s / 2.0
    }

    /// The script, or a single walk when none is given.
    pub fn phases(&self) -> Vec<Phase> {
        if self.script.is_empty() {
            vec![Phase::Walk { duration_s: self.duration_s }]
        } else {
            self.script.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("duration_s", self.duration_s),
            ("sample_rate_hz", self.sample_rate_hz),
            ("transient_width_s", self.transient_width_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be strictly positive, got {v}")));
            }
        }
        let non_negative = [
            ("vertical_amp", self.vertical_amp),
            ("harmonic_amp", self.harmonic_amp),
            ("stride_asymmetry", self.stride_asymmetry),
            ("transient_amp", self.transient_amp),
            ("ap_amp", self.ap_amp),
            ("yaw_amp", self.yaw_amp),
            ("noise_sigma", self.noise_sigma),
            ("gyro_noise_sigma", self.gyro_noise_sigma),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.4..=2.25).contains(&self.stride_s) {
            return Err(Error::Config(format!("stride_s {} outside 0.4..=2.25 s", self.stride_s)));
        }
        if !(0.0..1.0).contains(&self.ic_phase) {
            return Err(Error::Config(format!("ic_phase {} outside [0, 1)", self.ic_phase)));
        }
        // final contacts must pass the quality gate of a quarter of 1.5 strides
        if !(self.fc_phase > 0.0 && self.fc_phase < 0.25 * 1.5) {
            return Err(Error::Config(format!("fc_phase {} outside (0, 0.375)", self.fc_phase)));
        }
        self.rotation()?;
        if !self.script.is_empty() {
            if let Some(p) = self.script.iter().find(|p| !(p.duration() > 0.0) || !p.duration().is_finite()) {
                return Err(Error::Config(format!("script phase {p:?} needs a positive duration")));
            }
            if let Some(p) = self.script.iter().find(|p| matches!(p, Phase::Turn { angle_deg, .. } if !angle_deg.is_finite())) {
                return Err(Error::Config(format!("script phase {p:?} has a non-finite angle")));
            }
            let total: f64 = self.script.iter().map(Phase::duration).sum();
            if (total - self.duration_s).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "script phases last {total} s but duration_s is {}",
                    self.duration_s
                )));
            }
        }
        Ok(())
    }
}

/// Generated recording with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub recording: ImuRecording,
    pub events: Vec<GaitEvent>,
    pub segments: Vec<Segment>,
}

/// Ground truth in the JSON form written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub events: Vec<GaitEvent>,
    pub segments: Vec<Segment>,
}

/// Contiguous walking and turning: one continuous gait phase.
#[derive(Debug, Clone)]
struct Run {
    start: f64,
    end: f64,
    /// Initial-contact times.
    contacts: Vec<f64>,
    /// Time the oscillation fades out (half a step after the last contact).
    active_end: f64,
}

impl Run {
    fn new(start: f64, end: f64, cfg: &SynthConfig) -> Self {
        let step = cfg.step_s();
        let first = start + cfg.ic_phase * cfg.stride_s;
        let contacts: Vec<f64> = (0..)
            .map(|k| first + k as f64 * step)
            .take_while(|t| t + step / 2.0 <= end + 1e-9)
            .collect();
        let active_end = contacts.last().map_or(start, |t| t + step / 2.0);
        Self { start, end, contacts, active_end }
    }

    fn theta(&self, t: f64, cfg: &SynthConfig) -> f64 {
        2.0 * PI * (t - (self.start + cfg.ic_phase * cfg.stride_s)) / cfg.step_s()
    }

    /// Raised-cosine fade over a quarter step at both ends of the activity.
    fn envelope(&self, t: f64, cfg: &SynthConfig) -> f64 {
        let ramp = 0.25 * cfg.step_s();
        let rise = ((t - self.start) / ramp).clamp(0.0, 1.0);
        let fall = ((self.active_end - t) / ramp).clamp(0.0, 1.0);
        let raised = |u: f64| 0.5 - 0.5 * (PI * u).cos();
        raised(rise) * raised(fall)
    }
}

fn runs(phases: &[Phase], t0: f64, cfg: &SynthConfig) -> Vec<Run> {
    let mut out = Vec::new();
    let mut t = t0;
    let mut open: Option<f64> = None;
    for p in phases {
        match (p.is_gait(), open) {
            (true, None) => open = Some(t),
            (false, Some(s)) => {
                out.push(Run::new(s, t, cfg));
                open = None;
            }
            _ => {}
        }
        t += p.duration();
    }
    if let Some(s) = open {
        out.push(Run::new(s, t, cfg));
    }
    out
}

/// Segment kinds the pipeline should recover for this script.
fn truth_segments(phases: &[Phase], t0: f64, t_end: f64) -> Vec<Segment> {
    let rules = SegmentationConfig::default();
    let mut segments: Vec<Segment> = Vec::new();
    let mut t = t0;
    for p in phases {
        let (start, end) = (t, t + p.duration());
        t = end;
        let kind = match *p {
            Phase::Rest { .. } => {
                if start - t0 <= rules.boundary_margin_s || t_end - end <= rules.boundary_margin_s {
                    SegmentKind::Boundary
                } else if end - start < rules.rest_split_s {
                    SegmentKind::ShortRest
                } else {
                    SegmentKind::LongRest
                }
            }
            Phase::Turn { angle_deg, .. } if angle_deg.abs() >= rules.sharp_turn_deg => SegmentKind::SharpTurn,
            _ => SegmentKind::GaitBout,
        };
        match segments.last_mut() {
            Some(last) if kind == SegmentKind::GaitBout && last.kind == SegmentKind::GaitBout => last.end_s = end,
            _ => segments.push(Segment::new(start, end, kind)),
        }
    }
    for s in &mut segments {
        if s.kind == SegmentKind::GaitBout && s.duration() < rules.min_bout_s {
            s.kind = SegmentKind::Unknown;
        }
    }
    segments
}

/// Generates the recording and its ground truth.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let fs = cfg.sample_rate_hz;
    let n = (cfg.duration_s * fs).round() as usize;
    if n < 2 {
        return Err(Error::Config("configuration yields fewer than two samples".into()));
    }
    let rotation = cfg.rotation()?;
    let phases = cfg.phases();
    let t0 = cfg.start_time_s;
    let runs = runs(&phases, t0, cfg);

    // per-sample turn yaw rate
    let mut phase_bounds = Vec::with_capacity(phases.len());
    let mut t = t0;
    for p in &phases {
        phase_bounds.push((t, t + p.duration(), *p));
        t += p.duration();
    }
    let turn_rate = |t: f64| -> f64 {
        phase_bounds
            .iter()
            .find(|(s, e, _)| t >= *s && t < *e)
            .map_or(0.0, |(_, _, p)| match *p {
                Phase::Turn { duration_s, angle_deg } => angle_deg.to_radians() / duration_s,
                _ => 0.0,
            })
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let accel_noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let gyro_noise = Normal::new(0.0, cfg.gyro_noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let w2 = 2.0 * cfg.transient_width_s.powi(2);

    let mut accel = Vec::with_capacity(n);
    let mut gyro = Vec::with_capacity(n);
    for k in 0..n {
        let t = t0 + k as f64 / fs;
        let mut a_body = Vector3::new(0.0, 0.0, GRAVITY);
        let mut w_body = Vector3::new(0.0, 0.0, turn_rate(t));
        if let Some(run) = runs.iter().find(|r| t >= r.start && t < r.end) {
            let env = run.envelope(t, cfg);
            let theta = run.theta(t, cfg);
            let phi = theta / 2.0;
            let transient: f64 = run
                .contacts
                .iter()
                .filter(|c| (t - *c).abs() < 6.0 * cfg.transient_width_s)
                .map(|c| (-(t - c).powi(2) / w2).exp())
                .sum();
            a_body.z -= env
                * (cfg.vertical_amp * (1.0 + cfg.stride_asymmetry * phi.cos()) * theta.cos()
                    + cfg.harmonic_amp * (2.0 * theta).cos());
            a_body.z -= cfg.transient_amp * transient;
            a_body.x += env * cfg.ap_amp * (0.6 * theta.sin() + 0.8 * phi.sin());
            w_body.z += env * cfg.yaw_amp * phi.cos();
        }
        let noise_a = Vector3::from_fn(|_, _| accel_noise.sample(&mut rng));
        let noise_g = Vector3::from_fn(|_, _| gyro_noise.sample(&mut rng));
        accel.push(rotation.transform_vector(&a_body) + noise_a);
        gyro.push(rotation.transform_vector(&w_body) + noise_g);
    }
    let recording = ImuRecording::uniform(t0, fs, accel, gyro)?;

    let fc_delay = cfg.fc_phase * cfg.stride_s;
    let mut events = Vec::new();
    for run in &runs {
        for (i, &tc) in run.contacts.iter().enumerate() {
            let side = if i % 2 == 0 { Side::Left } else { Side::Right };
            events.push(GaitEvent::new(tc, EventKind::InitialContact, side));
            events.push(GaitEvent::new(tc + fc_delay, EventKind::FinalContact, side.opposite()));
        }
    }
    events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));

    let t_end = t0 + cfg.duration_s;
    Ok(SynthOutput { recording, events, segments: truth_segments(&phases, t0, t_end) })
}

impl SynthOutput {
    pub fn truth(&self) -> GroundTruth {
        GroundTruth { events: self.events.clone(), segments: self.segments.clone() }
    }
}
