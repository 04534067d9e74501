//! End-to-end processing of one recording: preprocessing, gravity
//! alignment, task recognition, anatomical alignment, and step detection
//! in every eligible gait bout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::GaitEvent;
use crate::evaluate::DEFAULT_WINDOW_S;
use crate::frame::{self, AnatomicalFrame};
use crate::ingest::{self, ImuRecording, DEFAULT_CUTOFF_HZ};
use crate::orientation::{self, GravityAlignedRecording, DEFAULT_BETA};
use crate::segmentation::{self, Segment, SegmentationConfig, Turn};
use crate::stepdetect::{self, Bout, StepConfig, StrideEstimate, WaveletParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Accelerometer low-pass cutoff (Hz).
    pub cutoff_hz: f64,
    /// Orientation filter gain.
    pub beta: f64,
    /// Orientation estimates this long after the start are not trusted when
    /// the recording starts in motion (s).
    pub convergence_s: f64,
    /// Event-matching tolerance window used by evaluation (s).
    pub window_s: f64,
    pub segmentation: SegmentationConfig,
    pub step: StepConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: DEFAULT_CUTOFF_HZ,
            beta: DEFAULT_BETA,
            convergence_s: 2.0,
            window_s: DEFAULT_WINDOW_S,
            segmentation: SegmentationConfig::default(),
            step: StepConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff_hz > 0.0) || !self.cutoff_hz.is_finite() {
            return Err(Error::Config(format!("cutoff_hz must be positive, got {}", self.cutoff_hz)));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be non-negative, got {}", self.beta)));
        }
        if !(self.convergence_s >= 0.0) || !self.convergence_s.is_finite() {
            return Err(Error::Config(format!("convergence_s must be non-negative, got {}", self.convergence_s)));
        }
        if !(self.window_s > 0.0) || !self.window_s.is_finite() {
            return Err(Error::Config(format!("window_s must be positive, got {}", self.window_s)));
        }
        self.segmentation.validate()?;
        self.step.validate()
    }
}

/// What happened in one eligible bout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoutReport {
    pub start_s: f64,
    pub end_s: f64,
    /// Antero-posterior direction in gravity-aligned horizontal coordinates,
    /// absent when detection fell back to the vertical axis alone.
    pub heading: Option<[f64; 2]>,
    pub stride: Option<StrideEstimate>,
    pub params: Option<WaveletParams>,
    pub n_events: usize,
    /// Why no events were detected, if so.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedRecording {
    /// Recording timeline, with sharp turns cut out of gait bouts.
    pub segments: Vec<Segment>,
    pub turns: Vec<Turn>,
    pub bouts: Vec<BoutReport>,
    pub events: Vec<GaitEvent>,
}

/// Resamples, filters, and rotates the recording into the gravity-aligned frame.
pub fn preprocess(rec: &ImuRecording, cfg: &PipelineConfig) -> Result<GravityAlignedRecording> {
    if rec.len() < 2 {
        return Err(Error::InsufficientData(format!("recording has {} samples", rec.len())));
    }
    let regular = ingest::regularize(rec)?;
    let fs = regular.sample_rate().ok_or_else(|| Error::Contract("regularized recording lacks a rate".into()))?;
    let filtered = if cfg.cutoff_hz < fs / 2.0 { ingest::lowpass_accel(&regular, cfg.cutoff_hz)? } else { regular };
    let q = orientation::estimate_orientation(&filtered, cfg.beta)?;
    orientation::align_with_gravity(&filtered, &q)
}

/// Builds the anatomical-frame bout, falling back to vertical-only detection
/// when no reliable antero-posterior direction exists.
fn anatomical_bout(aligned: &GravityAlignedRecording, i0: usize, i1: usize, cfg: &PipelineConfig) -> (Bout, Option<[f64; 2]>) {
    let fs = aligned.sample_rate;
    let accel = &aligned.accel[i0..i1];
    let gyro = &aligned.gyro[i0..i1];
    let start_s = aligned.start() + i0 as f64 / fs;
    let established = frame::estimate_frame(accel, fs).ok().and_then(|f| {
        let anat = frame::to_anatomical(accel, &f);
        let ap: Vec<f64> = anat.iter().map(|v| v.y).collect();
        frame::verify_frame(&ap, fs, &cfg.segmentation).then_some((f, anat))
    });
    match established {
        Some((f, anat)) => (
            Bout {
                start_s,
                sample_rate: fs,
                accel: anat,
                gyro: frame::to_anatomical(gyro, &f),
                has_frame: true,
            },
            Some([f.antero_posterior.y, f.antero_posterior.z]),
        ),
        None => {
            let f = AnatomicalFrame::identity();
            (
                Bout {
                    start_s,
                    sample_rate: fs,
                    accel: frame::to_anatomical(accel, &f),
                    gyro: gyro.to_vec(),
                    has_frame: false,
                },
                None,
            )
        }
    }
}

/// Runs the whole pipeline on one recording.
pub fn process(rec: &ImuRecording, cfg: &PipelineConfig) -> Result<ProcessedRecording> {
    cfg.validate()?;
    let aligned = preprocess(rec, cfg)?;
    process_aligned(&aligned, cfg)
}

pub fn process_aligned(aligned: &GravityAlignedRecording, cfg: &PipelineConfig) -> Result<ProcessedRecording> {
    let seg_cfg = &cfg.segmentation;
    let windows = segmentation::classify_windows(aligned, seg_cfg)?;
    let segments = segmentation::segments_from_windows(&windows, aligned.start(), aligned.end(), seg_cfg);
    let turns = segmentation::detect_turns(aligned, seg_cfg)?;
    let mut eligible = segmentation::eligible_bouts(aligned, &segments, &turns, seg_cfg);

    // starting mid-motion, the first seconds of orientation are unconverged
    if windows.first().is_some_and(|w| w.moving) {
        let trusted = aligned.start() + cfg.convergence_s;
        eligible = eligible
            .into_iter()
            .filter_map(|mut b| {
                b.start_s = b.start_s.max(trusted);
                (b.end_s - b.start_s >= seg_cfg.min_bout_s - 1e-9).then_some(b)
            })
            .collect();
    }

    let mut bouts = Vec::with_capacity(eligible.len());
    let mut events = Vec::new();
    for b in &eligible {
        let (i0, i1) = (aligned.index_at(b.start_s), aligned.index_at(b.end_s));
        let (bout, heading) = anatomical_bout(aligned, i0, i1, cfg);
        let mut report = BoutReport {
            start_s: bout.start_s,
            end_s: bout.end_s(),
            heading,
            stride: None,
            params: None,
            n_events: 0,
            skipped: None,
        };
        match stepdetect::detect_steps(&bout, &cfg.step) {
            Ok(det) => {
                report.stride = Some(det.stride);
                report.params = Some(det.params);
                report.n_events = det.events.len();
                events.extend(det.events);
            }
            Err(e @ (Error::NoCadence | Error::InsufficientData(_))) => report.skipped = Some(e.to_string()),
            Err(e) => return Err(e),
        }
        bouts.push(report);
    }
    events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s).then(a.kind.cmp(&b.kind)));
    let segments = segmentation::split_at_sharp_turns(&segments, &turns, seg_cfg);
    Ok(ProcessedRecording { segments, turns, bouts, events })
}
