//! Adaptive continuous-wavelet step detection inside an eligible gait bout.
//!
//! The axis signal (vertical or antero-posterior acceleration) is
//! mean-removed and integrated, then differentiated with a
//! derivative-of-Gaussian CWT; initial contacts are extrema of that signal.
//! A second CWT differentiation yields the signal whose opposite extrema
//! mark final contacts. Scale, axis, and polarity are estimated from the bout
//! itself, so the detector adapts to walking speed and sensor placement.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::events::{EventKind, GaitEvent, Side};
use crate::segmentation::lag_band;
use crate::stats;

pub const STRIDE_BAND_S: (f64, f64) = (0.4, 2.25);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveletAxis {
    Vertical,
    AnteroPosterior,
}

/// Polarity of the wavelet response at initial contacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveletSign {
    /// Initial contacts at maxima, final contacts at minima.
    Positive,
    /// Initial contacts at minima, final contacts at maxima.
    Negative,
}

impl WaveletSign {
    pub fn value(self) -> f64 {
        match self {
            WaveletSign::Positive => 1.0,
            WaveletSign::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveletParams {
    /// Gaussian standard deviation of the analyzing function, in samples.
    pub scale: f64,
    pub axis: WaveletAxis,
    pub sign: WaveletSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrideEstimate {
    pub stride_s: f64,
    pub max_stride_s: f64,
}

impl StrideEstimate {
    /// Stride with the 50% tolerance applied for the maximum plausible stride.
    pub fn new(stride_s: f64) -> Self {
        Self { stride_s, max_stride_s: 1.5 * stride_s }
    }
}

/// Tunables of the step detector. Overrides replace the adaptive estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepConfig {
    /// Same-kind events closer than this are collapsed (s).
    pub min_event_spacing_s: f64,
    /// Final contacts must follow their initial contact within this fraction
    /// of the maximum stride duration.
    pub fc_gate_fraction: f64,
    /// Extrema must deviate from the signal mean by this many standard deviations.
    pub prominence_sd: f64,
    /// Minimum normalized autocorrelation for a cadence peak.
    pub min_autocorr: f64,
    /// A shorter-lag autocorrelation peak within this fraction of the best
    /// one is preferred, so stride multiples are not mistaken for the stride.
    pub stride_peak_tolerance: f64,
    pub laterality_lowpass_hz: f64,
    /// Yaw rates below this magnitude leave the side unknown (rad/s).
    pub laterality_deadband: f64,
    pub scale_override: Option<f64>,
    pub axis_override: Option<WaveletAxis>,
    pub sign_override: Option<WaveletSign>,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            min_event_spacing_s: 0.25,
            fc_gate_fraction: 0.25,
            prominence_sd: 0.5,
            min_autocorr: 0.3,
            stride_peak_tolerance: 0.9,
            laterality_lowpass_hz: 2.0,
            laterality_deadband: 0.05,
            scale_override: None,
            axis_override: None,
            sign_override: None,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("min_event_spacing_s", self.min_event_spacing_s),
            ("fc_gate_fraction", self.fc_gate_fraction),
            ("min_autocorr", self.min_autocorr),
            ("stride_peak_tolerance", self.stride_peak_tolerance),
            ("laterality_lowpass_hz", self.laterality_lowpass_hz),
        ];
        for (name, v) in checks {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be strictly positive, got {v}")));
            }
        }
        if !(self.prominence_sd >= 0.0) || !(self.laterality_deadband >= 0.0) {
            return Err(Error::Config("prominence_sd and laterality_deadband must be non-negative".into()));
        }
        if self.stride_peak_tolerance > 1.0 || self.fc_gate_fraction > 1.0 {
            return Err(Error::Config("stride_peak_tolerance and fc_gate_fraction must not exceed 1".into()));
        }
        if let Some(s) = self.scale_override {
            if !(s > 0.0) {
                return Err(Error::Config(format!("scale override must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// Gait-bout samples in anatomical coordinates `(V, AP, ML)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bout {
    pub start_s: f64,
    pub sample_rate: f64,
    pub accel: Vec<Vector3<f64>>,
    pub gyro: Vec<Vector3<f64>>,
    /// Whether the antero-posterior axis was established; without it only
    /// the vertical axis is used.
    pub has_frame: bool,
}

impl Bout {
    pub fn len(&self) -> usize {
        self.accel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accel.is_empty()
    }

    pub fn end_s(&self) -> f64 {
        self.start_s + self.len() as f64 / self.sample_rate
    }

    pub fn channel(&self, axis: WaveletAxis) -> Vec<f64> {
        let i = match axis {
            WaveletAxis::Vertical => 0,
            WaveletAxis::AnteroPosterior => 1,
        };
        self.accel.iter().map(|a| a[i]).collect()
    }

    pub fn yaw_rate(&self) -> Vec<f64> {
        self.gyro.iter().map(|g| g.x).collect()
    }

    fn time_of(&self, idx: usize) -> f64 {
        self.start_s + idx as f64 / self.sample_rate
    }
}

/// Stride duration from the vertical-acceleration autocorrelation.
///
/// Among local maxima in the 0.4 to 2.25 s lag band that reach
/// `min_autocorr`, the shortest lag whose coefficient is within
/// `stride_peak_tolerance` of the best is taken.
pub fn estimate_stride_duration(vertical: &[f64], sample_rate: f64, cfg: &StepConfig) -> Result<StrideEstimate> {
    let (lo, hi) = lag_band(vertical.len(), sample_rate, STRIDE_BAND_S).ok_or(Error::NoCadence)?;
    let r = dsp::autocorrelation(vertical, hi + 1).ok_or(Error::NoCadence)?;
    let peaks: Vec<_> = dsp::local_maxima_in(&r, lo, hi)
        .into_iter()
        .filter(|p| p.value >= cfg.min_autocorr)
        .collect();
    let best = peaks.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
    let chosen = peaks
        .iter()
        .filter(|p| p.value >= cfg.stride_peak_tolerance * best)
        .min_by_key(|p| p.lag)
        .ok_or(Error::NoCadence)?;
    let stride_s = (chosen.refined_lag / sample_rate).clamp(STRIDE_BAND_S.0, STRIDE_BAND_S.1);
    Ok(StrideEstimate::new(stride_s))
}

/// Coefficient of the autocorrelation peak nearest the step lag (within ±20%).
fn step_lag_coefficient(x: &[f64], step_lag: f64) -> f64 {
    let lo = (0.8 * step_lag).floor().max(1.0) as usize;
    let hi = (1.2 * step_lag).ceil() as usize;
    if hi + 1 >= x.len() {
        return f64::NEG_INFINITY;
    }
    match dsp::autocorrelation(x, hi) {
        Some(r) => r[lo..=hi].iter().copied().fold(f64::NEG_INFINITY, f64::max),
        None => f64::NEG_INFINITY,
    }
}

/// Derivative-of-Gaussian CWT of the mean-removed, integrated signal.
fn integrate_and_differentiate(x: &[f64], scale: f64, sample_rate: f64) -> Vec<f64> {
    let m = stats::mean(x);
    let centered: Vec<f64> = x.iter().map(|v| v - m).collect();
    let integral = dsp::cumulative_integral(&centered, 1.0 / sample_rate);
    dsp::cwt_gaussian_derivative(&integral, scale)
}

/// Estimates scale, axis, and polarity of the wavelet for this bout.
///
/// - axis: the channel (vertical or antero-posterior) with the stronger
///   autocorrelation at the step lag, half the stride;
/// - scale: the one whose analyzing function peaks at the step frequency;
/// - sign: majority vote over step-length windows of whether the largest
///   excursion of the integrated-then-differentiated signal is a minimum.
pub fn estimate_wavelet_params(bout: &Bout, stride: &StrideEstimate, cfg: &StepConfig) -> Result<WaveletParams> {
    let fs = bout.sample_rate;
    let step_lag = stride.stride_s / 2.0 * fs;

    let axis = cfg.axis_override.unwrap_or_else(|| {
        if !bout.has_frame {
            return WaveletAxis::Vertical;
        }
        let v = step_lag_coefficient(&bout.channel(WaveletAxis::Vertical), step_lag);
        let ap = step_lag_coefficient(&bout.channel(WaveletAxis::AnteroPosterior), step_lag);
        if ap > v {
            WaveletAxis::AnteroPosterior
        } else {
            WaveletAxis::Vertical
        }
    });

    let step_freq = 2.0 / stride.stride_s;
    let scale = cfg.scale_override.unwrap_or_else(|| dsp::scale_for_frequency(step_freq, fs));

    let sign = match cfg.sign_override {
        Some(s) => s,
        None => {
            // one vote per gait cycle, so each cycle holds both steps
            let s1 = integrate_and_differentiate(&bout.channel(axis), scale, fs);
            vote_sign(&s1, (2.0 * step_lag).round().max(2.0) as usize)
        }
    };
    Ok(WaveletParams { scale, axis, sign })
}

fn vote_sign(s1: &[f64], window: usize) -> WaveletSign {
    let m = stats::mean(s1);
    let (mut minima, mut maxima) = (0usize, 0usize);
    for chunk in s1.chunks(window).filter(|c| c.len() * 2 >= window) {
        let extreme = chunk.iter().map(|v| v - m).max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
        if extreme < 0.0 {
            minima += 1;
        } else if extreme > 0.0 {
            maxima += 1;
        }
    }
    if minima > maxima {
        WaveletSign::Negative
    } else {
        WaveletSign::Positive
    }
}

fn prominent_extrema(x: &[f64], want_minima: bool, k_sd: f64) -> Vec<(usize, f64)> {
    let m = stats::mean(x);
    let sd = stats::population_variance(x).sqrt();
    let idx = if want_minima { dsp::local_minima(x) } else { dsp::local_maxima(x) };
    idx.into_iter()
        .filter_map(|i| {
            let dev = x[i] - m;
            let prominent = if want_minima { dev < -k_sd * sd } else { dev > k_sd * sd };
            prominent.then_some((i, dev.abs()))
        })
        .collect()
}

/// Finds initial and final contacts (sides unknown), time-sorted.
pub fn detect_events(bout: &Bout, params: &WaveletParams, cfg: &StepConfig) -> Result<Vec<GaitEvent>> {
    if !(params.scale > 0.0) {
        return Err(Error::Config(format!("wavelet scale must be positive, got {}", params.scale)));
    }
    let needed = 2 * dsp::wavelet_support(params.scale);
    if bout.len() < needed {
        return Err(Error::InsufficientData(format!(
            "bout of {} samples is shorter than two wavelet supports ({needed})",
            bout.len()
        )));
    }
    let fs = bout.sample_rate;
    let s1 = integrate_and_differentiate(&bout.channel(params.axis), params.scale, fs);
    let s2 = dsp::cwt_gaussian_derivative(&s1, params.scale);
    let ic_at_minima = params.sign == WaveletSign::Negative;

    let mut events: Vec<GaitEvent> = prominent_extrema(&s1, ic_at_minima, cfg.prominence_sd)
        .into_iter()
        .map(|(i, strength)| GaitEvent { strength, ..GaitEvent::new(bout.time_of(i), EventKind::InitialContact, Side::Unknown) })
        .chain(prominent_extrema(&s2, !ic_at_minima, cfg.prominence_sd).into_iter().map(|(i, strength)| GaitEvent {
            strength,
            ..GaitEvent::new(bout.time_of(i), EventKind::FinalContact, Side::Unknown)
        }))
        .collect();
    sort_events(&mut events);
    Ok(events)
}

fn sort_events(events: &mut [GaitEvent]) {
    events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s).then(a.kind.cmp(&b.kind)));
}

/// Assigns sides from the low-pass filtered yaw rate: positive at an initial
/// contact means left, negative right. A final contact belongs to the foot
/// opposite the initial contact that precedes it.
pub fn assign_laterality(
    events: &[GaitEvent],
    yaw_rate: &[f64],
    sample_rate: f64,
    start_s: f64,
    cfg: &StepConfig,
) -> Result<Vec<GaitEvent>> {
    let filtered = if cfg.laterality_lowpass_hz < sample_rate / 2.0 && yaw_rate.len() > 1 {
        dsp::lowpass_zero_phase(yaw_rate, cfg.laterality_lowpass_hz, sample_rate)?
    } else {
        yaw_rate.to_vec()
    };
    let mut sorted = events.to_vec();
    sort_events(&mut sorted);
    let mut last_ic: Option<Side> = None;
    let out = sorted
        .into_iter()
        .map(|mut e| {
            match e.kind {
                EventKind::InitialContact => {
                    e.side = if filtered.is_empty() {
                        Side::Unknown
                    } else {
                        let idx = ((e.time_s - start_s) * sample_rate).round().clamp(0.0, (filtered.len() - 1) as f64)
                            as usize;
                        let w = filtered[idx];
                        if w > cfg.laterality_deadband {
                            Side::Left
                        } else if w < -cfg.laterality_deadband {
                            Side::Right
                        } else {
                            Side::Unknown
                        }
                    };
                    last_ic = Some(e.side);
                }
                EventKind::FinalContact => {
                    e.side = last_ic.map(Side::opposite).unwrap_or(Side::Unknown);
                }
            }
            e
        })
        .collect();
    Ok(out)
}

/// Removes physiologically implausible events.
///
/// 1. Same-kind events closer than `min_event_spacing_s` collapse to the
///    stronger one.
/// 2. An initial contact separated from every neighbouring initial contact
///    by more than the maximum stride is an orphan and is removed.
/// 3. A final contact must follow an initial contact within
///    `fc_gate_fraction` of the maximum stride.
/// 4. At most one final contact (the strongest) is kept per initial contact.
pub fn quality_check(events: &[GaitEvent], stride: &StrideEstimate, cfg: &StepConfig) -> Vec<GaitEvent> {
    let mut sorted = events.to_vec();
    sort_events(&mut sorted);

    let collapse = |kind: EventKind| -> Vec<GaitEvent> {
        let mut kept: Vec<GaitEvent> = Vec::new();
        for e in sorted.iter().filter(|e| e.kind == kind) {
            match kept.last_mut() {
                Some(last) if e.time_s - last.time_s < cfg.min_event_spacing_s => {
                    if e.strength > last.strength {
                        *last = *e;
                    }
                }
                _ => kept.push(*e),
            }
        }
        kept
    };
    let ics = collapse(EventKind::InitialContact);
    let fcs = collapse(EventKind::FinalContact);

    let max_stride = stride.max_stride_s;
    let ics: Vec<GaitEvent> = ics
        .iter()
        .enumerate()
        .filter(|(i, e)| {
            let prev_gap = i.checked_sub(1).map(|j| e.time_s - ics[j].time_s);
            let next_gap = ics.get(i + 1).map(|n| n.time_s - e.time_s);
            let gaps: Vec<f64> = prev_gap.into_iter().chain(next_gap).collect();
            gaps.is_empty() || gaps.iter().any(|&g| g <= max_stride)
        })
        .map(|(_, e)| *e)
        .collect();

    let gate = cfg.fc_gate_fraction * max_stride;
    let mut best_fc: Vec<Option<GaitEvent>> = vec![None; ics.len()];
    for fc in fcs {
        let owner = ics.partition_point(|ic| ic.time_s < fc.time_s);
        if owner == 0 {
            continue;
        }
        let ic = &ics[owner - 1];
        if fc.time_s - ic.time_s > gate {
            continue;
        }
        let slot = &mut best_fc[owner - 1];
        if slot.is_none_or(|cur| fc.strength > cur.strength) {
            *slot = Some(fc);
        }
    }

    let mut out: Vec<GaitEvent> = ics.into_iter().chain(best_fc.into_iter().flatten()).collect();
    sort_events(&mut out);
    out
}

/// Everything the detector established for one bout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoutDetection {
    pub start_s: f64,
    pub end_s: f64,
    pub stride: StrideEstimate,
    pub params: WaveletParams,
    pub events: Vec<GaitEvent>,
}

/// Runs stride estimation, parameter estimation, detection, laterality, and
/// quality checks on one bout.
pub fn detect_steps(bout: &Bout, cfg: &StepConfig) -> Result<BoutDetection> {
    let stride = estimate_stride_duration(&bout.channel(WaveletAxis::Vertical), bout.sample_rate, cfg)?;
    let params = estimate_wavelet_params(bout, &stride, cfg)?;
    let raw = detect_events(bout, &params, cfg)?;
    let checked = quality_check(&raw, &stride, cfg);
    let events = assign_laterality(&checked, &bout.yaw_rate(), bout.sample_rate, bout.start_s, cfg)?;
    Ok(BoutDetection { start_s: bout.start_s, end_s: bout.end_s(), stride, params, events })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ic(t: f64) -> GaitEvent {
        GaitEvent::new(t, EventKind::InitialContact, Side::Unknown)
    }

    fn fc(t: f64) -> GaitEvent {
        GaitEvent::new(t, EventKind::FinalContact, Side::Unknown)
    }

    #[test]
    fn close_initial_contacts_collapse() {
        let out = quality_check(&[ic(1.0), ic(1.01), ic(2.0)], &StrideEstimate::new(1.0), &StepConfig::default());
        let times: Vec<f64> = out.iter().map(|e| e.time_s).collect();
        assert_eq!(times, [1.0, 2.0]);
    }

    #[test]
    fn collapse_keeps_stronger_event() {
        let weak = GaitEvent { strength: 1.0, ..ic(1.0) };
        let strong = GaitEvent { strength: 2.0, ..ic(1.1) };
        let out = quality_check(&[weak, strong, ic(1.6)], &StrideEstimate::new(1.0), &StepConfig::default());
        assert_eq!(out[0].time_s, 1.1);
    }

    #[test]
    fn final_contact_gate_uses_quarter_of_max_stride() {
        // max stride 1.5 s -> gate 0.375 s
        let stride = StrideEstimate::new(1.0);
        assert_eq!(stride.max_stride_s, 1.5);
        let cfg = StepConfig::default();
        let kept = quality_check(&[ic(1.0), fc(1.3)], &stride, &cfg);
        assert_eq!(kept.len(), 2);
        let dropped = quality_check(&[ic(1.0), fc(1.5)], &stride, &cfg);
        assert_eq!(dropped, vec![ic(1.0)]);
    }

    #[test]
    fn final_contact_without_preceding_initial_contact_is_dropped() {
        let out = quality_check(&[fc(0.9), ic(1.0)], &StrideEstimate::new(1.0), &StepConfig::default());
        assert_eq!(out, vec![ic(1.0)]);
    }

    #[test]
    fn isolated_initial_contact_is_removed() {
        let events = [ic(1.0), ic(1.5), ic(2.0), ic(8.0)];
        let out = quality_check(&events, &StrideEstimate::new(1.0), &StepConfig::default());
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|e| e.time_s < 3.0));
    }

    #[test]
    fn one_final_contact_per_initial_contact() {
        let a = GaitEvent { strength: 1.0, ..fc(1.05) };
        let b = GaitEvent { strength: 3.0, ..fc(1.32) };
        let out = quality_check(&[ic(1.0), a, b, ic(1.6)], &StrideEstimate::new(1.2), &StepConfig::default());
        let fcs: Vec<f64> = out.iter().filter(|e| e.kind == EventKind::FinalContact).map(|e| e.time_s).collect();
        assert_eq!(fcs, [1.32]);
    }

    #[test]
    fn laterality_follows_yaw_sign() {
        let fs = 50.0;
        let stride = 1.2;
        let yaw: Vec<f64> = (0..500)
            .map(|k| 0.3 * (2.0 * std::f64::consts::PI * (k as f64 / fs - 0.3) / stride).cos())
            .collect();
        let events: Vec<GaitEvent> = (0..15)
            .flat_map(|i| {
                let t = 0.3 + 0.6 * i as f64;
                [ic(t), fc(t + 0.14)]
            })
            .collect();
        let cfg = StepConfig::default();
        let sided = assign_laterality(&events, &yaw, fs, 0.0, &cfg).unwrap();
        for (i, pair) in sided.chunks(2).enumerate() {
            let expect = if i % 2 == 0 { Side::Left } else { Side::Right };
            assert_eq!(pair[0].side, expect);
            assert_eq!(pair[1].side, expect.opposite());
        }

        let negated: Vec<f64> = yaw.iter().map(|w| -w).collect();
        let swapped = assign_laterality(&events, &negated, fs, 0.0, &cfg).unwrap();
        for (a, b) in sided.iter().zip(&swapped) {
            assert_eq!(a.side.opposite(), b.side);
        }

        let zero = assign_laterality(&events, &vec![0.0; 500], fs, 0.0, &cfg).unwrap();
        assert!(zero.iter().all(|e| e.side == Side::Unknown));
    }

    #[test]
    fn constant_signal_has_no_cadence() {
        assert!(matches!(
            estimate_stride_duration(&[9.81; 500], 50.0, &StepConfig::default()),
            Err(Error::NoCadence)
        ));
    }

    #[test]
    fn sign_vote_flips_under_negation() {
        let x: Vec<f64> = (0..300)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / 30.0;
                -th.cos() - 0.4 * (2.0 * th).cos()
            })
            .collect();
        assert_eq!(vote_sign(&x, 30), WaveletSign::Negative);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(vote_sign(&neg, 30), WaveletSign::Positive);
    }

    #[test]
    fn short_bout_is_insufficient() {
        let bout = Bout {
            start_s: 0.0,
            sample_rate: 50.0,
            accel: vec![Vector3::new(9.81, 0.0, 0.0); 40],
            gyro: vec![Vector3::zeros(); 40],
            has_frame: false,
        };
        let params = WaveletParams { scale: 4.0, axis: WaveletAxis::Vertical, sign: WaveletSign::Negative };
        assert!(matches!(
            detect_events(&bout, &params, &StepConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }
}
