//! Event matching against a reference, detection metrics, temporal errors,
//! and two-stage aggregation (within participants, then across them).

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::events::EventKind;
use crate::stats;

pub const DEFAULT_WINDOW_S: f64 = 0.5;

/// Slack for window-edge comparisons so that, e.g., 1.25 vs 1.0 matches at ±0.25 s.
const EDGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub kind: EventKind,
    /// `(detected, reference)` pairs, in reference order.
    pub pairs: Vec<(f64, f64)>,
    pub false_positives: Vec<f64>,
    pub false_negatives: Vec<f64>,
}

impl MatchReport {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }

    pub fn fp(&self) -> usize {
        self.false_positives.len()
    }

    pub fn fn_(&self) -> usize {
        self.false_negatives.len()
    }

    /// Signed errors `detected - reference` of the true positives.
    pub fn errors(&self) -> Vec<f64> {
        self.pairs.iter().map(|(d, r)| d - r).collect()
    }
}

fn check_sorted(name: &str, xs: &[f64]) -> Result<()> {
    if let Some(i) = xs.iter().position(|x| !x.is_finite()) {
        return Err(Error::Contract(format!("{name} time at position {i} is not finite")));
    }
    if let Some(i) = xs.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::Contract(format!("{name} times are not sorted at position {}", i + 1)));
    }
    Ok(())
}

/// Greedy per-reference matching: each reference, in time order, takes the
/// closest unused detection within `±window_s/2` (ties go to the earlier one).
pub fn match_events(detected: &[f64], reference: &[f64], window_s: f64, kind: EventKind) -> Result<MatchReport> {
    if !(window_s > 0.0) || !window_s.is_finite() {
        return Err(Error::Config(format!("matching window must be positive, got {window_s}")));
    }
    check_sorted("detected", detected)?;
    check_sorted("reference", reference)?;
    let half = window_s / 2.0;
    let mut used = vec![false; detected.len()];
    let mut pairs = Vec::new();
    let mut false_negatives = Vec::new();
    for &r in reference {
        let lo = detected.partition_point(|&d| d < r - half - EDGE_EPS);
        let mut best: Option<(usize, f64)> = None;
        for (j, &d) in detected.iter().enumerate().skip(lo) {
            let dist = (d - r).abs();
            if d > r + half + EDGE_EPS {
                break;
            }
            if used[j] || dist > half + EDGE_EPS {
                continue;
            }
            if best.is_none_or(|(_, bd)| dist < bd - EDGE_EPS) {
                best = Some((j, dist));
            }
        }
        match best {
            Some((j, _)) => {
                used[j] = true;
                pairs.push((detected[j], r));
            }
            None => false_negatives.push(r),
        }
    }
    let false_positives = detected.iter().zip(&used).filter(|(_, u)| !**u).map(|(d, _)| *d).collect();
    Ok(MatchReport { kind, pairs, false_positives, false_negatives })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl MetricSet {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        Self { precision, recall, f1, tp, fp, fn_ }
    }
}

pub fn compute_metrics(report: &MatchReport) -> MetricSet {
    MetricSet::from_counts(report.tp(), report.fp(), report.fn_())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalErrorSet {
    pub constant_s: f64,
    pub absolute_s: f64,
    /// Sample standard deviation; absent for a single error.
    pub variable_s: Option<f64>,
    /// Root mean square of the errors.
    pub total_variability_s: f64,
    pub median_s: f64,
    pub median_abs_s: f64,
    pub iqr_s: f64,
    pub n_steps: usize,
}

pub fn temporal_errors(report: &MatchReport) -> Result<TemporalErrorSet> {
    temporal_errors_from(&report.errors())
}

/// Statistics of signed errors (positive when the detection is late).
pub fn temporal_errors_from(errors: &[f64]) -> Result<TemporalErrorSet> {
    if errors.is_empty() {
        return Err(Error::EmptySet("temporal errors need at least one matched pair".into()));
    }
    let n = errors.len() as f64;
    let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    Ok(TemporalErrorSet {
        constant_s: stats::mean(errors),
        absolute_s: stats::mean(&abs),
        variable_s: stats::sample_sd(errors),
        total_variability_s: (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        median_s: stats::median(errors),
        median_abs_s: stats::median(&abs),
        iqr_s: stats::iqr(errors),
        n_steps: errors.len(),
    })
}

/// Metrics JSON record for one event kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindEvaluation {
    pub kind: EventKind,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub errors: Option<TemporalErrorSet>,
}

pub fn evaluate_kind(detected: &[f64], reference: &[f64], window_s: f64, kind: EventKind) -> Result<KindEvaluation> {
    let report = match_events(detected, reference, window_s, kind)?;
    let m = compute_metrics(&report);
    let errors = if report.pairs.is_empty() { None } else { Some(temporal_errors(&report)?) };
    Ok(KindEvaluation {
        kind,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        tp: m.tp,
        fp: m.fp,
        fn_: m.fn_,
        errors,
    })
}

/// Per-participant summary of one metric across tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WithinSummary {
    pub median: f64,
    pub iqr: f64,
}

pub fn aggregate_within(values: &[f64]) -> Result<WithinSummary> {
    if values.is_empty() {
        return Err(Error::EmptySet("participant has no values".into()));
    }
    Ok(WithinSummary { median: stats::median(values), iqr: stats::iqr(values) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub n: usize,
    pub median: f64,
    pub iqr: f64,
    pub q1: f64,
    pub q3: f64,
    pub p05: f64,
    pub p95: f64,
    pub mean: f64,
    pub ci95_lo: Option<f64>,
    pub ci95_hi: Option<f64>,
    pub ws_iqr: Option<f64>,
}

/// Across-participant summary; `within_iqrs` are the per-participant IQRs
/// whose median is reported as `ws_iqr`.
pub fn aggregate_across(values: &[f64], within_iqrs: Option<&[f64]>) -> Result<AggregateSummary> {
    if values.is_empty() {
        return Err(Error::EmptySet("no values to aggregate".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("aggregated values must be finite".into()));
    }
    let s = stats::sorted(values);
    let q = |p: f64| stats::quantile_sorted(&s, p);
    let mean = stats::mean(values);
    let (ci95_lo, ci95_hi) = match stats::sample_sd(values) {
        Some(sd) => {
            let n = values.len() as f64;
            let t = StudentsT::new(0.0, 1.0, n - 1.0)
                .map_err(|e| Error::Domain(e.to_string()))?
                .inverse_cdf(0.975);
            let half = t * sd / n.sqrt();
            (Some(mean - half), Some(mean + half))
        }
        None => (None, None),
    };
    let ws_iqr = match within_iqrs {
        Some(iqrs) if !iqrs.is_empty() => Some(stats::median(iqrs)),
        _ => None,
    };
    Ok(AggregateSummary {
        n: values.len(),
        median: q(0.5),
        iqr: q(0.75) - q(0.25),
        q1: q(0.25),
        q3: q(0.75),
        p05: q(0.05),
        p95: q(0.95),
        mean,
        ci95_lo,
        ci95_hi,
        ws_iqr,
    })
}

/// Two-stage aggregation: per-participant medians and IQRs, then a summary
/// of the medians across participants with `ws_iqr` from the IQRs.
pub fn aggregate_two_stage(per_participant: &[Vec<f64>]) -> Result<AggregateSummary> {
    let within = per_participant.iter().map(|v| aggregate_within(v)).collect::<Result<Vec<_>>>()?;
    let medians: Vec<f64> = within.iter().map(|w| w.median).collect();
    let iqrs: Vec<f64> = within.iter().map(|w| w.iqr).collect();
    aggregate_across(&medians, Some(&iqrs))
}
