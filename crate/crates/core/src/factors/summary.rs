//! Posterior contrasts and convergence diagnostics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::model::ModelParams;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub contrast: String,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub q5: f64,
    pub q95: f64,
    pub iqr: f64,
    pub z_score: f64,
    pub p_gt_z: f64,
}

pub const CONTRAST_NAMES: [&str; 4] = ["Female - Male", "Indoors - Outdoors", "With aid - Without aid", "Disease"];

/// Per-draw values of each contrast, in [`CONTRAST_NAMES`] order.
pub fn contrast_values(p: &ModelParams) -> [f64; 4] {
    [p.s_sex[0] - p.s_sex[1], p.e_env[0] - p.e_env[1], p.h_aid[0] - p.h_aid[1], p.d]
}

pub fn summarize(name: &str, values: &[f64]) -> PosteriorSummary {
    let sorted = stats::sorted(values);
    let mean = stats::mean(values);
    let std = stats::sample_sd(values).unwrap_or(0.0);
    let z_score = if std > 0.0 {
        mean / std
    } else if mean == 0.0 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    };
    let p_gt_z = 2.0 * (1.0 - Normal::standard().cdf(z_score.abs()));
    PosteriorSummary {
        contrast: name.to_string(),
        mean,
        median: stats::quantile_sorted(&sorted, 0.5),
        std,
        q5: stats::quantile_sorted(&sorted, 0.05),
        q95: stats::quantile_sorted(&sorted, 0.95),
        iqr: stats::quantile_sorted(&sorted, 0.75) - stats::quantile_sorted(&sorted, 0.25),
        z_score,
        p_gt_z,
    }
}

pub fn contrasts(draws: &[ModelParams]) -> Vec<PosteriorSummary> {
    let values: Vec<[f64; 4]> = draws.iter().map(contrast_values).collect();
    CONTRAST_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| summarize(name, &values.iter().map(|v| v[k]).collect::<Vec<_>>()))
        .collect()
}

/// Split-chain potential scale reduction. Chains must have equal length.
/// Returns 1 for a quantity that is constant across all draws.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let n_half = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    if n_half < 2 {
        return f64::NAN;
    }
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| {
            let off = c.len() - 2 * n_half;
            [&c[off..off + n_half], &c[off + n_half..]]
        })
        .collect();
    let n = n_half as f64;
    let means: Vec<f64> = halves.iter().map(|h| stats::mean(h)).collect();
    let within = halves.iter().map(|h| stats::sample_sd(h).unwrap_or(0.0).powi(2)).sum::<f64>() / halves.len() as f64;
    let between = n * stats::sample_sd(&means).unwrap_or(0.0).powi(2);
    if within == 0.0 {
        return if between == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    (var_plus / within).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal as NormalDist};

    #[test]
    fn equal_sex_effects_give_zero_contrast() {
        let draws: Vec<ModelParams> = (0..50)
            .map(|k| ModelParams {
                kappa: 10.0,
                a: 1.0,
                b: 0.0,
                s_sex: [0.1 * k as f64; 2],
                d: 0.2,
                delta: [0.2, 0.3, 0.5],
                mu_sub: 0.0,
                sigma_sub: 1.0,
                u: vec![],
                e_env: [k as f64, 0.0],
                h_aid: [0.0, 0.0],
            })
            .collect();
        let c = contrasts(&draws);
        assert_eq!(c[0].mean, 0.0);
        assert_eq!(c[0].std, 0.0);
        assert_eq!(c[0].z_score, 0.0);
        assert_eq!(c[0].p_gt_z, 1.0);
        assert!(c[1].q5 <= c[1].median && c[1].median <= c[1].q95);
    }

    #[test]
    fn z_and_tail_probability() {
        let s = summarize("x", &[1.0, 2.0, 3.0]);
        assert_eq!(s.z_score, 2.0);
        assert!((s.p_gt_z - 0.0455).abs() < 1e-4);
    }

    #[test]
    fn rhat_near_one_for_iid_and_large_for_shifted() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let nd = NormalDist::new(0.0, 1.0).unwrap();
        let iid: Vec<Vec<f64>> = (0..4).map(|_| (0..1000).map(|_| nd.sample(&mut rng)).collect()).collect();
        assert!((split_rhat(&iid) - 1.0).abs() < 0.01);
        let shifted: Vec<Vec<f64>> =
            (0..4).map(|c| (0..1000).map(|_| nd.sample(&mut rng) + 3.0 * c as f64).collect()).collect();
        assert!(split_rhat(&shifted) > 2.0);
        assert_eq!(split_rhat(&[vec![0.5; 10], vec![0.5; 10]]), 1.0);
    }
}
