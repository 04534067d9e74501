//! Synthetic factor tables drawn from the model itself, for calibration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Cauchy, Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use super::data::{Aid, Environment, FactorObservation, Sex};
use super::model::{logistic, ModelParams, PriorConfig, N_DISEASE_STEPS};
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub n_subjects: usize,
    pub obs_per_subject: usize,
    pub age_mean: f64,
    pub age_sd: f64,
    pub prior: PriorConfig,
    /// Overrides the drawn Indoor minus Outdoor contrast.
    pub env_contrast: Option<f64>,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_subjects: 60,
            obs_per_subject: 10,
            age_mean: 50.0,
            age_sd: 12.0,
            prior: PriorConfig::default(),
            env_contrast: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub rows: Vec<FactorObservation>,
    pub truth: ModelParams,
}

fn half_cauchy<R: Rng>(scale: f64, rng: &mut R) -> f64 {
    Cauchy::new(0.0, scale).expect("positive scale").sample(rng).abs()
}

/// Draws parameters from the prior.
pub fn draw_from_prior<R: Rng>(prior: &PriorConfig, n_subjects: usize, rng: &mut R) -> ModelParams {
    let s = prior.effect_scale;
    let effect = Normal::new(0.0, s).expect("positive scale");
    let mut e = || effect.sample(rng);
    let (b, s_sex, d, mu_sub, e_env, h_aid) = (e(), [e(), e()], e(), e(), [e(), e()], [e(), e()]);
    let gaps: [f64; N_DISEASE_STEPS] = std::array::from_fn(|_| rng.sample(Exp1));
    let total: f64 = gaps.iter().sum();
    let delta = gaps.map(|g| g / total);
    let kappa = half_cauchy(prior.kappa_scale, rng);
    let sigma_sub = half_cauchy(s, rng);
    let a = Normal::new(prior.intercept_mean, prior.intercept_sd).expect("positive sd").sample(rng);
    let subject = Normal::new(mu_sub, sigma_sub).expect("positive sd");
    let u = (0..n_subjects).map(|_| subject.sample(rng)).collect();
    ModelParams { kappa, a, b, s_sex, d, delta, mu_sub, sigma_sub, u, e_env, h_aid }
}

/// Simulates a factor table. Sex, disease, and age are drawn per subject,
/// environment and aid per observation.
pub fn simulate(cfg: &SimulationConfig) -> Result<Simulation> {
    cfg.prior.validate()?;
    if cfg.n_subjects == 0 || cfg.obs_per_subject == 0 {
        return Err(Error::Config("simulation needs at least one subject and observation".into()));
    }
    if !(cfg.age_sd > 0.0) {
        return Err(Error::Config(format!("age_sd must be positive, got {}", cfg.age_sd)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut truth = draw_from_prior(&cfg.prior, cfg.n_subjects, &mut rng);
    if let Some(c) = cfg.env_contrast {
        let mid = 0.5 * (truth.e_env[0] + truth.e_env[1]);
        truth.e_env = [mid + 0.5 * c, mid - 0.5 * c];
    }

    let age_dist = Normal::new(cfg.age_mean, cfg.age_sd).expect("checked sd");
    let subjects: Vec<(f64, Sex, u8)> = (0..cfg.n_subjects)
        .map(|_| {
            let sex = if rng.random::<bool>() { Sex::F } else { Sex::M };
            let disease = rng.random_range(0..=3u8);
            ((age_dist.sample(&mut rng) * 10.0).round() / 10.0, sex, disease)
        })
        .collect();
    // age is standardized over observations, as when fitting
    let ages: Vec<f64> = subjects.iter().map(|s| s.0).collect();
    let (age_mean, age_sd) = (stats::mean(&ages), stats::sample_sd(&ages).unwrap_or(1.0));

    let mut rows = Vec::with_capacity(cfg.n_subjects * cfg.obs_per_subject);
    for (j, &(age, sex, disease)) in subjects.iter().enumerate() {
        for _ in 0..cfg.obs_per_subject {
            let environment = if rng.random::<bool>() { Environment::Indoor } else { Environment::Outdoor };
            let aid = if rng.random::<bool>() { Aid::WithAid } else { Aid::WithoutAid };
            let eta = truth.a
                + truth.b * (age - age_mean) / age_sd
                + truth.s_sex[sex as usize]
                + truth.d * truth.disease_fraction(disease as usize)
                + truth.u[j]
                + truth.e_env[environment as usize]
                + truth.h_aid[aid as usize];
            let mu = logistic(eta).clamp(1e-12, 1.0 - 1e-12);
            let f1 = Beta::new(mu * truth.kappa, (1.0 - mu) * truth.kappa)
                .map(|b| b.sample(&mut rng))
                .unwrap_or(mu);
            rows.push(FactorObservation {
                f1,
                age,
                sex,
                disease,
                subject: format!("S{j:03}"),
                environment,
                aid,
            });
        }
    }
    Ok(Simulation { rows, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::data::Dataset;

    #[test]
    fn simulation_shape_and_determinism() {
        let cfg = SimulationConfig { seed: 4, ..SimulationConfig::default() };
        let a = simulate(&cfg).unwrap();
        assert_eq!(a.rows.len(), 600);
        assert_eq!(a, simulate(&cfg).unwrap());
        let data = Dataset::encode(&a.rows).unwrap();
        assert_eq!(data.n_subjects(), 60);
        assert!((a.truth.delta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn env_contrast_override() {
        let cfg = SimulationConfig { env_contrast: Some(-2.0), ..SimulationConfig::default() };
        let t = simulate(&cfg).unwrap().truth;
        assert!((t.e_env[0] - t.e_env[1] + 2.0).abs() < 1e-12);
    }
}
