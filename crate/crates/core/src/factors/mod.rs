//! Bayesian beta regression of per-test F1 scores on subject and test
//! factors, sampled with NUTS.

pub mod data;
pub mod model;
pub mod nuts;
pub mod simulate;
pub mod summary;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use data::{Aid, Dataset, Environment, FactorObservation, Sex};
pub use model::{log_likelihood, log_posterior, Model, ModelParams, PriorConfig};
pub use summary::{contrasts, PosteriorSummary};

use crate::error::{Error, Result};
use nuts::{ChainOutput, LogDensity, NutsConfig};

impl LogDensity for Model {
    fn dim(&self) -> usize {
        Model::dim(self)
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        Model::log_density_grad(self, x, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Post-warmup draws per chain.
    pub n_draws: usize,
    pub n_warmup: usize,
    pub chains: usize,
    pub seed: u64,
    pub max_depth: usize,
    pub target_accept: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { n_draws: 1000, n_warmup: 1000, chains: 4, seed: 0, max_depth: 10, target_accept: 0.8 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws == 0 || self.chains == 0 {
            return Err(Error::Config("n_draws and chains must be positive".into()));
        }
        if self.max_depth == 0 || self.max_depth > 15 {
            return Err(Error::Config(format!("max_depth must be in 1..=15, got {}", self.max_depth)));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!("target_accept must be in (0, 1), got {}", self.target_accept)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub accept_rate: f64,
    pub chain_accept_rates: Vec<f64>,
    pub divergences: usize,
    pub step_sizes: Vec<f64>,
    pub max_rhat: f64,
    pub rhat: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    /// Draws of all chains, chain after chain.
    pub draws: Vec<ModelParams>,
    pub n_chains: usize,
    pub diagnostics: Diagnostics,
}

impl Posterior {
    pub fn chain(&self, k: usize) -> &[ModelParams] {
        let n = self.draws.len() / self.n_chains;
        &self.draws[k * n..(k + 1) * n]
    }

    pub fn contrasts(&self) -> Vec<PosteriorSummary> {
        summary::contrasts(&self.draws)
    }
}

/// Named scalar quantities tracked by the convergence diagnostics.
fn named_scalars(p: &ModelParams) -> Vec<(String, f64)> {
    let mut out = vec![
        ("kappa".to_string(), p.kappa),
        ("a".into(), p.a),
        ("b".into(), p.b),
        ("s_sex[F]".into(), p.s_sex[0]),
        ("s_sex[M]".into(), p.s_sex[1]),
        ("d".into(), p.d),
        ("mu_sub".into(), p.mu_sub),
        ("sigma_sub".into(), p.sigma_sub),
        ("e_env[Indoor]".into(), p.e_env[0]),
        ("e_env[Outdoor]".into(), p.e_env[1]),
        ("h_aid[WithAid]".into(), p.h_aid[0]),
        ("h_aid[WithoutAid]".into(), p.h_aid[1]),
    ];
    for (k, d) in p.delta.iter().enumerate() {
        out.push((format!("delta[{k}]"), *d));
    }
    for (j, u) in p.u.iter().enumerate() {
        out.push((format!("u[{j}]"), *u));
    }
    for (name, v) in summary::CONTRAST_NAMES.iter().zip(summary::contrast_values(p)) {
        out.push((name.to_string(), v));
    }
    out
}

fn initial_point(model: &Model, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; model.dim()];
    for _ in 0..100 {
        let x: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        if model.log_density_grad(&x, &mut grad).is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(x);
        }
    }
    Err(Error::Diagnostics {
        message: "no finite initial point in 100 attempts".into(),
        guidance: "check the factor table for degenerate F1 values".into(),
    })
}

/// Samples the posterior with independent chains run in parallel.
/// Chain `k` uses stream `k` of a ChaCha generator seeded with `cfg.seed`.
pub fn sample_posterior(data: &Dataset, prior: &PriorConfig, cfg: &SamplerConfig) -> Result<Posterior> {
    cfg.validate()?;
    let model = Model::new(data.clone(), *prior)?;
    let nuts_cfg = NutsConfig {
        n_warmup: cfg.n_warmup,
        n_draws: cfg.n_draws,
        max_depth: cfg.max_depth,
        target_accept: cfg.target_accept,
    };
    let outputs: Vec<Result<ChainOutput>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.chains)
            .map(|k| {
                let model = &model;
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(k as u64);
                    let init = initial_point(model, &mut rng)?;
                    Ok(nuts::run_chain(model, &init, &nuts_cfg, &mut rng))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    let outputs = outputs.into_iter().collect::<Result<Vec<_>>>()?;

    let chain_accept_rates: Vec<f64> = outputs.iter().map(ChainOutput::mean_accept).collect();
    let divergences: usize = outputs.iter().map(|o| o.n_divergent).sum();
    let total = cfg.chains * cfg.n_draws;
    if chain_accept_rates.contains(&0.0) {
        return Err(Error::Diagnostics {
            message: "a chain never accepted a proposal".into(),
            guidance: "increase n_warmup or target_accept, or rescale the priors".into(),
        });
    }
    if divergences == total {
        return Err(Error::Diagnostics {
            message: "every transition diverged".into(),
            guidance: "increase target_accept to shrink the step size".into(),
        });
    }

    let draws: Vec<ModelParams> = outputs.iter().flat_map(|o| o.draws.iter().map(|x| model.constrain(x))).collect();
    let per_chain: Vec<Vec<Vec<(String, f64)>>> = draws
        .chunks(cfg.n_draws)
        .map(|chain| chain.iter().map(named_scalars).collect())
        .collect();
    let mut rhat = BTreeMap::new();
    if let Some(first) = per_chain.first().and_then(|c| c.first()) {
        for (i, (name, _)) in first.iter().enumerate() {
            let chains: Vec<Vec<f64>> = per_chain.iter().map(|c| c.iter().map(|d| d[i].1).collect()).collect();
            rhat.insert(name.clone(), summary::split_rhat(&chains));
        }
    }
    let max_rhat = rhat.values().copied().fold(f64::NAN, f64::max);
    let accept_rate = outputs.iter().flat_map(|o| &o.accept_stats).sum::<f64>() / total as f64;
    Ok(Posterior {
        draws,
        n_chains: cfg.chains,
        diagnostics: Diagnostics {
            accept_rate,
            chain_accept_rates,
            divergences,
            step_sizes: outputs.iter().map(|o| o.step_size).collect(),
            max_rhat,
            rhat,
        },
    })
}

/// Encodes a factor table and fits the model.
pub fn fit(rows: &[FactorObservation], prior: &PriorConfig, cfg: &SamplerConfig) -> Result<Posterior> {
    if rows.is_empty() {
        return Err(Error::EmptySet("factor table has no rows".into()));
    }
    sample_posterior(&Dataset::encode(rows)?, prior, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_only_intercept_has_prior_mean() {
        let cfg = SamplerConfig { n_draws: 1000, n_warmup: 500, seed: 2, ..SamplerConfig::default() };
        let post = sample_posterior(&Dataset::empty(), &PriorConfig::default(), &cfg).unwrap();
        let a: Vec<f64> = post.draws.iter().map(|p| p.a).collect();
        assert!((crate::stats::mean(&a) - 1.0).abs() < 0.1);
        assert!(post.diagnostics.max_rhat < 1.05, "{:?}", post.diagnostics);
    }

    #[test]
    fn same_seed_identical_draws() {
        let sim = simulate::simulate(&simulate::SimulationConfig {
            n_subjects: 8,
            obs_per_subject: 4,
            ..Default::default()
        })
        .unwrap();
        let cfg = SamplerConfig { n_draws: 50, n_warmup: 50, chains: 2, seed: 9, ..SamplerConfig::default() };
        let a = fit(&sim.rows, &PriorConfig::default(), &cfg).unwrap();
        let b = fit(&sim.rows, &PriorConfig::default(), &cfg).unwrap();
        assert_eq!(a.draws, b.draws);
        for p in &a.draws {
            assert!(p.delta.iter().all(|d| *d >= 0.0));
            assert!((p.delta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_sampler_config() {
        let cfg = SamplerConfig { target_accept: 1.0, ..SamplerConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
