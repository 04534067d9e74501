//! Beta regression with logit link, subject intercepts, and an ordinal
//! disease predictor.
//!
//! ```text
//! y[i] ~ Beta(mu[i] k, (1 - mu[i]) k)
//! logit(mu[i]) = a + b age_z + sex[.] + d sum_{j < disease} delta_j + u[subject] + env[.] + aid[.]
//! k ~ HalfCauchy(20), a ~ Normal(1, 1), b, sex, d, env, aid, mu_sub ~ Normal(0, s),
//! sigma_sub ~ HalfCauchy(s), delta ~ Dirichlet(1, 1, 1), u ~ Normal(mu_sub, sigma_sub)
//! ```
//!
//! The sampler works on an unconstrained vector: `k` and `sigma_sub` on the
//! log scale, the effects divided by `s`, subject intercepts non-centered,
//! and `delta` through stick-breaking.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};
use std::f64::consts::PI;

use super::data::Dataset;
use crate::error::{Error, Result};

pub const N_DISEASE_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    /// Scale `s` of the effect priors.
    pub effect_scale: f64,
    pub kappa_scale: f64,
    pub intercept_mean: f64,
    pub intercept_sd: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { effect_scale: 0.01, kappa_scale: 20.0, intercept_mean: 1.0, intercept_sd: 1.0 }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("effect_scale", self.effect_scale),
            ("kappa_scale", self.kappa_scale),
            ("intercept_sd", self.intercept_sd),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be strictly positive, got {v}")));
            }
        }
        if !self.intercept_mean.is_finite() {
            return Err(Error::Config("intercept_mean must be finite".into()));
        }
        Ok(())
    }
}

/// Model parameters on their natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kappa: f64,
    pub a: f64,
    pub b: f64,
    /// Indexed F, M.
    pub s_sex: [f64; 2],
    pub d: f64,
    pub delta: [f64; N_DISEASE_STEPS],
    pub mu_sub: f64,
    pub sigma_sub: f64,
    pub u: Vec<f64>,
    /// Indexed Indoor, Outdoor.
    pub e_env: [f64; 2],
    /// Indexed WithAid, WithoutAid.
    pub h_aid: [f64; 2],
}

impl ModelParams {
    /// Fraction of the total disease effect reached at each severity level.
    pub fn disease_fraction(&self, level: usize) -> f64 {
        self.delta[..level.min(N_DISEASE_STEPS)].iter().sum()
    }

    pub fn linear_predictor(&self, cell: &super::data::Cell) -> f64 {
        self.a
            + self.b * cell.age_z
            + self.s_sex[cell.sex]
            + self.d * self.disease_fraction(cell.disease)
            + self.u[cell.subject]
            + self.e_env[cell.environment]
            + self.h_aid[cell.aid]
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Shape parameters of the mean/precision Beta parameterization.
pub fn beta_shapes(mu: f64, kappa: f64) -> (f64, f64) {
    (mu * kappa, (1.0 - mu) * kappa)
}

pub fn beta_log_density(y: f64, alpha: f64, beta: f64) -> f64 {
    ln_gamma(alpha + beta) - ln_gamma(alpha) - ln_gamma(beta) + (alpha - 1.0) * y.ln() + (beta - 1.0) * (1.0 - y).ln()
}

fn normal_lpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
}

fn half_cauchy_lpdf(x: f64, scale: f64) -> f64 {
    (2.0 / (PI * scale)).ln() - (1.0 + (x / scale).powi(2)).ln()
}

/// Beta log-likelihood of all cells.
pub fn log_likelihood(params: &ModelParams, data: &Dataset) -> f64 {
    data.cells
        .iter()
        .map(|c| {
            let mu = logistic(params.linear_predictor(c));
            let (al, be) = beta_shapes(mu, params.kappa);
            c.n * (ln_gamma(params.kappa) - ln_gamma(al) - ln_gamma(be))
                + (al - 1.0) * c.sum_log_y
                + (be - 1.0) * c.sum_log_1my
        })
        .sum()
}

/// Log posterior density (up to the evidence) on the natural scale.
pub fn log_posterior(params: &ModelParams, data: &Dataset, prior: &PriorConfig) -> Result<f64> {
    if params.u.len() != data.n_subjects() {
        return Err(Error::Contract(format!(
            "{} subject intercepts for {} subjects",
            params.u.len(),
            data.n_subjects()
        )));
    }
    let simplex_ok = params.delta.iter().all(|d| *d >= 0.0) && (params.delta.iter().sum::<f64>() - 1.0).abs() < 1e-9;
    if !(params.kappa > 0.0) || !(params.sigma_sub > 0.0) || !simplex_ok {
        return Err(Error::Domain("kappa and sigma_sub must be positive and delta a simplex".into()));
    }
    let s = prior.effect_scale;
    let mut lp = half_cauchy_lpdf(params.kappa, prior.kappa_scale)
        + normal_lpdf(params.a, prior.intercept_mean, prior.intercept_sd)
        + normal_lpdf(params.b, 0.0, s)
        + normal_lpdf(params.d, 0.0, s)
        + normal_lpdf(params.mu_sub, 0.0, s)
        + half_cauchy_lpdf(params.sigma_sub, s)
        // Dirichlet(1, 1, 1) density is Gamma(3) on the simplex
        + 2f64.ln();
    for v in params.s_sex.iter().chain(&params.e_env).chain(&params.h_aid) {
        lp += normal_lpdf(*v, 0.0, s);
    }
    for u in &params.u {
        lp += normal_lpdf(*u, params.mu_sub, params.sigma_sub);
    }
    Ok(lp + log_likelihood(params, data))
}

// unconstrained layout
const I_LOG_KAPPA: usize = 0;
const I_A: usize = 1;
const I_B: usize = 2;
const I_SEX: usize = 3;
const I_D: usize = 5;
const I_STICK: usize = 6;
const I_MU_SUB: usize = 8;
const I_LOG_SIGMA: usize = 9;
const I_ENV: usize = 10;
const I_AID: usize = 12;
const I_Z: usize = 14;

/// Log density and gradient over the unconstrained parameter vector.
#[derive(Debug, Clone)]
pub struct Model {
    pub data: Dataset,
    pub prior: PriorConfig,
}

/// Stan-style stick-breaking for a 3-simplex: returns the simplex, the
/// stick breaks `z_k`, and the log Jacobian.
fn stick_breaking(y: &[f64]) -> ([f64; N_DISEASE_STEPS], [f64; N_DISEASE_STEPS - 1], f64) {
    let mut delta = [0.0; N_DISEASE_STEPS];
    let mut z = [0.0; N_DISEASE_STEPS - 1];
    let mut remaining = 1.0;
    let mut log_jac = 0.0;
    for k in 0..N_DISEASE_STEPS - 1 {
        let offset = ((N_DISEASE_STEPS - 1 - k) as f64).ln();
        z[k] = logistic(y[k] - offset);
        delta[k] = remaining * z[k];
        log_jac += (z[k] * (1.0 - z[k]) * remaining).ln();
        remaining -= delta[k];
    }
    delta[N_DISEASE_STEPS - 1] = remaining;
    (delta, z, log_jac)
}

fn inverse_stick_breaking(delta: &[f64; N_DISEASE_STEPS]) -> [f64; N_DISEASE_STEPS - 1] {
    let mut y = [0.0; N_DISEASE_STEPS - 1];
    let mut remaining = 1.0;
    for k in 0..N_DISEASE_STEPS - 1 {
        let z = (delta[k] / remaining).clamp(1e-300, 1.0 - 1e-16);
        y[k] = (z / (1.0 - z)).ln() + ((N_DISEASE_STEPS - 1 - k) as f64).ln();
        remaining -= delta[k];
    }
    y
}

impl Model {
    pub fn new(data: Dataset, prior: PriorConfig) -> Result<Self> {
        prior.validate()?;
        Ok(Self { data, prior })
    }

    pub fn dim(&self) -> usize {
        I_Z + self.data.n_subjects()
    }

    pub fn constrain(&self, x: &[f64]) -> ModelParams {
        let s = self.prior.effect_scale;
        let (delta, _, _) = stick_breaking(&x[I_STICK..I_STICK + 2]);
        let mu_sub = s * x[I_MU_SUB];
        let sigma_sub = s * x[I_LOG_SIGMA].exp();
        ModelParams {
            kappa: self.prior.kappa_scale * x[I_LOG_KAPPA].exp(),
            a: x[I_A],
            b: s * x[I_B],
            s_sex: [s * x[I_SEX], s * x[I_SEX + 1]],
            d: s * x[I_D],
            delta,
            mu_sub,
            sigma_sub,
            u: x[I_Z..].iter().map(|z| mu_sub + sigma_sub * z).collect(),
            e_env: [s * x[I_ENV], s * x[I_ENV + 1]],
            h_aid: [s * x[I_AID], s * x[I_AID + 1]],
        }
    }

    pub fn unconstrain(&self, p: &ModelParams) -> Vec<f64> {
        let s = self.prior.effect_scale;
        let mut x = vec![0.0; self.dim()];
        x[I_LOG_KAPPA] = (p.kappa / self.prior.kappa_scale).ln();
        x[I_A] = p.a;
        x[I_B] = p.b / s;
        x[I_SEX] = p.s_sex[0] / s;
        x[I_SEX + 1] = p.s_sex[1] / s;
        x[I_D] = p.d / s;
        x[I_STICK..I_STICK + 2].copy_from_slice(&inverse_stick_breaking(&p.delta));
        x[I_MU_SUB] = p.mu_sub / s;
        x[I_LOG_SIGMA] = (p.sigma_sub / s).ln();
        x[I_ENV] = p.e_env[0] / s;
        x[I_ENV + 1] = p.e_env[1] / s;
        x[I_AID] = p.h_aid[0] / s;
        x[I_AID + 1] = p.h_aid[1] / s;
        for (z, u) in x[I_Z..].iter_mut().zip(&p.u) {
            *z = (u - p.mu_sub) / p.sigma_sub;
        }
        x
    }

    /// Log Jacobian of [`Model::constrain`], for checking against [`log_posterior`].
    pub fn log_jacobian(&self, x: &[f64]) -> f64 {
        let s = self.prior.effect_scale;
        let (_, _, stick_jac) = stick_breaking(&x[I_STICK..I_STICK + 2]);
        let log_sigma = s.ln() + x[I_LOG_SIGMA];
        (self.prior.kappa_scale.ln() + x[I_LOG_KAPPA])
            + 9.0 * s.ln()
            + log_sigma
            + stick_jac
            + self.data.n_subjects() as f64 * log_sigma
    }

    /// Log density of the unconstrained vector, writing its gradient into `grad`.
    pub fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        grad.iter_mut().for_each(|g| *g = 0.0);
        let s = self.prior.effect_scale;
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        let mut lp = 0.0;

        // log kappa and log (sigma_sub / s): HalfCauchy(1) in log space
        for i in [I_LOG_KAPPA, I_LOG_SIGMA] {
            let l = x[i];
            let e2 = (2.0 * l).exp();
            lp += (2.0 / PI).ln() - e2.ln_1p() + l;
            grad[i] += 1.0 - 2.0 * e2 / (1.0 + e2);
        }
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        // intercept
        let za = (x[I_A] - self.prior.intercept_mean) / self.prior.intercept_sd;
        lp += -0.5 * za * za - self.prior.intercept_sd.ln() - half_log_2pi;
        grad[I_A] -= za / self.prior.intercept_sd;
        // standard-normal raw effects and non-centered subject offsets
        for i in [I_B, I_SEX, I_SEX + 1, I_D, I_MU_SUB, I_ENV, I_ENV + 1, I_AID, I_AID + 1]
            .into_iter()
            .chain(I_Z..x.len())
        {
            lp += -0.5 * x[i] * x[i] - half_log_2pi;
            grad[i] -= x[i];
        }
        // simplex: Dirichlet(1,1,1) plus stick-breaking Jacobian
        let (delta, z, stick_jac) = stick_breaking(&x[I_STICK..I_STICK + 2]);
        lp += 2f64.ln() + stick_jac;
        // d log|J| / d y_k: (1 - 2 z_k) from its own break, and through the
        // remaining stick for later breaks: d log(1 - z_k) / d y_k = -z_k
        grad[I_STICK] += (1.0 - 2.0 * z[0]) - z[0];
        grad[I_STICK + 1] += 1.0 - 2.0 * z[1];

        let kappa = self.prior.kappa_scale * x[I_LOG_KAPPA].exp();
        let b = s * x[I_B];
        let d = s * x[I_D];
        let mu_sub = s * x[I_MU_SUB];
        let sigma_sub = s * x[I_LOG_SIGMA].exp();
        let frac = [0.0, delta[0], delta[0] + delta[1], 1.0];
        // d frac / d y: delta0 = z0, delta1 = (1 - z0) z1
        let dz0 = z[0] * (1.0 - z[0]);
        let dz1 = z[1] * (1.0 - z[1]);
        let dfrac_dy0 = [0.0, dz0, dz0 - dz0 * z[1], 0.0];
        let dfrac_dy1 = [0.0, 0.0, (1.0 - z[0]) * dz1, 0.0];

        let lg_kappa = ln_gamma(kappa);
        let dg_kappa = digamma(kappa);
        let mut d_kappa = 0.0;
        for c in &self.data.cells {
            let zsub = x[I_Z + c.subject];
            let eta = x[I_A]
                + b * c.age_z
                + s * x[I_SEX + c.sex]
                + d * frac[c.disease]
                + mu_sub
                + sigma_sub * zsub
                + s * x[I_ENV + c.environment]
                + s * x[I_AID + c.aid];
            let mu = logistic(eta);
            let (al, be) = (mu * kappa, (1.0 - mu) * kappa);
            if !(al > 0.0 && be > 0.0) {
                return f64::NEG_INFINITY;
            }
            let (dg_al, dg_be) = (digamma(al), digamma(be));
            lp += c.n * (lg_kappa - ln_gamma(al) - ln_gamma(be)) + (al - 1.0) * c.sum_log_y + (be - 1.0) * c.sum_log_1my;
            d_kappa += c.n * (dg_kappa - mu * dg_al - (1.0 - mu) * dg_be) + mu * c.sum_log_y + (1.0 - mu) * c.sum_log_1my;
            let d_mu = kappa * (c.n * (dg_be - dg_al) + c.sum_log_y - c.sum_log_1my);
            let g = d_mu * mu * (1.0 - mu);
            grad[I_A] += g;
            grad[I_B] += g * s * c.age_z;
            grad[I_SEX + c.sex] += g * s;
            grad[I_D] += g * s * frac[c.disease];
            grad[I_STICK] += g * d * dfrac_dy0[c.disease];
            grad[I_STICK + 1] += g * d * dfrac_dy1[c.disease];
            grad[I_MU_SUB] += g * s;
            grad[I_LOG_SIGMA] += g * sigma_sub * zsub;
            grad[I_Z + c.subject] += g * sigma_sub;
            grad[I_ENV + c.environment] += g * s;
            grad[I_AID + c.aid] += g * s;
        }
        grad[I_LOG_KAPPA] += d_kappa * kappa;
        if lp.is_finite() {
            lp
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.log_density_grad(x, &mut g)
    }
}
