//! Gaussian stochastic-volatility model
//!
//! ```text
//! y_t | h_t          ~ N(0, exp(h_t))
//! h_t | h_{t-1}      ~ N(mu + phi (h_{t-1} - mu), sigma_eta^2)
//! h_0                ~ N(mu, sigma_eta^2 / (1 - phi^2))
//! ```
//!
//! estimated with a single-site Metropolis-within-Gibbs sampler, and the
//! one-step-ahead predictive median of `sqrt(exp(h_{T+1}))`.

use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::{median_of_sorted, ReturnSeries};
use crate::seed::{derive_seed, rng_from};

pub const MIN_RETURNS: usize = 50;
const ZERO_RETURN_FILL: f64 = 1e-10;
const H_FLOOR: f64 = -23.025850929940457; // ln(1e-10)
const INIT_SMOOTHING: usize = 21;
const ADAPT_EVERY: usize = 50;
const TARGET_ACCEPT: (f64, f64) = (0.30, 0.45);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvParams {
    pub mu: f64,
    pub phi: f64,
    pub sigma_eta: f64,
}

impl SvParams {
    pub fn is_valid(&self) -> bool {
        self.phi.abs() < 1.0 && self.sigma_eta > 0.0 && self.mu.is_finite()
    }
}

/// Independent priors on the three parameters.
///
/// `mu ~ N(mu_mean, mu_var)`, `(phi + 1) / 2 ~ Beta(phi_a, phi_b)`,
/// `sigma_eta^2 ~ Gamma(shape, rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvPriors {
    pub mu_mean: f64,
    pub mu_var: f64,
    pub phi_a: f64,
    pub phi_b: f64,
    pub sigma2_shape: f64,
    pub sigma2_rate: f64,
}

impl Default for SvPriors {
    fn default() -> Self {
        Self {
            mu_mean: 0.0,
            mu_var: 100.0,
            phi_a: 5.0,
            phi_b: 1.5,
            sigma2_shape: 0.5,
            sigma2_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_iter: usize,
    pub n_burnin: usize,
    /// Keep every `thin`-th post-burn-in sweep.
    pub thin: usize,
    pub priors: SvPriors,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_iter: 1000,
            n_burnin: 200,
            thin: 1,
            priors: SvPriors::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_burnin >= self.n_iter {
            return Err(Error::InvalidArgument(format!(
                "n_burnin ({}) must be smaller than n_iter ({})",
                self.n_burnin, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be positive".into()));
        }
        let p = &self.priors;
        if !(p.mu_var > 0.0 && p.phi_a > 0.0 && p.phi_b > 0.0 && p.sigma2_shape > 0.0 && p.sigma2_rate > 0.0) {
            return Err(Error::InvalidArgument("prior hyperparameters must be positive".into()));
        }
        Ok(())
    }

    pub fn n_retained(&self) -> usize {
        (self.n_iter - self.n_burnin).div_ceil(self.thin)
    }
}

/// Move counters; deterministic for a fixed seed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCounts {
    pub h_proposed: u64,
    pub h_accepted: u64,
    pub phi_proposed: u64,
    pub phi_accepted: u64,
    pub sigma_proposed: u64,
    pub sigma_accepted: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvPosterior {
    pub draws: Vec<SvParams>,
    /// `h_0..h_T` for every retained draw.
    pub h_paths: Vec<Vec<f64>>,
    pub n_burnin: usize,
    pub n_retained: usize,
    pub moves: MoveCounts,
    /// Random-walk scale for the latent states after burn-in adaptation.
    pub h_step: f64,
}

impl SvPosterior {
    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn mean_params(&self) -> SvParams {
        let n = self.draws.len() as f64;
        let sum = self.draws.iter().fold((0.0, 0.0, 0.0), |acc, d| {
            (acc.0 + d.mu, acc.1 + d.phi, acc.2 + d.sigma_eta)
        });
        SvParams {
            mu: sum.0 / n,
            phi: sum.1 / n,
            sigma_eta: sum.2 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvForecast {
    pub date: NaiveDate,
    pub median_vol: f64,
    /// `(probability, volatility)` pairs in increasing probability.
    pub quantiles: Vec<(f64, f64)>,
}

struct Sampler<'a> {
    y2: Vec<f64>,
    priors: &'a SvPriors,
    h: Vec<f64>,
    params: SvParams,
    h_step: f64,
    moves: MoveCounts,
}

fn prepare_squared_returns(returns: &[f64]) -> Vec<f64> {
    let mut sign = 1.0;
    returns
        .iter()
        .map(|&r| {
            let r = if r == 0.0 {
                sign = -sign;
                sign * ZERO_RETURN_FILL
            } else {
                r
            };
            r * r
        })
        .collect()
}

fn initial_path(y2: &[f64]) -> Vec<f64> {
    let n = y2.len();
    let half = INIT_SMOOTHING / 2;
    let mut h = Vec::with_capacity(n + 1);
    h.push(0.0);
    for t in 0..n {
        let lo = t.saturating_sub(half);
        let hi = (t + half + 1).min(n);
        let avg = y2[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        h.push(avg.ln().max(H_FLOOR));
    }
    h[0] = h[1];
    h
}

impl<'a> Sampler<'a> {
    fn new(returns: &[f64], priors: &'a SvPriors) -> Self {
        let y2 = prepare_squared_returns(returns);
        let h = initial_path(&y2);
        let mu = h[1..].iter().sum::<f64>() / (h.len() - 1) as f64;
        Self {
            y2,
            priors,
            h,
            params: SvParams {
                mu,
                phi: 0.9,
                sigma_eta: 0.3,
            },
            h_step: 1.0,
            moves: MoveCounts::default(),
        }
    }

    /// One random-walk Metropolis pass over `h_1..h_T` plus an exact draw of `h_0`.
    fn update_states(&mut self, rng: &mut ChaCha8Rng) -> (u64, u64) {
        let SvParams { mu, phi, sigma_eta } = self.params;
        let s2 = sigma_eta * sigma_eta;
        let t_last = self.y2.len();
        let inner_prec = (1.0 + phi * phi) / s2;
        let inner_sd = sigma_eta / (1.0 + phi * phi).sqrt();
        let mut accepted = 0;
        for t in 1..=t_last {
            let y2 = self.y2[t - 1];
            let (mean, prec, scale) = if t < t_last {
                let m = mu
                    + phi * ((self.h[t - 1] - mu) + (self.h[t + 1] - mu)) / (1.0 + phi * phi);
                (m, inner_prec, inner_sd)
            } else {
                (mu + phi * (self.h[t - 1] - mu), 1.0 / s2, sigma_eta)
            };
            let log_target = |h: f64| -0.5 * h - 0.5 * y2 * (-h).exp() - 0.5 * prec * (h - mean).powi(2);
            let current = self.h[t];
            let z: f64 = rng.sample(StandardNormal);
            let proposal = current + self.h_step * scale * z;
            let log_ratio = log_target(proposal) - log_target(current);
            let u: f64 = rng.random();
            if u.ln() < log_ratio {
                self.h[t] = proposal;
                accepted += 1;
            }
        }
        // h_0 | h_1 is Gaussian: N(mu + phi (h_1 - mu), sigma^2).
        let z: f64 = rng.sample(StandardNormal);
        self.h[0] = mu + phi * (self.h[1] - mu) + sigma_eta * z;
        (t_last as u64, accepted)
    }

    fn update_sigma(&mut self, rng: &mut ChaCha8Rng) {
        let SvParams { mu, phi, sigma_eta } = self.params;
        let h = &self.h;
        let t_len = (h.len() - 1) as f64;
        let mut ss = (1.0 - phi * phi) * (h[0] - mu).powi(2);
        for t in 1..h.len() {
            ss += (h[t] - mu - phi * (h[t - 1] - mu)).powi(2);
        }
        // Likelihood kernel in sigma^2 is inverse-gamma((T-1)/2, ss/2);
        // propose from it and correct for the gamma prior.
        let shape = 0.5 * (t_len - 1.0);
        let gamma = Gamma::new(shape, 2.0 / ss).expect("positive gamma parameters");
        let proposal = 1.0 / gamma.sample(rng);
        let current = sigma_eta * sigma_eta;
        let log_prior = |s2: f64| (self.priors.sigma2_shape - 1.0) * s2.ln() - self.priors.sigma2_rate * s2;
        let log_ratio = log_prior(proposal) - log_prior(current);
        self.moves.sigma_proposed += 1;
        let u: f64 = rng.random();
        if proposal.is_finite() && proposal > 0.0 && u.ln() < log_ratio {
            self.params.sigma_eta = proposal.sqrt();
            self.moves.sigma_accepted += 1;
        }
    }

    fn update_phi(&mut self, rng: &mut ChaCha8Rng) {
        let SvParams { mu, phi, sigma_eta } = self.params;
        let h = &self.h;
        let (mut sxx, mut sxz) = (0.0, 0.0);
        for t in 1..h.len() {
            let x = h[t - 1] - mu;
            sxx += x * x;
            sxz += x * (h[t] - mu);
        }
        self.moves.phi_proposed += 1;
        if sxx <= 0.0 {
            return;
        }
        let z: f64 = rng.sample(StandardNormal);
        let proposal = sxz / sxx + sigma_eta / sxx.sqrt() * z;
        if proposal.abs() >= 1.0 {
            return;
        }
        let s2 = sigma_eta * sigma_eta;
        let h0 = h[0] - mu;
        let (a, b) = (self.priors.phi_a, self.priors.phi_b);
        let log_rest = |p: f64| {
            (a - 1.0) * (1.0 + p).ln() + (b - 1.0) * (1.0 - p).ln() + 0.5 * (1.0 - p * p).ln()
                - 0.5 * (1.0 - p * p) * h0 * h0 / s2
        };
        let log_ratio = log_rest(proposal) - log_rest(phi);
        let u: f64 = rng.random();
        if u.ln() < log_ratio {
            self.params.phi = proposal;
            self.moves.phi_accepted += 1;
        }
    }

    fn update_mu(&mut self, rng: &mut ChaCha8Rng) {
        let SvParams { phi, sigma_eta, .. } = self.params;
        let s2 = sigma_eta * sigma_eta;
        let h = &self.h;
        let t_len = (h.len() - 1) as f64;
        let innovations: f64 = (1..h.len()).map(|t| h[t] - phi * h[t - 1]).sum();
        let prec = 1.0 / self.priors.mu_var
            + ((1.0 - phi * phi) + t_len * (1.0 - phi).powi(2)) / s2;
        let weighted = self.priors.mu_mean / self.priors.mu_var
            + ((1.0 - phi * phi) * h[0] + (1.0 - phi) * innovations) / s2;
        let z: f64 = rng.sample(StandardNormal);
        self.params.mu = weighted / prec + z / prec.sqrt();
    }
}

/// Runs the sampler on a return sequence. Deterministic for a fixed seed.
pub fn sample_posterior(returns: &[f64], config: &SamplerConfig, seed: u64) -> Result<SvPosterior> {
    config.validate()?;
    if returns.len() < MIN_RETURNS {
        return Err(Error::TooShort {
            needed: MIN_RETURNS,
            got: returns.len(),
        });
    }
    if let Some(r) = returns.iter().find(|r| !r.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite return {r}")));
    }
    if returns.iter().all(|&r| r == 0.0) {
        return Err(Error::Degenerate(
            "all returns are zero; the volatility likelihood is degenerate".into(),
        ));
    }

    let mut rng = rng_from(seed);
    let mut sampler = Sampler::new(returns, &config.priors);
    let n_retained = config.n_retained();
    let mut draws = Vec::with_capacity(n_retained);
    let mut h_paths = Vec::with_capacity(n_retained);
    let (mut window_prop, mut window_acc) = (0u64, 0u64);

    for iter in 0..config.n_iter {
        let (prop, acc) = sampler.update_states(&mut rng);
        sampler.moves.h_proposed += prop;
        sampler.moves.h_accepted += acc;
        sampler.update_sigma(&mut rng);
        sampler.update_phi(&mut rng);
        sampler.update_mu(&mut rng);

        if iter < config.n_burnin {
            window_prop += prop;
            window_acc += acc;
            if (iter + 1) % ADAPT_EVERY == 0 {
                let rate = window_acc as f64 / window_prop as f64;
                if rate < TARGET_ACCEPT.0 {
                    sampler.h_step *= 0.8;
                } else if rate > TARGET_ACCEPT.1 {
                    sampler.h_step *= 1.25;
                }
                window_prop = 0;
                window_acc = 0;
            }
        } else if (iter - config.n_burnin) % config.thin == 0 {
            debug_assert!(sampler.params.is_valid());
            draws.push(sampler.params);
            h_paths.push(sampler.h.clone());
        }
    }

    Ok(SvPosterior {
        n_retained: draws.len(),
        draws,
        h_paths,
        n_burnin: config.n_burnin,
        moves: sampler.moves,
        h_step: sampler.h_step,
    })
}

/// Linear-interpolation quantile of an ascending sample.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Simulates `h_{T+1}` once per retained draw and summarises the
/// distribution of `sqrt(exp(h_{T+1}))`.
pub fn forecast_one_step(
    posterior: &SvPosterior,
    date: NaiveDate,
    quantiles: &[f64],
    seed: u64,
) -> Result<SvForecast> {
    if posterior.is_empty() {
        return Err(Error::InvalidArgument("empty posterior".into()));
    }
    if let Some(p) = quantiles.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("quantile level {p} outside [0, 1]")));
    }
    let mut rng = rng_from(seed);
    let mut vols: Vec<f64> = posterior
        .draws
        .iter()
        .zip(&posterior.h_paths)
        .map(|(p, path)| {
            let h_last = *path.last().expect("non-empty path");
            let z: f64 = rng.sample(StandardNormal);
            let h_next = p.mu + p.phi * (h_last - p.mu) + p.sigma_eta * z;
            (0.5 * h_next).exp()
        })
        .collect();
    vols.sort_by(f64::total_cmp);
    let mut levels = quantiles.to_vec();
    levels.sort_by(f64::total_cmp);
    Ok(SvForecast {
        date,
        median_vol: median_of_sorted(&vols),
        quantiles: levels.into_iter().map(|p| (p, quantile_sorted(&vols, p))).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RollingSvConfig {
    pub train_len: usize,
    pub sampler: SamplerConfig,
    pub quantiles: Vec<f64>,
}

impl Default for RollingSvConfig {
    fn default() -> Self {
        Self {
            train_len: 504,
            sampler: SamplerConfig::default(),
            quantiles: vec![0.05, 0.5, 0.95],
        }
    }
}

/// One forecast per step: the forecast dated `dates[train_len + k]` is fitted
/// on `returns[k .. train_len + k]` only.
pub fn rolling_sv_forecast(
    returns: &ReturnSeries,
    config: &RollingSvConfig,
    seed: u64,
) -> Result<Vec<SvForecast>> {
    let n = returns.len();
    if config.train_len < MIN_RETURNS {
        return Err(Error::InvalidArgument(format!(
            "train_len must be at least {MIN_RETURNS}"
        )));
    }
    if n <= config.train_len {
        return Err(Error::TooShort {
            needed: config.train_len + 1,
            got: n,
        });
    }
    config.sampler.validate()?;
    (0..n - config.train_len)
        .into_par_iter()
        .map(|k| {
            let window = &returns.returns()[k..k + config.train_len];
            let fit_seed = derive_seed(seed, &[k as u64, 0]);
            let post = sample_posterior(window, &config.sampler, fit_seed)
                .map_err(|e| e.in_window(k))?;
            forecast_one_step(
                &post,
                returns.dates()[k + config.train_len],
                &config.quantiles,
                derive_seed(seed, &[k as u64, 1]),
            )
        })
        .collect()
}

/// Draws a return path from the model. Returns `(returns, h_0..h_T)`.
pub fn simulate(params: SvParams, t_len: usize, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let SvParams { mu, phi, sigma_eta } = params;
    let mut h = Vec::with_capacity(t_len + 1);
    let z: f64 = rng.sample(StandardNormal);
    h.push(mu + sigma_eta / (1.0 - phi * phi).sqrt() * z);
    let mut y = Vec::with_capacity(t_len);
    for t in 1..=t_len {
        let z: f64 = rng.sample(StandardNormal);
        h.push(mu + phi * (h[t - 1] - mu) + sigma_eta * z);
        let e: f64 = rng.sample(StandardNormal);
        y.push((0.5 * h[t]).exp() * e);
    }
    (y, h)
}
