//! Gamma-Poisson models for sentence lengths.
//!
//! Training: alpha ~ Exp(1), beta ~ Exp(10), lambda_i ~ Gamma(alpha, beta),
//! y_i ~ Poisson(lambda_i). Test groups: eta ~ Exp(1), s_g ~ Exp(eta),
//! lambda_gi ~ Gamma(s_g, 1/mu), y_gi ~ Poisson(lambda_gi), where mu is the
//! posterior expected training rate. Exp is rate-parameterised throughout.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::gamma::GammaParams;
use super::svi::{laplace, GammaSvi, Target};
use super::{fit_rng, BayesConfig};
use crate::error::{Error, Result};
use crate::stats::Group;

pub const MIN_TRAIN_LENGTHS: usize = 10;
const ALPHA_PRIOR_RATE: f64 = 1.0;
const BETA_PRIOR_RATE: f64 = 10.0;
const ETA_PRIOR_RATE: f64 = 1.0;

/// Distinct values with their multiplicities; datapoints with equal lengths
/// share the same optimal rate factor.
fn histogram(lengths: &[u64]) -> BTreeMap<u64, u64> {
    let mut h = BTreeMap::new();
    for &y in lengths {
        *h.entry(y).or_default() += 1;
    }
    h
}

fn poisson_term(y: u64, rate: &GammaParams) -> f64 {
    y as f64 * rate.mean_log() - rate.mean() - ln_gamma(y as f64 + 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthTrainPosterior {
    pub alpha: GammaParams,
    pub beta: GammaParams,
    /// q(lambda_i) keyed by observed length; identical for equal lengths.
    pub rates: BTreeMap<u64, GammaParams>,
    pub observed: Vec<u64>,
    /// E[alpha / beta] under the fitted factors.
    pub mu: f64,
    pub elbo_trace: Vec<f64>,
}

impl LengthTrainPosterior {
    pub fn rate_of(&self, index: usize) -> Option<GammaParams> {
        self.observed.get(index).map(|y| self.rates[y])
    }

    /// Average over datapoints of the posterior mean Poisson rate.
    pub fn mean_rate(&self) -> f64 {
        self.observed.iter().map(|y| self.rates[y].mean()).sum::<f64>() / self.observed.len() as f64
    }

    pub fn elbo(&self) -> f64 {
        train_elbo(&histogram(&self.observed), &self.alpha, &self.beta, &self.rates)
    }
}

/// Clamps the population parameters to point values instead of fitting them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPopulation {
    pub alpha: f64,
    pub beta: f64,
}

pub fn fit_length_train(lengths: &[u64], config: &BayesConfig) -> Result<LengthTrainPosterior> {
    fit_length_train_with(lengths, config, None)
}

pub fn fit_length_train_with(
    lengths: &[u64],
    config: &BayesConfig,
    fixed: Option<FixedPopulation>,
) -> Result<LengthTrainPosterior> {
    config.svi.validate()?;
    if lengths.is_empty() || (fixed.is_none() && lengths.len() < MIN_TRAIN_LENGTHS) {
        return Err(Error::invalid(format!(
            "fitting the length population needs at least {MIN_TRAIN_LENGTHS} observations, got {}",
            lengths.len()
        )));
    }
    let hist = histogram(lengths);
    let n = lengths.len() as f64;
    let rates_given = |alpha: &GammaParams, beta: &GammaParams| -> BTreeMap<u64, GammaParams> {
        hist.keys()
            .map(|&y| (y, GammaParams::new(alpha.mean() + y as f64, beta.mean() + 1.0).expect("positive")))
            .collect()
    };

    if let Some(FixedPopulation { alpha, beta }) = fixed {
        // Point masses represented as extremely concentrated factors.
        let alpha = GammaParams::new(alpha * 1e12, 1e12)?;
        let beta = GammaParams::new(beta * 1e12, 1e12)?;
        let rates = rates_given(&alpha, &beta);
        let mu = alpha.mean() / beta.mean();
        return Ok(LengthTrainPosterior {
            alpha,
            beta,
            rates,
            observed: lengths.to_vec(),
            mu,
            elbo_trace: Vec::new(),
        });
    }

    let beta_given = |alpha: &GammaParams, rates: &BTreeMap<u64, GammaParams>| {
        let sum_rates: f64 = hist.iter().map(|(y, c)| *c as f64 * rates[y].mean()).sum();
        GammaParams::new(n * alpha.mean() + 1.0, BETA_PRIOR_RATE + sum_rates).expect("positive")
    };
    let alpha_lin = |beta: &GammaParams, rates: &BTreeMap<u64, GammaParams>| {
        let sum_log: f64 = hist.iter().map(|(y, c)| *c as f64 * rates[y].mean_log()).sum();
        [0.0, -ALPHA_PRIOR_RATE + n * beta.mean_log() + sum_log]
    };
    let alpha_nl = move |x: f64| -n * ln_gamma(x);

    let mut alpha = GammaParams::new(1.0, 1.0)?;
    let mut rates: BTreeMap<u64, GammaParams> = hist
        .keys()
        .map(|&y| (y, GammaParams::new(y as f64 + 1.0, 1.0).expect("positive")))
        .collect();
    let mut beta = beta_given(&alpha, &rates);
    for _ in 0..config.svi.init_rounds {
        if let Some(q) = laplace(&Target {
            lin: alpha_lin(&beta, &rates),
            nonlinear: &alpha_nl,
        }) {
            alpha = q;
        }
        rates = rates_given(&alpha, &beta);
        beta = beta_given(&alpha, &rates);
    }

    let mut rng = fit_rng(config.seed, "length-train");
    let mut svi = GammaSvi::new(alpha);
    let mut trace = Vec::new();
    for t in 0..config.svi.steps {
        let target = Target {
            lin: alpha_lin(&beta, &rates),
            nonlinear: &alpha_nl,
        };
        svi.step(&target, config.svi.samples_per_step, config.svi.rho(t), &mut rng);
        alpha = svi.q();
        rates = rates_given(&alpha, &beta);
        beta = beta_given(&alpha, &rates);
        if config.svi.records(t) {
            trace.push(train_elbo(&hist, &alpha, &beta, &rates));
        }
    }
    let mu = alpha.mean() * beta.mean_inverse();
    Ok(LengthTrainPosterior {
        alpha,
        beta,
        rates,
        observed: lengths.to_vec(),
        mu,
        elbo_trace: trace,
    })
}

fn train_elbo(
    hist: &BTreeMap<u64, u64>,
    alpha: &GammaParams,
    beta: &GammaParams,
    rates: &BTreeMap<u64, GammaParams>,
) -> f64 {
    let n: f64 = hist.values().sum::<u64>() as f64;
    let mut elbo = alpha.cross_entropy_term(&GammaParams::exponential(ALPHA_PRIOR_RATE).expect("const"))
        + beta.cross_entropy_term(&GammaParams::exponential(BETA_PRIOR_RATE).expect("const"))
        + alpha.entropy()
        + beta.entropy();
    elbo += n * (alpha.mean() * beta.mean_log() - alpha.expect(ln_gamma));
    for (&y, &c) in hist {
        let q = &rates[&y];
        let gamma_term = (alpha.mean() - 1.0) * q.mean_log() - beta.mean() * q.mean();
        elbo += c as f64 * (gamma_term + poisson_term(y, q) + q.entropy());
    }
    elbo
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupLengthPosterior {
    /// q(s_g).
    pub scale: GammaParams,
    pub rates: BTreeMap<u64, GammaParams>,
    pub observed: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthTestPosterior {
    pub eta: GammaParams,
    pub mu: f64,
    /// Frozen group rate t_g = 1 / mu.
    pub rate: f64,
    pub groups: BTreeMap<Group, GroupLengthPosterior>,
    pub elbo_trace: Vec<f64>,
}

impl LengthTestPosterior {
    /// E[s_g] * mu, the group's posterior mean Poisson rate.
    pub fn group_mean_rate(&self, group: Group) -> Option<f64> {
        self.groups.get(&group).map(|g| g.scale.mean() * self.mu)
    }

    pub fn elbo(&self) -> f64 {
        let hists: BTreeMap<Group, _> = self.groups.iter().map(|(g, p)| (*g, histogram(&p.observed))).collect();
        test_elbo(&hists, self.rate, &self.eta, &self.groups)
    }
}

pub fn fit_length_test(
    train: &LengthTrainPosterior,
    groups: &BTreeMap<Group, Vec<u64>>,
    config: &BayesConfig,
) -> Result<LengthTestPosterior> {
    config.svi.validate()?;
    if groups.is_empty() {
        return Err(Error::invalid("no test groups given"));
    }
    for (g, ys) in groups {
        if *g == Group::Training {
            return Err(Error::invalid("the training group is not a test group"));
        }
        if ys.is_empty() {
            return Err(Error::invalid(format!("test group {g} has no observations")));
        }
    }
    if !(train.mu.is_finite() && train.mu > 0.0) {
        return Err(Error::invalid(format!("training posterior has invalid mean rate {}", train.mu)));
    }
    let t = 1.0 / train.mu;
    let hists: BTreeMap<Group, BTreeMap<u64, u64>> = groups.iter().map(|(g, ys)| (*g, histogram(ys))).collect();
    let n_groups = groups.len() as f64;

    let rates_given = |hist: &BTreeMap<u64, u64>, scale: &GammaParams| -> BTreeMap<u64, GammaParams> {
        hist.keys()
            .map(|&y| (y, GammaParams::new(scale.mean() + y as f64, t + 1.0).expect("positive")))
            .collect()
    };
    let eta_given = |posts: &BTreeMap<Group, GroupLengthPosterior>| {
        let sum: f64 = posts.values().map(|p| p.scale.mean()).sum();
        GammaParams::new(1.0 + n_groups, ETA_PRIOR_RATE + sum).expect("positive")
    };
    let scale_lin = |eta: &GammaParams, hist: &BTreeMap<u64, u64>, rates: &BTreeMap<u64, GammaParams>| {
        let n: f64 = hist.values().sum::<u64>() as f64;
        let sum_log: f64 = hist.iter().map(|(y, c)| *c as f64 * rates[y].mean_log()).sum();
        [0.0, -eta.mean() + n * t.ln() + sum_log]
    };
    let nls: BTreeMap<Group, f64> = hists.iter().map(|(g, h)| (*g, h.values().sum::<u64>() as f64)).collect();

    let mut posts: BTreeMap<Group, GroupLengthPosterior> = groups
        .iter()
        .map(|(g, ys)| {
            let scale = GammaParams::new(1.0, 1.0).expect("const");
            let rates = rates_given(&hists[g], &scale);
            (*g, GroupLengthPosterior { scale, rates, observed: ys.clone() })
        })
        .collect();
    let mut eta = eta_given(&posts);
    for _ in 0..config.svi.init_rounds {
        for (g, p) in posts.iter_mut() {
            let n = nls[g];
            let nl = move |x: f64| -n * ln_gamma(x);
            if let Some(q) = laplace(&Target {
                lin: scale_lin(&eta, &hists[g], &p.rates),
                nonlinear: &nl,
            }) {
                p.scale = q;
            }
            p.rates = rates_given(&hists[g], &p.scale);
        }
        eta = eta_given(&posts);
    }

    let mut rng = fit_rng(config.seed, "length-test");
    let mut svis: BTreeMap<Group, GammaSvi> = posts.iter().map(|(g, p)| (*g, GammaSvi::new(p.scale))).collect();
    let mut trace = Vec::new();
    for step in 0..config.svi.steps {
        for (g, p) in posts.iter_mut() {
            let n = nls[g];
            let nl = move |x: f64| -n * ln_gamma(x);
            let target = Target {
                lin: scale_lin(&eta, &hists[g], &p.rates),
                nonlinear: &nl,
            };
            let svi = svis.get_mut(g).expect("same keys");
            svi.step(&target, config.svi.samples_per_step, config.svi.rho(step), &mut rng);
            p.scale = svi.q();
            p.rates = rates_given(&hists[g], &p.scale);
        }
        eta = eta_given(&posts);
        if config.svi.records(step) {
            trace.push(test_elbo(&hists, t, &eta, &posts));
        }
    }
    Ok(LengthTestPosterior {
        eta,
        mu: train.mu,
        rate: t,
        groups: posts,
        elbo_trace: trace,
    })
}

fn test_elbo(
    hists: &BTreeMap<Group, BTreeMap<u64, u64>>,
    t: f64,
    eta: &GammaParams,
    posts: &BTreeMap<Group, GroupLengthPosterior>,
) -> f64 {
    let mut elbo = eta.cross_entropy_term(&GammaParams::exponential(ETA_PRIOR_RATE).expect("const")) + eta.entropy();
    for (g, p) in posts {
        let s = &p.scale;
        // ln p(s | eta) = ln eta - eta s
        elbo += eta.mean_log() - eta.mean() * s.mean() + s.entropy();
        let n: f64 = hists[g].values().sum::<u64>() as f64;
        elbo += n * (s.mean() * t.ln() - s.expect(ln_gamma));
        for (&y, &c) in &hists[g] {
            let q = &p.rates[&y];
            let gamma_term = (s.mean() - 1.0) * q.mean_log() - t * q.mean();
            elbo += c as f64 * (gamma_term + poisson_term(y, q) + q.entropy());
        }
    }
    elbo
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub moment: String,
    pub observed: f64,
    pub lower: f64,
    pub upper: f64,
    pub inside: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthCheckReport {
    pub datasets: usize,
    pub observations: usize,
    pub moments: Vec<MomentCheck>,
}

impl LengthCheckReport {
    pub fn all_inside(&self) -> bool {
        self.moments.iter().all(|m| m.inside)
    }
}

/// Mean, variance, skewness and excess kurtosis. Higher moments of a
/// constant sample are reported as zero.
pub fn moments(xs: &[f64]) -> [f64; 4] {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    if m2 <= 0.0 {
        return [mean, 0.0, 0.0, 0.0];
    }
    [mean, m2, m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0]
}

const MOMENT_NAMES: [&str; 4] = ["mean", "variance", "skewness", "kurtosis"];

/// Posterior predictive check of the training model. Each replicate dataset
/// draws (alpha, beta) from the posterior and fresh per-datapoint rates.
pub fn predictive_check_length(
    posterior: &LengthTrainPosterior,
    observed: &[u64],
    datasets: usize,
    seed: u64,
) -> Result<LengthCheckReport> {
    predictive_check(observed, datasets, seed, |rng| (posterior.alpha.sample(rng), posterior.beta.sample(rng)))
}

/// Posterior predictive check of one test group: s_g from its posterior,
/// rates from Gamma(s_g, 1/mu).
pub fn predictive_check_length_group(
    posterior: &LengthTestPosterior,
    group: Group,
    observed: &[u64],
    datasets: usize,
    seed: u64,
) -> Result<LengthCheckReport> {
    let g = posterior
        .groups
        .get(&group)
        .ok_or_else(|| Error::invalid(format!("no posterior for group {group}")))?;
    predictive_check(observed, datasets, seed, |rng| (g.scale.sample(rng), posterior.rate))
}

fn predictive_check<F>(observed: &[u64], datasets: usize, seed: u64, mut population: F) -> Result<LengthCheckReport>
where
    F: FnMut(&mut ChaCha8Rng) -> (f64, f64),
{
    if observed.is_empty() {
        return Err(Error::invalid("predictive check needs observations"));
    }
    if datasets < 2 {
        return Err(Error::invalid("predictive check needs at least 2 replicate datasets"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs: Vec<f64> = observed.iter().map(|&y| y as f64).collect();
    let observed_moments = moments(&obs);
    let mut replicated: [Vec<f64>; 4] = Default::default();
    let mut ys = vec![0.0; obs.len()];
    for _ in 0..datasets {
        let (shape, rate) = population(&mut rng);
        let prior = GammaParams::new(shape, rate)?;
        for y in ys.iter_mut() {
            let lambda = prior.sample(&mut rng);
            *y = Poisson::new(lambda).map(|p| p.sample(&mut rng)).unwrap_or(0.0);
        }
        for (k, m) in moments(&ys).into_iter().enumerate() {
            replicated[k].push(m);
        }
    }
    let moments = (0..4)
        .map(|k| {
            let v = &mut replicated[k];
            v.sort_by(f64::total_cmp);
            let lower = quantile(v, 0.05);
            let upper = quantile(v, 0.95);
            let o = observed_moments[k];
            MomentCheck {
                moment: MOMENT_NAMES[k].to_string(),
                observed: o,
                lower,
                upper,
                inside: lower <= o && o <= upper,
            }
        })
        .collect();
    Ok(LengthCheckReport {
        datasets,
        observations: observed.len(),
        moments,
    })
}

/// Linear-interpolated quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}
