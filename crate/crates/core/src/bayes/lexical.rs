//! Dirichlet-Multinomial models for unigram and (skip-)bigram counts.
//!
//! Training: alpha ~ Gamma(1, 1), theta ~ Dir(alpha 1), u ~ Multi(theta); one
//! bigram row per first token with psi_u ~ Dir(beta 1) and a shared
//! beta ~ Gamma(1, 1). Test groups scale the normalised expected posterior
//! concentrations: theta_g ~ Dir(s_g mu(alpha)), psi_g ~ Dir(m_g mu(beta)),
//! with s_g ~ Gamma(1, eta_s), m_g ~ Gamma(1, eta_m) and
//! eta_s, eta_m ~ Gamma(1, 0.2). Dirichlets are integrated out.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::gamma::GammaParams;
use super::svi::{laplace, GammaSvi, Target};
use super::{fit_rng, BayesConfig};
use crate::error::{Error, Result};
use crate::seqmodel::TokenId;
use crate::stats::{Group, GroupStatistics};

const CONCENTRATION_PRIOR: GammaParams = GammaParams { shape: 1.0, rate: 1.0 };
const AGREEMENT_HYPER_PRIOR: GammaParams = GammaParams { shape: 1.0, rate: 0.2 };

/// Exact collapsed Dirichlet-Multinomial log-probability of `counts`,
/// including the multinomial coefficient.
pub fn dirmult_log_marginal(counts: &[u64], concentration: &[f64]) -> Result<f64> {
    if counts.len() != concentration.len() {
        return Err(Error::invalid("counts and concentration differ in length"));
    }
    if let Some(a) = concentration.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Error::invalid(format!("concentration must be positive and finite, got {a}")));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = concentration.iter().sum();
    let mut lp = ln_gamma(n as f64 + 1.0) + ln_gamma(total) - ln_gamma(total + n as f64);
    for (&c, &a) in counts.iter().zip(concentration) {
        if c > 0 {
            lp += ln_gamma(a + c as f64) - ln_gamma(a) - ln_gamma(c as f64 + 1.0);
        }
    }
    Ok(lp)
}

/// ln Γ(z + c) - ln Γ(z) for a non-negative integer count c.
fn ln_rising(z: f64, c: u64) -> f64 {
    match c {
        0 => 0.0,
        1..=8 => {
            let mut p = z;
            for k in 1..c {
                p *= z + k as f64;
            }
            p.ln()
        }
        _ => ln_gamma(z + c as f64) - ln_gamma(z),
    }
}

/// Collapsed log-likelihood, as a function of a scalar multiplier x, of
/// several Dirichlet-Multinomial rows whose concentrations are x times fixed
/// weights. Terms with equal weights and counts are merged.
#[derive(Clone, Debug, Default)]
struct Collapsed {
    /// (weight sum of the row, row total, multiplicity)
    rows: Vec<(f64, u64, u64)>,
    /// (cell weight, cell count, multiplicity); only positive counts.
    cells: Vec<(f64, u64, u64)>,
    /// Multinomial coefficients, independent of x.
    constant: f64,
}

impl Collapsed {
    fn build(rows: impl IntoIterator<Item = (f64, Vec<(f64, u64)>)>) -> Self {
        let mut row_map: HashMap<(u64, u64), u64> = HashMap::new();
        let mut cell_map: HashMap<(u64, u64), u64> = HashMap::new();
        let mut constant = 0.0;
        for (weight_sum, cells) in rows {
            let n: u64 = cells.iter().map(|c| c.1).sum();
            if n == 0 {
                continue;
            }
            constant += ln_gamma(n as f64 + 1.0);
            *row_map.entry((weight_sum.to_bits(), n)).or_default() += 1;
            for (w, c) in cells {
                if c > 0 {
                    constant -= ln_gamma(c as f64 + 1.0);
                    *cell_map.entry((w.to_bits(), c)).or_default() += 1;
                }
            }
        }
        let mut rows: Vec<_> = row_map.into_iter().map(|((w, n), m)| (f64::from_bits(w), n, m)).collect();
        let mut cells: Vec<_> = cell_map.into_iter().map(|((w, c), m)| (f64::from_bits(w), c, m)).collect();
        // fixed order keeps floating-point sums reproducible
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Self { rows, cells, constant }
    }

    /// Log-likelihood without the multinomial coefficients.
    fn eval(&self, x: f64) -> f64 {
        let mut ll = 0.0;
        for &(w, n, m) in &self.rows {
            ll -= m as f64 * ln_rising(x * w, n);
        }
        for &(w, c, m) in &self.cells {
            ll += m as f64 * ln_rising(x * w, c);
        }
        ll
    }

    fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairKind {
    Bigram,
    SkipBigram,
}

/// Unigram and pair counts over a fixed sorted vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LexicalCounts {
    pub vocabulary: Vec<TokenId>,
    pub unigrams: Vec<u64>,
    /// One row per first token: (second token index, count), sorted.
    pub pairs: Vec<Vec<(usize, u64)>>,
}

impl LexicalCounts {
    /// Counts over the given vocabulary; errors if a token falls outside it.
    pub fn new(
        vocabulary: &[TokenId],
        unigrams: &BTreeMap<TokenId, u64>,
        pairs: &BTreeMap<(TokenId, TokenId), u64>,
    ) -> Result<Self> {
        let mut vocabulary = vocabulary.to_vec();
        vocabulary.sort_unstable();
        vocabulary.dedup();
        let index: HashMap<TokenId, usize> = vocabulary.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let lookup = |t: TokenId| {
            index
                .get(&t)
                .copied()
                .ok_or_else(|| Error::invalid(format!("token id {t} is outside the training vocabulary")))
        };
        let mut uni = vec![0; vocabulary.len()];
        for (&t, &c) in unigrams {
            uni[lookup(t)?] += c;
        }
        let mut rows = vec![Vec::new(); vocabulary.len()];
        for (&(a, b), &c) in pairs {
            if c > 0 {
                rows[lookup(a)?].push((lookup(b)?, c));
            }
        }
        for row in &mut rows {
            row.sort_unstable();
        }
        Ok(Self {
            vocabulary,
            unigrams: uni,
            pairs: rows,
        })
    }

    /// Counts over the group's own observed tokens.
    pub fn from_statistics(stats: &GroupStatistics, kind: PairKind) -> Self {
        let vocab: Vec<TokenId> = stats.unigrams.keys().copied().collect();
        Self::with_vocabulary(stats, kind, &vocab).expect("pairs only contain observed tokens")
    }

    pub fn with_vocabulary(stats: &GroupStatistics, kind: PairKind, vocabulary: &[TokenId]) -> Result<Self> {
        let pairs = match kind {
            PairKind::Bigram => &stats.bigrams,
            PairKind::SkipBigram => &stats.skip_bigrams,
        };
        Self::new(vocabulary, &stats.unigrams, pairs)
    }

    /// The same counts over another vocabulary.
    pub fn reindexed(&self, vocabulary: &[TokenId]) -> Result<Self> {
        let unigrams: BTreeMap<TokenId, u64> = self
            .vocabulary
            .iter()
            .zip(&self.unigrams)
            .filter(|(_, &c)| c > 0)
            .map(|(&t, &c)| (t, c))
            .collect();
        let mut pairs = BTreeMap::new();
        for (r, row) in self.pairs.iter().enumerate() {
            for &(v, c) in row {
                pairs.insert((self.vocabulary[r], self.vocabulary[v]), c);
            }
        }
        Self::new(vocabulary, &unigrams, &pairs)
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    pub fn unigram_total(&self) -> u64 {
        self.unigrams.iter().sum()
    }

    pub fn row_total(&self, row: usize) -> u64 {
        self.pairs[row].iter().map(|c| c.1).sum()
    }

    fn dense_row(&self, row: usize) -> Vec<u64> {
        let mut dense = vec![0; self.len()];
        for &(v, c) in &self.pairs[row] {
            dense[v] = c;
        }
        dense
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LexicalTrainPosterior {
    pub alpha: GammaParams,
    pub beta: GammaParams,
    pub counts: LexicalCounts,
    pub elbo_trace: Vec<f64>,
}

impl LexicalTrainPosterior {
    /// mu(alpha): expected posterior unigram concentration, normalised.
    pub fn unigram_concentration(&self) -> Vec<f64> {
        normalised_concentration(self.alpha.mean(), &self.counts.unigrams)
    }

    /// mu(beta) for one row (first token index).
    pub fn pair_concentration(&self, row: usize) -> Vec<f64> {
        normalised_concentration(self.beta.mean(), &self.counts.dense_row(row))
    }

    pub fn elbo(&self) -> f64 {
        let (uni, pair) = train_terms(&self.counts);
        factor_elbo(&self.alpha, &CONCENTRATION_PRIOR, &uni) + factor_elbo(&self.beta, &CONCENTRATION_PRIOR, &pair)
    }
}

fn normalised_concentration(prior: f64, counts: &[u64]) -> Vec<f64> {
    let total = prior * counts.len() as f64 + counts.iter().sum::<u64>() as f64;
    counts.iter().map(|&c| (prior + c as f64) / total).collect()
}

fn train_terms(counts: &LexicalCounts) -> (Collapsed, Collapsed) {
    let v = counts.len() as f64;
    let uni = Collapsed::build([(v, counts.unigrams.iter().map(|&c| (1.0, c)).collect())]);
    let pair = Collapsed::build(
        counts
            .pairs
            .iter()
            .map(|row| (v, row.iter().map(|&(_, c)| (1.0, c)).collect())),
    );
    (uni, pair)
}

/// ELBO contribution of one scalar with a fixed Gamma prior and a collapsed
/// likelihood; the likelihood expectation is by quadrature.
fn factor_elbo(q: &GammaParams, prior: &GammaParams, lik: &Collapsed) -> f64 {
    let expected = if lik.is_empty() { 0.0 } else { q.expect(|x| lik.eval(x)) };
    q.cross_entropy_term(prior) + q.entropy() + expected + lik.constant
}

fn fit_fixed_prior(
    lik: &Collapsed,
    prior: &GammaParams,
    config: &BayesConfig,
    label: &str,
    trace: &mut Vec<f64>,
    trace_offset: &dyn Fn(usize) -> f64,
) -> GammaParams {
    let nonlinear = |x: f64| lik.eval(x);
    let target = Target {
        lin: [prior.shape - 1.0, -prior.rate],
        nonlinear: &nonlinear,
    };
    let mut svi = GammaSvi::new(laplace(&target).unwrap_or(*prior));
    let mut rng = fit_rng(config.seed, label);
    for t in 0..config.svi.steps {
        svi.step(&target, config.svi.samples_per_step, config.svi.rho(t), &mut rng);
        if config.svi.records(t) {
            trace.push(factor_elbo(&svi.q(), prior, lik) + trace_offset(trace.len()));
        }
    }
    svi.q()
}

pub fn fit_lexical_train(counts: &LexicalCounts, config: &BayesConfig) -> Result<LexicalTrainPosterior> {
    config.svi.validate()?;
    if counts.unigram_total() == 0 {
        return Err(Error::invalid("lexical model needs at least one token"));
    }
    let (uni, pair) = train_terms(counts);
    let mut alpha_trace = Vec::new();
    let alpha = fit_fixed_prior(&uni, &CONCENTRATION_PRIOR, config, "lexical-alpha", &mut alpha_trace, &|_| 0.0);
    // The joint ELBO is the sum of the two independent parts.
    let mut trace = Vec::new();
    let beta = fit_fixed_prior(&pair, &CONCENTRATION_PRIOR, config, "lexical-beta", &mut trace, &|i| alpha_trace[i]);
    Ok(LexicalTrainPosterior {
        alpha,
        beta,
        counts: counts.clone(),
        elbo_trace: trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupLexicalPosterior {
    /// q(s_g), unigram agreement.
    pub unigram_scale: GammaParams,
    /// q(m_g), pair agreement.
    pub pair_scale: GammaParams,
    /// Group counts over the training vocabulary.
    pub counts: LexicalCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LexicalTestPosterior {
    pub eta_unigram: GammaParams,
    pub eta_pair: GammaParams,
    pub groups: BTreeMap<Group, GroupLexicalPosterior>,
    pub elbo_trace: Vec<f64>,
}

fn test_terms(train: &LexicalTrainPosterior, counts: &LexicalCounts) -> (Collapsed, Collapsed) {
    let mu = train.unigram_concentration();
    let uni = Collapsed::build([(1.0, counts.unigrams.iter().zip(&mu).map(|(&c, &w)| (w, c)).collect())]);
    let beta = train.beta.mean();
    let v = train.counts.len() as f64;
    let pair = Collapsed::build(counts.pairs.iter().enumerate().map(|(r, row)| {
        let train_row = train.counts.dense_row(r);
        let total = beta * v + train_row.iter().sum::<u64>() as f64;
        (1.0, row.iter().map(|&(j, c)| ((beta + train_row[j] as f64) / total, c)).collect())
    }));
    (uni, pair)
}

pub fn fit_lexical_test(
    train: &LexicalTrainPosterior,
    groups: &BTreeMap<Group, LexicalCounts>,
    config: &BayesConfig,
) -> Result<LexicalTestPosterior> {
    config.svi.validate()?;
    if groups.is_empty() {
        return Err(Error::invalid("no test groups given"));
    }
    let mut terms = BTreeMap::new();
    let mut reindexed = BTreeMap::new();
    for (g, counts) in groups {
        if *g == Group::Training {
            return Err(Error::invalid("the training group is not a test group"));
        }
        let counts = counts
            .reindexed(&train.counts.vocabulary)
            .map_err(|e| Error::invalid(format!("group {g}: {e}")))?;
        terms.insert(*g, test_terms(train, &counts));
        reindexed.insert(*g, counts);
    }
    let n_groups = groups.len() as f64;
    let hyper = |scales: &mut dyn Iterator<Item = f64>| {
        GammaParams::new(AGREEMENT_HYPER_PRIOR.shape + n_groups, AGREEMENT_HYPER_PRIOR.rate + scales.sum::<f64>())
            .expect("positive")
    };

    let initial = GammaParams::new(1.0, 1.0).expect("const");
    let mut s: BTreeMap<Group, GammaParams> = groups.keys().map(|g| (*g, initial)).collect();
    let mut m = s.clone();
    let mut eta_s = hyper(&mut s.values().map(|q| q.mean()));
    let mut eta_m = hyper(&mut m.values().map(|q| q.mean()));
    for _ in 0..config.svi.init_rounds {
        for (g, (uni, pair)) in &terms {
            let nu = |x: f64| uni.eval(x);
            let np = |x: f64| pair.eval(x);
            if let Some(q) = laplace(&Target { lin: [0.0, -eta_s.mean()], nonlinear: &nu }) {
                s.insert(*g, q);
            }
            if let Some(q) = laplace(&Target { lin: [0.0, -eta_m.mean()], nonlinear: &np }) {
                m.insert(*g, q);
            }
        }
        eta_s = hyper(&mut s.values().map(|q| q.mean()));
        eta_m = hyper(&mut m.values().map(|q| q.mean()));
    }

    let mut rng = fit_rng(config.seed, "lexical-test");
    let mut s_svi: BTreeMap<Group, GammaSvi> = s.iter().map(|(g, q)| (*g, GammaSvi::new(*q))).collect();
    let mut m_svi: BTreeMap<Group, GammaSvi> = m.iter().map(|(g, q)| (*g, GammaSvi::new(*q))).collect();
    let mut trace = Vec::new();
    for t in 0..config.svi.steps {
        let rho = config.svi.rho(t);
        for (g, (uni, pair)) in &terms {
            let nu = |x: f64| uni.eval(x);
            let np = |x: f64| pair.eval(x);
            let su = s_svi.get_mut(g).expect("same keys");
            su.step(&Target { lin: [0.0, -eta_s.mean()], nonlinear: &nu }, config.svi.samples_per_step, rho, &mut rng);
            s.insert(*g, su.q());
            let mp = m_svi.get_mut(g).expect("same keys");
            mp.step(&Target { lin: [0.0, -eta_m.mean()], nonlinear: &np }, config.svi.samples_per_step, rho, &mut rng);
            m.insert(*g, mp.q());
        }
        eta_s = hyper(&mut s.values().map(|q| q.mean()));
        eta_m = hyper(&mut m.values().map(|q| q.mean()));
        if config.svi.records(t) {
            trace.push(test_elbo(&terms, &s, &m, &eta_s, &eta_m));
        }
    }
    let groups = reindexed
        .into_iter()
        .map(|(g, counts)| {
            (
                g,
                GroupLexicalPosterior {
                    unigram_scale: s[&g],
                    pair_scale: m[&g],
                    counts,
                },
            )
        })
        .collect();
    Ok(LexicalTestPosterior {
        eta_unigram: eta_s,
        eta_pair: eta_m,
        groups,
        elbo_trace: trace,
    })
}

fn test_elbo(
    terms: &BTreeMap<Group, (Collapsed, Collapsed)>,
    s: &BTreeMap<Group, GammaParams>,
    m: &BTreeMap<Group, GammaParams>,
    eta_s: &GammaParams,
    eta_m: &GammaParams,
) -> f64 {
    let mut elbo = 0.0;
    for (eta, scales, pick) in [(eta_s, s, 0), (eta_m, m, 1)] {
        elbo += eta.cross_entropy_term(&AGREEMENT_HYPER_PRIOR) + eta.entropy();
        for (g, q) in scales {
            let lik = if pick == 0 { &terms[g].0 } else { &terms[g].1 };
            // ln p(x | eta) = ln eta - eta x for a Gamma(1, eta) prior
            elbo += eta.mean_log() - eta.mean() * q.mean() + q.entropy() + lik.constant;
            if !lik.is_empty() {
                elbo += q.expect(|x| lik.eval(x));
            }
        }
    }
    elbo
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyCheck {
    pub cells: usize,
    /// Mean over draws of the mean absolute difference between predictive
    /// and observed relative frequencies.
    pub mean_abs_error: f64,
    /// Spearman correlation between predictive mean and observed
    /// frequencies; absent when undefined.
    pub rank_correlation: Option<f64>,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LexicalCheckReport {
    pub draws: usize,
    pub unigram: FrequencyCheck,
    pub pair: FrequencyCheck,
}

/// Posterior predictive check of the training model against `observed`,
/// which must lie within the training vocabulary. Each draw takes the
/// concentration scalar from its posterior and the multinomial parameters
/// from the Dirichlet posterior given the training counts.
pub fn predictive_check_lexical(
    posterior: &LexicalTrainPosterior,
    observed: &LexicalCounts,
    draws: usize,
    seed: u64,
) -> Result<LexicalCheckReport> {
    let observed = observed.reindexed(&posterior.counts.vocabulary)?;
    let train = &posterior.counts;
    let v = train.len();
    predictive_check(&observed, draws, seed, |rng, kind| match kind {
        None => {
            let a = posterior.alpha.sample(rng);
            let conc: Vec<f64> = train.unigrams.iter().map(|&c| a + c as f64).collect();
            dirichlet(&conc, rng)
        }
        Some(row) => {
            let b = posterior.beta.sample(rng);
            let mut conc = vec![b; v];
            for &(j, c) in &train.pairs[row] {
                conc[j] += c as f64;
            }
            dirichlet(&conc, rng)
        }
    })
}

/// Posterior predictive check of one test group against its own counts.
pub fn predictive_check_lexical_group(
    train: &LexicalTrainPosterior,
    posterior: &LexicalTestPosterior,
    group: Group,
    draws: usize,
    seed: u64,
) -> Result<LexicalCheckReport> {
    let g = posterior
        .groups
        .get(&group)
        .ok_or_else(|| Error::invalid(format!("no posterior for group {group}")))?;
    let mu = train.unigram_concentration();
    let rows: Vec<Vec<f64>> = (0..train.counts.len()).map(|r| train.pair_concentration(r)).collect();
    predictive_check(&g.counts, draws, seed, |rng, kind| {
        let (scale, base, counts) = match kind {
            None => (g.unigram_scale.sample(rng), &mu, g.counts.unigrams.clone()),
            Some(row) => (g.pair_scale.sample(rng), &rows[row], g.counts.dense_row(row)),
        };
        let conc: Vec<f64> = base.iter().zip(&counts).map(|(w, &c)| scale * w + c as f64).collect();
        dirichlet(&conc, rng)
    })
}

fn dirichlet(concentration: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut draws: Vec<f64> = concentration
        .iter()
        .map(|&a| GammaParams { shape: a, rate: 1.0 }.sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter_mut().for_each(|d| *d /= total);
    } else {
        let total: f64 = concentration.iter().sum();
        draws = concentration.iter().map(|a| a / total).collect();
    }
    draws
}

/// `draw(rng, None)` returns unigram probabilities, `draw(rng, Some(row))`
/// the pair probabilities of one row. Pair frequencies are joint: row
/// probabilities weighted by the observed row totals.
fn predictive_check<F>(observed: &LexicalCounts, draws: usize, seed: u64, mut draw: F) -> Result<LexicalCheckReport>
where
    F: FnMut(&mut ChaCha8Rng, Option<usize>) -> Vec<f64>,
{
    if draws == 0 {
        return Err(Error::invalid("predictive check needs at least one draw"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = observed.len();
    let n_uni = observed.unigram_total() as f64;
    let obs_uni: Vec<f64> = observed.unigrams.iter().map(|&c| c as f64 / n_uni.max(1.0)).collect();
    let n_pair: u64 = (0..v).map(|r| observed.row_total(r)).sum();
    let rows: Vec<usize> = (0..v).filter(|&r| observed.row_total(r) > 0).collect();
    let mut obs_pair = Vec::with_capacity(rows.len() * v);
    for &r in &rows {
        obs_pair.extend(observed.dense_row(r).iter().map(|&c| c as f64 / n_pair as f64));
    }

    let mut uni_mean = vec![0.0; v];
    let mut pair_mean = vec![0.0; obs_pair.len()];
    let (mut uni_err, mut pair_err) = (0.0, 0.0);
    for _ in 0..draws {
        let p = draw(&mut rng, None);
        uni_err += mean_abs_diff(&p, &obs_uni);
        accumulate(&mut uni_mean, &p, draws);
        let mut joint = Vec::with_capacity(obs_pair.len());
        for &r in &rows {
            let weight = observed.row_total(r) as f64 / n_pair as f64;
            joint.extend(draw(&mut rng, Some(r)).into_iter().map(|p| p * weight));
        }
        if !joint.is_empty() {
            pair_err += mean_abs_diff(&joint, &obs_pair);
            accumulate(&mut pair_mean, &joint, draws);
        }
    }
    let check = |mean: &[f64], obs: &[f64], err: f64| {
        let rank_correlation = spearman(mean, obs);
        FrequencyCheck {
            cells: obs.len(),
            mean_abs_error: err / draws as f64,
            rank_correlation,
            degenerate: rank_correlation.is_none(),
        }
    };
    Ok(LexicalCheckReport {
        draws,
        unigram: check(&uni_mean, &obs_uni, uni_err),
        pair: check(&pair_mean, &obs_pair, pair_err),
    })
}

fn accumulate(acc: &mut [f64], p: &[f64], draws: usize) {
    for (a, x) in acc.iter_mut().zip(p) {
        *a += x / draws as f64;
    }
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Average ranks, ties sharing the mean of their positions (1-based).
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rank correlation; `None` with fewer than two points or a
/// constant input.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}
