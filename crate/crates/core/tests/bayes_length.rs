use std::collections::BTreeMap;

use modecheck_core::bayes::{
    fit_length_test, fit_length_train, fit_length_train_with, predictive_check_length, BayesConfig, FixedPopulation,
    GammaParams, LengthTrainPosterior,
};
use modecheck_core::stats::Group;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

fn poisson(rate: f64, n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = Poisson::new(rate).unwrap();
    (0..n).map(|_| p.sample(&mut rng) as u64).collect()
}

/// Gamma-Poisson lengths: rates ~ Gamma(shape, shape / mean).
fn gamma_poisson(shape: f64, mean: f64, n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Gamma::new(shape, mean / shape).unwrap();
    (0..n)
        .map(|_| Poisson::new(g.sample(&mut rng).max(1e-12)).unwrap().sample(&mut rng) as u64)
        .collect()
}

fn config(seed: u64) -> BayesConfig {
    BayesConfig::default().with_seed(seed)
}

fn assert_rel(got: f64, want: f64, tol: f64, what: &str) {
    assert!(((got - want) / want).abs() < tol, "{what}: got {got}, want {want}");
}

/// 50-step moving averages never drop by more than `slack` over the final
/// 80% of the trace.
fn assert_smoothed_monotone(trace: &[f64], slack: f64) {
    assert!(trace.len() >= 100);
    let avg: Vec<f64> = trace.windows(50).map(|w| w.iter().sum::<f64>() / 50.0).collect();
    let start = trace.len() / 5;
    for i in start.saturating_sub(49).max(1)..avg.len() {
        assert!(avg[i] >= avg[i - 1] - slack, "ELBO average fell at {i}: {} -> {}", avg[i - 1], avg[i]);
    }
}

#[test]
fn clamped_single_datapoint_is_conjugate() {
    let post = fit_length_train_with(&[3], &config(0), Some(FixedPopulation { alpha: 1.0, beta: 1.0 })).unwrap();
    let q = post.rate_of(0).unwrap();
    assert_rel(q.shape, 4.0, 1e-9, "shape");
    assert_rel(q.rate, 2.0, 1e-9, "rate");
    assert_rel(q.mean(), 2.0, 1e-9, "mean");
}

#[test]
fn clamped_rates_match_conjugate_oracle() {
    let ys = gamma_poisson(2.0, 9.0, 300, 4);
    let (alpha, beta) = (2.5, 0.3);
    let post = fit_length_train_with(&ys, &config(1), Some(FixedPopulation { alpha, beta })).unwrap();
    for (i, &y) in ys.iter().enumerate() {
        let q = post.rate_of(i).unwrap();
        assert_rel(q.shape, alpha + y as f64, 0.01, "shape");
        assert_rel(q.rate, beta + 1.0, 0.01, "rate");
    }
}

fn check_fit(post: &LengthTrainPosterior, ys: &[u64]) {
    // Rate factors are the conjugate optimum given the fitted population.
    for (i, &y) in ys.iter().enumerate() {
        let q = post.rate_of(i).unwrap();
        assert_rel(q.shape, post.alpha.mean() + y as f64, 0.01, "shape");
        assert_rel(q.rate, post.beta.mean() + 1.0, 0.01, "rate");
    }
    assert_smoothed_monotone(&post.elbo_trace, 1e-6 * post.elbo_trace[0].abs());
}

#[test]
fn recovers_poisson_rate() {
    let ys = poisson(7.0, 2000, 11);
    let post = fit_length_train(&ys, &config(2)).unwrap();
    assert_rel(post.mean_rate(), 7.0, 0.05, "mean rate");
    assert_rel(post.mu, 7.0, 0.05, "mu");
    check_fit(&post, &ys);
}

#[test]
fn constant_lengths_predict_their_value() {
    let ys = vec![12; 500];
    let post = fit_length_train(&ys, &config(3)).unwrap();
    // predictive mean of a fresh datapoint is E[alpha] E[1/beta]
    assert_rel(post.mu, 12.0, 0.02, "predictive mean");
    check_fit(&post, &ys);
}

#[test]
fn too_few_lengths_rejected() {
    assert!(fit_length_train(&[1, 2, 3], &config(0)).is_err());
    assert!(fit_length_train_with(&[], &config(0), Some(FixedPopulation { alpha: 1.0, beta: 1.0 })).is_err());
}

fn train_on(ys: &[u64]) -> LengthTrainPosterior {
    fit_length_train(ys, &config(5)).unwrap()
}

#[test]
fn same_distribution_group_matches_training_mean() {
    // Exponentially mixed rates: the test family Gamma(s, 1/mu) contains the
    // training distribution at s = 1.
    let train = gamma_poisson(1.0, 8.0, 3000, 21);
    let post = train_on(&train);
    let train_mean = train.iter().sum::<u64>() as f64 / train.len() as f64;
    let groups = BTreeMap::from([(Group::Reference, gamma_poisson(1.0, 8.0, 500, 22))]);
    let test = fit_length_test(&post, &groups, &config(6)).unwrap();
    assert_rel(test.group_mean_rate(Group::Reference).unwrap(), train_mean, 0.10, "group rate");
    assert_smoothed_monotone(&test.elbo_trace, 1e-6 * test.elbo_trace[0].abs());
}

#[test]
fn identical_groups_agree() {
    let post = train_on(&gamma_poisson(1.0, 8.0, 1000, 31));
    let ys = gamma_poisson(1.0, 8.0, 300, 32);
    let groups = BTreeMap::from([(Group::Reference, ys.clone()), (Group::Sampling, ys)]);
    let test = fit_length_test(&post, &groups, &config(7)).unwrap();
    let a = test.group_mean_rate(Group::Reference).unwrap();
    let b = test.group_mean_rate(Group::Sampling).unwrap();
    assert_rel(a, b, 0.05, "symmetric groups");
}

#[test]
fn shorter_group_has_smaller_scale() {
    let post = train_on(&gamma_poisson(1.0, 8.0, 2000, 41));
    let groups = BTreeMap::from([
        (Group::Reference, gamma_poisson(1.0, 8.0, 400, 42)),
        (Group::Beam, gamma_poisson(1.0, 4.0, 400, 43)),
    ]);
    let test = fit_length_test(&post, &groups, &config(8)).unwrap();
    let s = test.groups[&Group::Beam].scale.mean();
    assert!(s < 0.7, "E[s_beam] = {s}");
    assert!(s < test.groups[&Group::Reference].scale.mean());
}

#[test]
fn test_groups_validated() {
    let post = train_on(&poisson(5.0, 100, 1));
    let training = BTreeMap::from([(Group::Training, vec![1, 2])]);
    assert!(fit_length_test(&post, &training, &config(0)).is_err());
    let empty = BTreeMap::from([(Group::Beam, vec![])]);
    assert!(fit_length_test(&post, &empty, &config(0)).is_err());
}

#[test]
fn predictive_check_calibration() {
    let mut cfg = config(0);
    cfg.svi.steps = 1000;
    let mut covered = 0;
    for run in 0..100u64 {
        let ys = gamma_poisson(3.0, 10.0, 200, 1000 + run);
        let post = fit_length_train(&ys, &cfg.clone().with_seed(run)).unwrap();
        let report = predictive_check_length(&post, &ys, 2000, run).unwrap();
        covered += report.all_inside() as usize;
    }
    assert!(covered >= 80, "{covered}/100 runs had all moments inside");
}

#[test]
fn predictive_check_flags_shifted_data() {
    let ys = gamma_poisson(3.0, 10.0, 400, 7);
    let post = fit_length_train(&ys, &config(1)).unwrap();
    let shifted: Vec<u64> = ys.iter().map(|&y| (y as f64 * 1.5).round() as u64).collect();
    let report = predictive_check_length(&post, &shifted, 2000, 2).unwrap();
    assert!(!report.moments[0].inside, "{:?}", report.moments[0]);
    assert!(predictive_check_length(&post, &[], 2000, 2).is_err());
}

#[test]
fn gamma_params_reject_nonpositive() {
    assert!(GammaParams::new(1.0, -1.0).is_err());
}
