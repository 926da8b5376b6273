//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Exits 0 even when a criterion fails so that the workspace test run stays
//! usable; set `ACCEPTANCE_STRICT=1` to turn failures into a non-zero exit.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use modecheck_core::bayes::{fit_length_train, BayesConfig};
use modecheck_core::decoding::{beam_search, draw_sample_set, exact_mode, BeamConfig};
use modecheck_core::pipeline::{rule, run_pipeline, run_pipeline_to_dir, RunConfig};
use modecheck_core::rules::{
    estimate_expected_utility, exact_expected_utility, exact_mbr, ExactMatch, MeteorLite, MeteorParams, UnigramF1,
    Utility,
};
use modecheck_core::seqmodel::{
    enumerate_support, fit_tabular, ExplicitDistributionModel, ParallelCorpus, ParallelPair, SequenceModel, Sentence,
    SourceConditioning, TabularConfig, DEFAULT_NODE_BUDGET,
};
use modecheck_core::stats::{all_unique_rate, mass_curve, Group};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let criteria: Vec<(&str, Duration, fn() -> Outcome)> = vec![
        ("1 exact-match MBR equals the mode", Duration::from_secs(10), map_is_exact_match_mbr),
        ("2 Monte Carlo expected utility", Duration::from_secs(60), monte_carlo_consistency),
        ("3 inadequate mode", Duration::from_secs(1), inadequate_mode),
        ("4 sampler unbiasedness", Duration::from_secs(30), sampler_unbiased),
        ("5 exact search", Duration::from_secs(60), exact_search),
        ("6 Gamma-Poisson recovery", Duration::from_secs(120), gamma_poisson_recovery),
        ("7 group agreement ordering", Duration::from_secs(300), group_agreement_ordering),
        ("8 mass curves", Duration::from_secs(30), mass_curves),
        ("9 pipeline determinism and ordering", Duration::from_secs(300), pipeline_determinism),
        ("10 METEOR-lite examples", Duration::from_secs(1), meteor_examples),
    ];
    // Optional criterion numbers on the command line select a subset.
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, check) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.split(' ').next() == Some(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.1}s of {}s{}]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    println!("{failed} criteria failed");
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn normalised(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// Distinct random sentences over `vocab` with random probabilities.
fn random_explicit(rng: &mut ChaCha8Rng, outcomes: usize, vocab: &[&str], max_len: usize) -> ExplicitDistributionModel {
    let mut seen = HashSet::new();
    let mut targets = Vec::new();
    while targets.len() < outcomes {
        let len = rng.random_range(0..=max_len);
        let t: Vec<String> = (0..len).map(|_| vocab[rng.random_range(0..vocab.len())].to_string()).collect();
        if seen.insert(t.clone()) {
            targets.push(t);
        }
    }
    let weights: Vec<f64> = (0..outcomes).map(|_| rng.random::<f64>() + 1e-3).collect();
    let probs = normalised(&weights);
    ExplicitDistributionModel::new(vec![(vec![], targets.into_iter().zip(probs).collect())]).unwrap()
}

fn map_is_exact_match_mbr() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut agree = 0;
    for _ in 0..50 {
        let n = rng.random_range(2..=200);
        let m = random_explicit(&mut rng, n, &["a", "b", "c", "d"], 5);
        let src = Sentence::empty();
        let mbr = exact_mbr(&m, &src, &ExactMatch, DEFAULT_NODE_BUDGET).unwrap();
        let mode = exact_mode(&m, &src, DEFAULT_NODE_BUDGET).unwrap();
        agree += (mbr.chosen == mode.sentence) as usize;
    }
    outcome(agree == 50, format!("{agree}/50 models agree"))
}

fn monte_carlo_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let meteor = MeteorLite::new(MeteorParams::default()).unwrap();
    let s = 256;
    let (mut worst, mut total_in, mut total) = (1.0f64, 0usize, 0usize);
    for model_index in 0..20u64 {
        let n = rng.random_range(2..=200);
        let m = random_explicit(&mut rng, n, &["a", "b", "c"], 5);
        let src = Sentence::empty();
        let support = enumerate_support(&m, &src, DEFAULT_NODE_BUDGET).unwrap();
        // Candidates: the most probable outcome, a random outcome, and a
        // sentence outside the support.
        let outside = m.target_vocab().encode(&["a", "a", "a", "a", "a", "a", "a"]).unwrap();
        let candidates = [support[0].0.clone(), support[rng.random_range(0..n)].0.clone(), outside];
        for h in &candidates {
            let exact = exact_expected_utility(&support, h, &meteor);
            let second: f64 = support
                .iter()
                .map(|(y, p)| p * meteor.score(y.ids(), h.ids()).powi(2))
                .sum();
            let se = ((second - exact * exact).max(0.0) / s as f64).sqrt();
            let mut inside = 0;
            for r in 0..200u64 {
                let seed = model_index * 1000 + r;
                let samples = draw_sample_set(&m, &src, 0, s, seed).unwrap();
                let est = estimate_expected_utility(&samples, h, &meteor);
                inside += ((est - exact).abs() <= 3.0 * se + 1e-12) as usize;
            }
            worst = worst.min(inside as f64 / 200.0);
            total_in += inside;
            total += 200;
        }
    }
    outcome(
        worst >= 0.95,
        format!(
            "worst candidate {:.1}% within 3 SE, overall {:.2}%",
            100.0 * worst,
            100.0 * total_in as f64 / total as f64
        ),
    )
}

fn inadequate_mode() -> Outcome {
    let m = ExplicitDistributionModel::single(&[("a b", 0.3), ("a c", 0.3), ("b d", 0.4)]).unwrap();
    let src = Sentence::empty();
    let mbr = exact_mbr(&m, &src, &UnigramF1, DEFAULT_NODE_BUDGET).unwrap();
    let mode = exact_mode(&m, &src, DEFAULT_NODE_BUDGET).unwrap();
    let vocab = m.target_vocab();
    let eu_of = |s: &Sentence| mbr.candidates.iter().find(|c| &c.0 == s).unwrap().1;
    let chosen = vocab.decode_joined(&mbr.chosen);
    let mode_text = vocab.decode_joined(&mode.sentence);
    let eu_mode = eu_of(&mode.sentence);
    let pass = chosen == "a b"
        && (mbr.expected_utility - 0.65).abs() < 1e-12
        && mode_text == "b d"
        && (eu_mode - 0.55).abs() < 1e-12;
    outcome(
        pass,
        format!("MBR \"{chosen}\" EU {:.6}; mode \"{mode_text}\" EU {eu_mode:.6}", mbr.expected_utility),
    )
}

fn sampler_unbiased() -> Outcome {
    let entries = [("a", 0.05), ("b", 0.1), ("a b", 0.2), ("b a", 0.25), ("a a b", 0.4)];
    let m = ExplicitDistributionModel::single(&entries).unwrap();
    let n = 100_000;
    let samples = draw_sample_set(&m, &Sentence::empty(), 0, n, 4).unwrap();
    let mut worst = 0.0f64;
    for (text, p) in entries {
        let s = m.target_vocab().encode(&text.split(' ').collect::<Vec<_>>()).unwrap();
        let freq = samples.multiplicity(&s) as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        worst = worst.max((freq - p).abs() / sigma);
    }
    outcome(worst <= 4.0, format!("largest deviation {worst:.2} sigma"))
}

fn random_tabular(rng: &mut ChaCha8Rng) -> (modecheck_core::seqmodel::TabularConditionalModel, Vec<Sentence>) {
    let pairs: Vec<ParallelPair> = (0..rng.random_range(4..12))
        .map(|_| {
            let src: Vec<&str> = (0..rng.random_range(1..3)).map(|_| ["x", "y"][rng.random_range(0..2)]).collect();
            let tgt: Vec<&str> = (0..rng.random_range(0..5)).map(|_| ["a", "b", "c"][rng.random_range(0..3)]).collect();
            ParallelPair::new(&src, &tgt)
        })
        .collect();
    let corpus = ParallelCorpus::new(pairs);
    let config = TabularConfig {
        order: rng.random_range(1..=2),
        smoothing: 0.01,
        max_len: 8,
        conditioning: SourceConditioning::Identity,
    };
    let model = fit_tabular(&corpus, &config).unwrap();
    let sources = corpus.iter().map(|p| model.source_vocab().encode(&p.src).unwrap()).collect();
    (model, sources)
}

fn exact_search() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut top_agree, mut beam_agree) = (0, 0);
    let mut worst_gap = 0.0f64;
    let beam = BeamConfig {
        width: 10_000,
        max_width: 10_000,
        ..BeamConfig::default()
    };
    for _ in 0..50 {
        let (m, sources) = random_tabular(&mut rng);
        let src = &sources[rng.random_range(0..sources.len())];
        let mode = exact_mode(&m, src, DEFAULT_NODE_BUDGET).unwrap();
        let support = enumerate_support(&m, src, DEFAULT_NODE_BUDGET).unwrap();
        top_agree += (support[0].0 == mode.sentence) as usize;
        let b = beam_search(&m, src, &beam).unwrap();
        let gap = (b.log_prob - mode.log_prob).abs();
        worst_gap = worst_gap.max(gap);
        beam_agree += (gap <= 1e-12) as usize;
    }
    outcome(
        top_agree == 50 && beam_agree == 50,
        format!("top of support {top_agree}/50, exhaustive beam {beam_agree}/50 (max gap {worst_gap:.1e})"),
    )
}

fn gamma_poisson_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let poisson = Poisson::new(7.0).unwrap();
    let ys: Vec<u64> = (0..2000).map(|_| poisson.sample(&mut rng) as u64).collect();
    let post = fit_length_train(&ys, &BayesConfig::default().with_seed(6)).unwrap();
    let rate_err = (post.mean_rate() - 7.0).abs() / 7.0;
    let (a, b) = (post.alpha.mean(), post.beta.mean());
    let mut worst = 0.0f64;
    for (i, &y) in ys.iter().enumerate() {
        let q = post.rate_of(i).unwrap();
        let shape_err = (q.shape - (a + y as f64)).abs() / (a + y as f64);
        let rate_err = (q.rate - (b + 1.0)).abs() / (b + 1.0);
        worst = worst.max(shape_err).max(rate_err);
    }
    outcome(
        rate_err < 0.05 && worst < 0.01,
        format!(
            "mean rate {:.3} ({:.2}% off), worst rate-factor parameter error {:.2e}",
            post.mean_rate(),
            100.0 * rate_err,
            worst
        ),
    )
}

/// Reference = held-out targets, sampling = one ancestral sample per source
/// from the trained model, beam = beam outputs.
fn group_agreement_ordering() -> Outcome {
    let (mut ordered, mut ref_ge_samp, mut samp_gt_beam, mut length_below) = (0, 0, 0, 0);
    for seed in 0..100 {
        let mut c = RunConfig::default().with_seed(seed);
        c.samples = 1;
        c.replicates = 2;
        c.analyses.exact_mode = false;
        c.bayes.svi.steps = 500;
        c.bayes.svi.elbo_every = 0;
        c.bayes.predictive_draws = 2;
        c.bayes.posterior_samples = 1;
        let report = run_pipeline(&c).unwrap();
        let bayes = report.bayes.unwrap();
        let s = |g: Group| bayes.bigram.unigram_scale[&g].mean();
        let (r, sa, b) = (s(Group::Reference), s(Group::Sampling), s(Group::Beam));
        ref_ge_samp += (r >= sa) as usize;
        samp_gt_beam += (sa > b) as usize;
        ordered += (r >= sa && sa > b) as usize;
        let rate = &bayes.length.mean_rate;
        length_below += (rate[&Group::Beam] < rate[&Group::Reference]) as usize;
    }
    outcome(
        ordered >= 90 && length_below >= 90,
        format!(
            "full ordering {ordered}/100 (reference >= sampling {ref_ge_samp}/100, sampling > beam {samp_gt_beam}/100), \
             beam length rate below reference {length_below}/100"
        ),
    )
}

fn mass_curves() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut problems = Vec::new();
    let mut checked = 0;
    for k in 0..10u64 {
        // Several sources per model.
        let entries = (0..3)
            .map(|s| {
                let n = rng.random_range(2..60);
                let single = random_explicit(&mut rng, n, &["a", "b", "c"], 4);
                let support = enumerate_support(&single, &Sentence::empty(), DEFAULT_NODE_BUDGET).unwrap();
                let targets = support
                    .iter()
                    .map(|(t, p)| (single.target_vocab().decode(t), *p))
                    .collect();
                (vec![format!("src{s}")], targets)
            })
            .collect();
        let m = ExplicitDistributionModel::new(entries).unwrap();
        let sources: Vec<Sentence> = m.sources().cloned().collect();
        for (i, src) in sources.iter().enumerate() {
            let samples = draw_sample_set(&m, src, i as u64, 50, k).unwrap();
            let curve = mass_curve(&m, src, &samples).unwrap();
            if curve.curve.windows(2).any(|w| w[1] < w[0]) || curve.curve.iter().any(|&c| c > 1.0 + 1e-12) {
                problems.push(format!("model {k} source {i}: curve not monotone or above 1"));
            }
            let probs: HashMap<Sentence, f64> = enumerate_support(&m, src, DEFAULT_NODE_BUDGET).unwrap().into_iter().collect();
            let recomputed: f64 = samples.unique().keys().map(|s| probs[s]).sum();
            if (recomputed - curve.coverage()).abs() > 1e-9 {
                problems.push(format!("model {k} source {i}: coverage {} vs {recomputed}", curve.coverage()));
            }
            checked += 1;
        }
    }

    let words: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
    let targets = (0..1_000_000usize)
        .map(|n| {
            let t = (0..6).map(|d| words[(n / 10usize.pow(d)) % 10].clone()).collect();
            (t, 1e-6)
        })
        .collect();
    let uniform = ExplicitDistributionModel::new(vec![(vec![], targets)]).unwrap();
    let set = draw_sample_set(&uniform, &Sentence::empty(), 0, 100, 8).unwrap();
    let rate = all_unique_rate(&[set]);
    if rate != 1.0 {
        problems.push(format!("all-unique rate {rate}"));
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{checked} sources checked, all-unique rate 1.0 on 10^6 outcomes")
        } else {
            problems.join("; ")
        },
    )
}

fn read_dir(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn pipeline_determinism() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = RunConfig::default();
    let start = Instant::now();
    let report = run_pipeline_to_dir(&config, a.path()).unwrap();
    let single_run = start.elapsed();
    run_pipeline_to_dir(&config, b.path()).unwrap();
    let identical = read_dir(a.path()) == read_dir(b.path());
    pass &= identical;
    notes.push(format!("identical outputs {identical}, one run {:.1}s", single_run.as_secs_f64()));
    pass &= single_run < Duration::from_secs(300);

    let mut reports = vec![report];
    for seed in 1..3 {
        reports.push(run_pipeline(&RunConfig::default().with_seed(seed)).unwrap());
    }
    for r in &reports {
        let u = &r.utility;
        let ok = u[rule::ORACLE] >= u[rule::MBR] && u[rule::ORACLE] >= u[rule::BEAM];
        pass &= ok;
        let single = r.single_sample.as_ref().unwrap();
        pass &= single.replicates.len() == 30 && single.std_dev.is_finite();
        notes.push(format!(
            "seed {}: oracle {:.3} mbr {:.3} beam {:.3} single {:.3}±{:.3}",
            r.config.seed, u[rule::ORACLE], u[rule::MBR], u[rule::BEAM], single.mean, single.std_dev
        ));
    }
    outcome(pass, notes.join("; "))
}

fn meteor_examples() -> Outcome {
    let m = MeteorLite::new(MeteorParams::default()).unwrap();
    let got = [m.score(&[1, 2, 3], &[1, 2, 3]), m.score(&[1, 2], &[2, 1]), m.score(&[1], &[2])];
    let want = [0.98148, 0.5, 0.0];
    let pass = got.iter().zip(&want).all(|(g, w)| (g - w).abs() <= 1e-5);
    outcome(pass, format!("scores {:.6} {:.6} {:.6}", got[0], got[1], got[2]))
}
