use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use super::config::RunConfig;
use super::generate::generate_corpus;
use super::report::{
    rule, BayesSummary, Decoded, GroupSummary, GroupTable, LengthSummary, LexicalSummary, Report, ReplicateSummary,
    RunStatus, SourceReport, StatsSummary,
};
use super::split::split_heldout;
use crate::bayes::{
    fit_length_test, fit_length_train, fit_lexical_test, fit_lexical_train, predictive_check_length,
    predictive_check_length_group, predictive_check_lexical, predictive_check_lexical_group, BayesConfig,
    LexicalCounts, PairKind, PosteriorExport,
};
use crate::decoding::{ancestral_sample, beam_search, derive_seed, draw_sample_set, exact_mode, SampleSet, ScoredSentence};
use crate::error::{Error, Result};
use crate::rules::{mbr_decode, oracle_select, Utility};
use crate::seqmodel::{fit_tabular, ParallelPair, Sentence, SequenceModel, TabularConditionalModel, Vocabulary, UNKNOWN};
use crate::stats::{
    all_unique_rate, beam_in_samples, empty_string_stats, extract_group_statistics, mass_curve, Group, GroupStatistics,
};

// Independent random streams derived from the run seed.
const STREAM_SPLIT: u64 = 1;
const STREAM_SAMPLES: u64 = 2;
const STREAM_SINGLE: u64 = 3;
const STREAM_BAYES: u64 = 4;

fn stream(seed: u64, stream: u64) -> u64 {
    derive_seed(seed, u64::MAX - stream, 0)
}

/// Runs every stage and returns the complete report. Errors carry the name
/// of the stage that failed.
pub fn run_pipeline(config: &RunConfig) -> Result<Report> {
    let mut report = Report::new(config.clone());
    run_stages(config, &mut report)?;
    Ok(report)
}

/// Like [`run_pipeline`], and writes the report and CSV files into `dir`.
/// A failed run still writes whatever was computed, with a failed status and
/// a `FAILED` marker file, before returning the error.
pub fn run_pipeline_to_dir(config: &RunConfig, dir: &Path) -> Result<Report> {
    let mut report = Report::new(config.clone());
    match run_stages(config, &mut report) {
        Ok(()) => {
            report.write_to_dir(dir)?;
            Ok(report)
        }
        Err(err) => {
            let stage = match &err {
                Error::Stage { stage, .. } => stage.to_string(),
                _ => "unknown".to_string(),
            };
            report.status = RunStatus::Failed {
                stage,
                message: err.to_string(),
            };
            report.write_to_dir(dir)?;
            Err(err)
        }
    }
}

struct SourceOutcome {
    report: SourceReport,
    samples: SampleSet,
    beam: Sentence,
    reference: Sentence,
    curve: Vec<f64>,
}

fn run_stages(config: &RunConfig, report: &mut Report) -> Result<()> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let corpus = generate_corpus(&config.corpus).map_err(|e| e.in_stage("corpus"))?;
    let split = split_heldout(&corpus, config.heldout, stream(config.seed, STREAM_SPLIT))
        .map_err(|e| e.in_stage("split"))?;
    report.split = Some(split.summary);
    let model = fit_tabular(&split.train, &config.model).map_err(|e| e.in_stage("train"))?;
    report.model_target_vocab = Some(model.target_vocab().content_len());

    let utility = config
        .utility
        .build(config.meteor)
        .map_err(|e| e.in_stage("config"))?;
    let outcomes = split
        .heldout
        .pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| decode_source(config, &model, &*utility, i as u64, pair))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("decode"))?;

    summarise_rules(config, report, &outcomes);
    report.mass_curves = outcomes.iter().map(|o| (o.report.index, o.curve.clone())).collect();
    report.sources = outcomes.iter().map(|o| o.report.clone()).collect();

    if !(config.analyses.stats || config.analyses.bayes) {
        return Ok(());
    }
    let vocab = model.target_vocab();
    let training: Vec<Sentence> = split
        .train
        .iter()
        .map(|p| vocab.encode(&p.tgt))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("stats"))?;
    let groups = group_statistics(&training, &outcomes);
    if config.analyses.stats {
        report.stats = Some(stats_summary(&outcomes, &groups));
        report.group_tables = groups.values().map(|g| group_table(g, vocab)).collect();
    }
    if config.analyses.bayes {
        let bayes = config.bayes.clone().with_seed(derive_seed(config.seed, u64::MAX - STREAM_BAYES, config.bayes.seed));
        report.bayes = Some(bayes_summary(&bayes, &groups).map_err(|e| e.in_stage("bayes"))?);
    }
    Ok(())
}

fn decode_source<U: Utility + ?Sized>(
    config: &RunConfig,
    model: &TabularConditionalModel,
    utility: &U,
    index: u64,
    pair: &ParallelPair,
) -> Result<SourceOutcome> {
    let vocab = model.target_vocab();
    let source = model.source_vocab().encode_lossy(&pair.src);
    // Unseen reference tokens stay as UNKNOWN so no hypothesis can match them.
    let reference = vocab.encode_lossy(&pair.tgt);
    let score = |h: &Sentence| utility.score(reference.ids(), h.ids());
    let decoded = |s: &ScoredSentence| Decoded {
        tokens: vocab.decode(&s.sentence),
        log_prob: s.log_prob,
        utility: score(&s.sentence),
    };

    let samples = draw_sample_set(model, &source, index, config.samples, stream(config.seed, STREAM_SAMPLES))?;
    let single_seed = stream(config.seed, STREAM_SINGLE);
    let single_sample_utilities = (0..config.replicates as u64)
        .map(|r| ancestral_sample(model, &source, derive_seed(single_seed, index, r)).map(|s| score(&s.sentence)))
        .collect::<Result<Vec<_>>>()?;
    let beam = beam_search(model, &source, &config.beam)?;

    let (mode, certified) = if config.analyses.exact_mode {
        match exact_mode(model, &source, config.exact_budget) {
            Ok(m) => (Some(m), Some(true)),
            Err(Error::BudgetExceeded { best_so_far, .. }) => (
                best_so_far.map(|(s, lp)| ScoredSentence::unpenalised(s, lp)),
                Some(false),
            ),
            Err(e) => return Err(e),
        }
    } else {
        (None, None)
    };

    let mbr = mbr_decode(&samples, utility)?;
    let mbr_lp = samples
        .samples
        .iter()
        .find(|s| s.sentence == mbr.chosen)
        .map(|s| s.log_prob)
        .expect("MBR chooses among the samples");

    // The oracle sees every candidate any rule produced.
    let mut pool = samples.samples.clone();
    pool.push(beam.clone());
    pool.extend(mode.clone());
    let pool = SampleSet::new(source.clone(), index, samples.seed, pool);
    let oracle = oracle_select(&pool, &reference, utility)?;

    let curve = mass_curve(model, &source, &samples)?;
    let report = SourceReport {
        index,
        source: pair.src.clone(),
        reference: pair.tgt.clone(),
        single_sample_utilities,
        beam: decoded(&beam),
        exact_mode: mode.as_ref().map(decoded),
        exact_mode_certified: certified,
        mbr: decoded(&ScoredSentence::unpenalised(mbr.chosen.clone(), mbr_lp)),
        mbr_expected_utility: mbr.expected_utility,
        oracle: decoded(&oracle),
        unique_samples: samples.unique().len(),
        coverage: curve.coverage(),
        beam_in_samples: beam_in_samples(&beam.sentence, &samples),
        empty_samples: empty_string_stats(&samples).count,
    };
    Ok(SourceOutcome {
        report,
        samples,
        beam: beam.sentence,
        reference,
        curve: curve.curve,
    })
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn summarise_rules(config: &RunConfig, report: &mut Report, outcomes: &[SourceOutcome]) {
    let replicates = (0..config.replicates)
        .map(|r| mean(outcomes.iter().map(|o| o.report.single_sample_utilities[r])))
        .collect();
    let single = ReplicateSummary::from_replicates(replicates);
    let u = &mut report.utility;
    u.insert(rule::SINGLE_SAMPLE.into(), single.mean);
    u.insert(rule::BEAM.into(), mean(outcomes.iter().map(|o| o.report.beam.utility)));
    u.insert(rule::MBR.into(), mean(outcomes.iter().map(|o| o.report.mbr.utility)));
    u.insert(rule::ORACLE.into(), mean(outcomes.iter().map(|o| o.report.oracle.utility)));
    if config.analyses.exact_mode {
        u.insert(
            rule::EXACT_MODE.into(),
            mean(outcomes.iter().filter_map(|o| o.report.exact_mode.as_ref().map(|d| d.utility))),
        );
    }
    report.single_sample = Some(single);
}

fn group_statistics(training: &[Sentence], outcomes: &[SourceOutcome]) -> BTreeMap<Group, GroupStatistics> {
    let known = |s: &Sentence| Sentence::new(s.ids().iter().copied().filter(|&t| t != UNKNOWN).collect());
    let references: Vec<Sentence> = outcomes.iter().map(|o| known(&o.reference)).collect();
    let mut reference = extract_group_statistics(&references, Group::Reference);
    // Lengths count every reference token, including unseen ones.
    reference.lengths = outcomes.iter().map(|o| o.reference.len() as u64).collect();
    let sampling: Vec<&Sentence> = outcomes.iter().map(|o| &o.samples.samples[0].sentence).collect();
    let beam: Vec<&Sentence> = outcomes.iter().map(|o| &o.beam).collect();
    [
        extract_group_statistics(training, Group::Training),
        reference,
        extract_group_statistics(sampling, Group::Sampling),
        extract_group_statistics(beam, Group::Beam),
    ]
    .into_iter()
    .map(|g| (g.group, g))
    .collect()
}

fn stats_summary(outcomes: &[SourceOutcome], groups: &BTreeMap<Group, GroupStatistics>) -> StatsSummary {
    let n = outcomes.len().max(1) as f64;
    let sets: Vec<SampleSet> = outcomes.iter().map(|o| o.samples.clone()).collect();
    StatsSummary {
        beam_in_samples_rate: outcomes.iter().filter(|o| o.report.beam_in_samples).count() as f64 / n,
        empty_string_rate: outcomes.iter().filter(|o| o.report.empty_samples > 0).count() as f64 / n,
        empty_string_count: outcomes.iter().map(|o| o.report.empty_samples).sum(),
        all_unique_rate: all_unique_rate(&sets),
        mean_coverage: mean(outcomes.iter().map(|o| o.report.coverage)),
        mean_unique: mean(outcomes.iter().map(|o| o.report.unique_samples as f64)),
        reference_oov_tokens: outcomes
            .iter()
            .map(|o| o.reference.ids().iter().filter(|&&t| t == UNKNOWN).count())
            .sum(),
        groups: groups
            .iter()
            .map(|(g, s)| {
                (
                    *g,
                    GroupSummary {
                        sentences: s.lengths.len(),
                        mean_length: s.mean_length(),
                        distinct_unigrams: s.unigrams.len(),
                        distinct_bigrams: s.bigrams.len(),
                        distinct_skip_bigrams: s.skip_bigrams.len(),
                    },
                )
            })
            .collect(),
    }
}

fn group_table(stats: &GroupStatistics, vocab: &Vocabulary) -> GroupTable {
    let tok = |t: u32| vocab.token(t).unwrap_or("<unk>").to_string();
    let pairs = |m: &BTreeMap<(u32, u32), u64>| m.iter().map(|(&(a, b), &c)| ((tok(a), tok(b)), c)).collect();
    let mut lengths = BTreeMap::new();
    for &y in &stats.lengths {
        *lengths.entry(y).or_default() += 1;
    }
    GroupTable {
        group: Some(stats.group),
        lengths,
        unigrams: stats.unigrams.iter().map(|(&t, &c)| (tok(t), c)).collect(),
        bigrams: pairs(&stats.bigrams),
        skip_bigrams: pairs(&stats.skip_bigrams),
    }
}

fn bayes_summary(config: &BayesConfig, groups: &BTreeMap<Group, GroupStatistics>) -> Result<BayesSummary> {
    let training = &groups[&Group::Training];
    let tests: BTreeMap<Group, &GroupStatistics> = groups
        .iter()
        .filter(|(g, s)| **g != Group::Training && !s.lengths.is_empty())
        .map(|(g, s)| (*g, s))
        .collect();
    let check_seed = |label: u64| derive_seed(config.seed, label, 0);

    let train_len = fit_length_train(&training.lengths, config)?;
    let test_lengths: BTreeMap<Group, Vec<u64>> = tests.iter().map(|(g, s)| (*g, s.lengths.clone())).collect();
    let test_len = fit_length_test(&train_len, &test_lengths, config)?;
    let mut group_checks = BTreeMap::new();
    for (g, ys) in &test_lengths {
        let check = predictive_check_length_group(&test_len, *g, ys, config.predictive_draws, check_seed(10 + *g as u64))?;
        group_checks.insert(*g, check);
    }
    let mut variables = train_len.variables();
    variables.extend(test_len.variables());
    let length = LengthSummary {
        alpha: train_len.alpha,
        beta: train_len.beta,
        mu: train_len.mu,
        eta: test_len.eta,
        scale: test_len.groups.iter().map(|(g, p)| (*g, p.scale)).collect(),
        mean_rate: test_len
            .groups
            .keys()
            .map(|g| (*g, test_len.group_mean_rate(*g).expect("fitted group")))
            .collect(),
        check: predictive_check_length(&train_len, &training.lengths, config.predictive_draws, check_seed(1))?,
        group_checks,
    };

    let mut lexical = Vec::new();
    for (k, (kind, prefix)) in [(PairKind::Bigram, "bigram"), (PairKind::SkipBigram, "skip_bigram")]
        .into_iter()
        .enumerate()
    {
        let train_counts = LexicalCounts::from_statistics(training, kind);
        let train = fit_lexical_train(&train_counts, config)?;
        let test_counts = tests
            .iter()
            .map(|(g, s)| Ok((*g, LexicalCounts::with_vocabulary(s, kind, &train_counts.vocabulary)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let test = fit_lexical_test(&train, &test_counts, config)?;
        let base = 100 * (k as u64 + 1);
        let mut group_checks = BTreeMap::new();
        for g in test.groups.keys() {
            let check = predictive_check_lexical_group(&train, &test, *g, config.predictive_draws, check_seed(base + *g as u64))?;
            group_checks.insert(*g, check);
        }
        variables.extend(train.variables(prefix));
        variables.extend(test.variables(prefix));
        lexical.push(LexicalSummary {
            alpha: train.alpha,
            beta: train.beta,
            eta_unigram: test.eta_unigram,
            eta_pair: test.eta_pair,
            unigram_scale: test.groups.iter().map(|(g, p)| (*g, p.unigram_scale)).collect(),
            pair_scale: test.groups.iter().map(|(g, p)| (*g, p.pair_scale)).collect(),
            check: predictive_check_lexical(&train, &train_counts, config.predictive_draws, check_seed(base))?,
            group_checks,
        });
    }
    let skip_bigram = lexical.pop().expect("two fits");
    let bigram = lexical.pop().expect("two fits");
    Ok(BayesSummary {
        length,
        bigram,
        skip_bigram,
        posteriors: PosteriorExport::draw(variables, config.posterior_samples, check_seed(1000)),
    })
}
