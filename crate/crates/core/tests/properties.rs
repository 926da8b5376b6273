use proptest::prelude::*;

use modecheck_core::decoding::{ancestral_sample, draw_sample_set, exact_mode, exact_mode_with_stats};
use modecheck_core::rules::{exact_mbr, ExactMatch};
use modecheck_core::seqmodel::{
    enumerate_support, fit_tabular, ExplicitDistributionModel, ParallelCorpus, ParallelPair, SequenceModel, Sentence,
    SourceConditioning, TabularConditionalModel, TabularConfig, DEFAULT_NODE_BUDGET, NORMALISATION_TOLERANCE,
};
use modecheck_core::stats::mass_curve;

const SRC: [&str; 3] = ["x", "y", "z"];
const TGT: [&str; 3] = ["a", "b", "c"];

fn corpus_strategy() -> impl Strategy<Value = Vec<(Vec<usize>, Vec<usize>)>> {
    prop::collection::vec(
        (prop::collection::vec(0..3usize, 1..4), prop::collection::vec(0..3usize, 0..5)),
        1..10,
    )
}

fn build(pairs: &[(Vec<usize>, Vec<usize>)], order: usize, aligned: bool) -> (TabularConditionalModel, Vec<Sentence>) {
    let corpus = ParallelCorpus::new(
        pairs
            .iter()
            .map(|(s, t)| {
                let s: Vec<&str> = s.iter().map(|&i| SRC[i]).collect();
                let t: Vec<&str> = t.iter().map(|&i| TGT[i]).collect();
                ParallelPair::new(&s, &t)
            })
            .collect(),
    );
    let config = TabularConfig {
        order,
        smoothing: 0.01,
        max_len: 6,
        conditioning: if aligned {
            SourceConditioning::Aligned { window: 1 }
        } else {
            SourceConditioning::Identity
        },
    };
    let model = fit_tabular(&corpus, &config).unwrap();
    let sources = corpus.iter().map(|p| model.source_vocab().encode(&p.src).unwrap()).collect();
    (model, sources)
}

fn explicit_strategy() -> impl Strategy<Value = ExplicitDistributionModel> {
    prop::collection::btree_map(prop::collection::vec(0..3usize, 0..4), 0.01f64..1.0, 1..30).prop_map(|m| {
        let total: f64 = m.values().sum();
        let entries = m
            .into_iter()
            .map(|(t, w)| (t.iter().map(|&i| TGT[i].to_string()).collect(), w / total))
            .collect();
        ExplicitDistributionModel::new(vec![(vec![], entries)]).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn next_distributions_are_normalised(
        pairs in corpus_strategy(),
        order in 1..3usize,
        aligned: bool,
        prefix in prop::collection::vec(1..4u32, 0..6),
        unseen: bool,
    ) {
        let (m, sources) = build(&pairs, order, aligned);
        // An unseen source exercises the source-agnostic backoff.
        let src = if unseen { m.source_vocab().encode_lossy(&["w", "x"]) } else { sources[0].clone() };
        let prefix: Vec<u32> = prefix.into_iter().filter(|&t| (t as usize) < m.target_vocab().len()).collect();
        let d = m.next_distribution(&src, &prefix).unwrap();
        prop_assert_eq!(d.len(), m.target_vocab().len());
        prop_assert!(d.iter().all(|&p| p >= 0.0));
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < NORMALISATION_TOLERANCE);
    }

    #[test]
    fn branch_and_bound_never_expands_a_dominated_prefix(pairs in corpus_strategy(), order in 1..3usize) {
        let (m, sources) = build(&pairs, order, false);
        let (best, stats) = exact_mode_with_stats(&m, &sources[0], DEFAULT_NODE_BUDGET).unwrap();
        prop_assert_eq!(stats.bound_violations, 0);
        let support = enumerate_support(&m, &sources[0], DEFAULT_NODE_BUDGET).unwrap();
        prop_assert_eq!(&support[0].0, &best.sentence);
        let total: f64 = support.iter().map(|s| s.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sample_log_probs_match_scoring(pairs in corpus_strategy(), seed: u64) {
        let (m, sources) = build(&pairs, 1, true);
        let s = ancestral_sample(&m, &sources[0], seed).unwrap();
        let lp = m.sequence_log_prob(&sources[0], s.sentence.ids()).unwrap();
        prop_assert!((lp - s.log_prob).abs() < 1e-9);
    }

    #[test]
    fn exact_match_mbr_is_the_mode(m in explicit_strategy()) {
        let src = Sentence::empty();
        let mbr = exact_mbr(&m, &src, &ExactMatch, DEFAULT_NODE_BUDGET).unwrap();
        let mode = exact_mode(&m, &src, DEFAULT_NODE_BUDGET).unwrap();
        prop_assert_eq!(mbr.chosen, mode.sentence);
        prop_assert!((mbr.expected_utility - mode.log_prob.exp()).abs() < 1e-12);
    }

    #[test]
    fn coverage_grows_with_sample_size(m in explicit_strategy(), seed: u64) {
        let src = Sentence::empty();
        let mut last = 0.0;
        for s in [1, 4, 16, 64] {
            let set = draw_sample_set(&m, &src, 0, s, seed).unwrap();
            let c = mass_curve(&m, &src, &set).unwrap().coverage();
            prop_assert!(c >= last && c <= 1.0 + 1e-12);
            last = c;
        }
    }
}
