use super::ScoredSentence;
use crate::error::{Error, Result};
use crate::seqmodel::{SequenceModel, Sentence, TokenId, EOS};

/// Instrumentation counters for [`exact_mode_with_stats`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExactSearchStats {
    /// Nodes whose next-token distribution was computed.
    pub expansions: u64,
    /// Nodes discarded because their prefix fell below the incumbent.
    pub pruned: u64,
    /// Expansions of a node whose prefix log-probability was already below
    /// the incumbent. Always zero for a sound search.
    pub bound_violations: u64,
}

/// Global argmax of the sequence log-probability.
pub fn exact_mode<M: SequenceModel + ?Sized>(model: &M, source: &Sentence, node_budget: u64) -> Result<ScoredSentence> {
    exact_mode_with_stats(model, source, node_budget).map(|(best, _)| best)
}

/// Depth-first branch-and-bound. A prefix's log-probability bounds every
/// completion of it, so any prefix strictly below the best complete sentence
/// found so far is discarded. Children are visited most probable first, which
/// makes the first leaf reached the greedy decode. Equal scores resolve to the
/// lexicographically smallest sentence.
pub fn exact_mode_with_stats<M: SequenceModel + ?Sized>(
    model: &M,
    source: &Sentence,
    node_budget: u64,
) -> Result<(ScoredSentence, ExactSearchStats)> {
    let mut stats = ExactSearchStats::default();
    let mut best: Option<(Vec<TokenId>, f64)> = None;
    let below = |lp: f64, best: &Option<(Vec<TokenId>, f64)>| matches!(best, Some((_, b)) if lp < *b);
    let mut stack: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];

    while let Some((prefix, lp)) = stack.pop() {
        if below(lp, &best) {
            stats.pruned += 1;
            continue;
        }
        if stats.expansions == node_budget {
            return Err(Error::BudgetExceeded {
                budget: node_budget,
                best_so_far: best.map(|(t, lp)| (Sentence::new(t), lp)),
            });
        }
        stats.expansions += 1;
        if below(lp, &best) {
            stats.bound_violations += 1;
        }
        let dist = model.next_distribution(source, &prefix)?;

        let p_eos = dist[EOS as usize];
        if p_eos > 0.0 {
            let done = lp + p_eos.ln();
            let better = match &best {
                None => true,
                Some((tokens, b)) => done > *b || (done == *b && prefix < *tokens),
            };
            if better {
                best = Some((prefix.clone(), done));
            }
        }

        let mut children: Vec<(TokenId, f64)> = dist
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &p)| p > 0.0)
            .map(|(t, &p)| (t as TokenId, lp + p.ln()))
            .filter(|&(_, child)| !below(child, &best))
            .collect();
        // Pushed so that the most probable (then lowest id) child pops first.
        children.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
        for (tok, child_lp) in children {
            let mut next = prefix.clone();
            next.push(tok);
            stack.push((next, child_lp));
        }
    }

    let (tokens, lp) = best.ok_or_else(|| Error::Invariant("exact search found no complete sentence".into()))?;
    Ok((ScoredSentence::unpenalised(Sentence::new(tokens), lp), stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::testing::{explicit, ids, tabular};
    use crate::seqmodel::{TabularConfig, DEFAULT_NODE_BUDGET};

    #[test]
    fn finds_the_mode_greedy_misses() {
        let m = explicit(&[("a b", 0.3), ("a c", 0.3), ("b", 0.4)]);
        let (best, stats) = exact_mode_with_stats(&m, &Sentence::empty(), DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(best.sentence.ids(), ids(&m, "b"));
        assert!((best.log_prob - 0.4f64.ln()).abs() < 1e-12);
        assert_eq!(stats.bound_violations, 0);
    }

    #[test]
    fn empty_mode_by_construction() {
        let eps = 1e-3;
        let m = explicit(&[("", 0.5), ("a", 0.5 - eps), ("b", eps)]);
        let best = exact_mode(&m, &Sentence::empty(), DEFAULT_NODE_BUDGET).unwrap();
        assert!(best.sentence.is_empty());
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let m = explicit(&[("b", 0.5), ("a c", 0.5)]);
        let best = exact_mode(&m, &Sentence::empty(), DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(best.sentence.ids(), ids(&m, "a c"));
    }

    #[test]
    fn tabular_mode() {
        let cfg = TabularConfig { smoothing: 0.0, ..TabularConfig::default() };
        let m = tabular(&[("x", "a"), ("x", "a"), ("x", "b")], cfg);
        let src = m.encode_source(&["x"]);
        let best = exact_mode(&m, &src, DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(best.sentence.ids(), ids(&m, "a"));
        assert!((best.log_prob - (2.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn budget_exhaustion_carries_the_incumbent() {
        let cfg = TabularConfig { smoothing: 1.0, max_len: 25, ..TabularConfig::default() };
        let m = tabular(&[("x", "a b c d"), ("x", "d c b a"), ("x", "a")], cfg);
        let src = m.encode_source(&["x"]);
        match exact_mode(&m, &src, 1) {
            Err(Error::BudgetExceeded { budget: 1, best_so_far }) => assert!(best_so_far.is_some()),
            other => panic!("unexpected {other:?}"),
        }
    }
}
