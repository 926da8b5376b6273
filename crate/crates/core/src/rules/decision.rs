use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Utility;
use crate::decoding::{SampleSet, ScoredSentence};
use crate::error::{Error, Result};
use crate::seqmodel::{enumerate_support, SequenceModel, Sentence, Vocabulary};

/// Outcome of an expected-utility decision rule.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionResult {
    pub chosen: Sentence,
    pub expected_utility: f64,
    /// Every candidate with its expected utility, in candidate order.
    pub candidates: Vec<(Sentence, f64)>,
}

impl DecisionResult {
    /// Picks the maximum only after all expected utilities are known, so the
    /// result does not depend on evaluation order.
    fn from_candidates(candidates: Vec<(Sentence, f64)>) -> Result<Self> {
        let (chosen, expected_utility) = candidates
            .iter()
            .min_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)))
            .cloned()
            .ok_or(Error::EmptySampleSet)?;
        Ok(DecisionResult {
            chosen,
            expected_utility,
            candidates,
        })
    }

    pub fn record(&self, vocab: &Vocabulary, with_table: bool) -> DecisionRecord {
        DecisionRecord {
            chosen: vocab.decode(&self.chosen),
            expected_utility: self.expected_utility,
            candidates: with_table.then(|| {
                self.candidates
                    .iter()
                    .map(|(s, eu)| CandidateRecord {
                        tokens: vocab.decode(s),
                        expected_utility: *eu,
                    })
                    .collect()
            }),
        }
    }
}

/// Serialised form of a [`DecisionResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub chosen: Vec<String>,
    pub expected_utility: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<CandidateRecord>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub tokens: Vec<String>,
    pub expected_utility: f64,
}

/// Monte-Carlo estimate `(1/S) sum_s u(y_s, h)` over every sample, duplicates
/// included.
pub fn estimate_expected_utility<U: Utility + ?Sized>(samples: &SampleSet, hypothesis: &Sentence, utility: &U) -> f64 {
    let total: f64 = samples
        .samples
        .iter()
        .map(|y| utility.score(y.sentence.ids(), hypothesis.ids()))
        .sum();
    total / samples.len() as f64
}

/// Sampling-based minimum Bayes risk decoding.
///
/// Candidates are the distinct sampled sentences; each is scored against all
/// `S` samples, so the rule costs exactly `|unique| * S` utility calls.
pub fn mbr_decode<U: Utility + ?Sized>(samples: &SampleSet, utility: &U) -> Result<DecisionResult> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let candidates: Vec<Sentence> = samples.unique().keys().cloned().collect();
    let scored = candidates
        .into_par_iter()
        .map(|h| {
            let eu = estimate_expected_utility(samples, &h, utility);
            (h, eu)
        })
        .collect();
    DecisionResult::from_candidates(scored)
}

/// Minimum Bayes risk over the model's full support with exact
/// probabilities. Only feasible when the support can be enumerated.
pub fn exact_mbr<M, U>(model: &M, source: &Sentence, utility: &U, node_budget: u64) -> Result<DecisionResult>
where
    M: SequenceModel + ?Sized,
    U: Utility + ?Sized,
{
    let support = enumerate_support(model, source, node_budget)?;
    let scored = support
        .par_iter()
        .map(|(h, _)| (h.clone(), exact_expected_utility(&support, h, utility)))
        .collect();
    DecisionResult::from_candidates(scored)
}

/// `sum_y p(y) u(y, h)` over an enumerated support.
pub fn exact_expected_utility<U: Utility + ?Sized>(support: &[(Sentence, f64)], hypothesis: &Sentence, utility: &U) -> f64 {
    support
        .iter()
        .map(|(y, p)| p * utility.score(y.ids(), hypothesis.ids()))
        .sum()
}

/// The sample closest to a known reference. An upper bound on what any rule
/// choosing among the samples can achieve, not a usable decision rule.
pub fn oracle_select<U: Utility + ?Sized>(samples: &SampleSet, reference: &Sentence, utility: &U) -> Result<ScoredSentence> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let (best, _) = samples
        .unique()
        .keys()
        .map(|h| (h, utility.score(reference.ids(), h.ids())))
        .min_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)))
        .expect("non-empty sample set");
    let scored = samples
        .samples
        .iter()
        .find(|s| &s.sentence == best)
        .expect("unique index mirrors the samples");
    Ok(scored.clone())
}
