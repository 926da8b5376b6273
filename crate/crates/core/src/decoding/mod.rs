//! Ways of extracting target sentences from a model: unbiased ancestral
//! sampling, approximate mode search by beam search, and exact mode search by
//! branch-and-bound.

mod beam;
mod exact;
mod sampling;

pub use beam::{beam_search, length_penalty, BeamConfig, DEFAULT_MAX_BEAM_WIDTH};
pub use exact::{exact_mode, exact_mode_with_stats, ExactSearchStats};
pub use sampling::{
    ancestral_sample, ancestral_sample_with_rng, derive_seed, draw_sample_set, SampleRecord, SampleSet,
};

use serde::{Deserialize, Serialize};

use crate::seqmodel::Sentence;

/// A decoded sentence with its model log-probability and the score the search
/// ranked it by.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSentence {
    pub sentence: Sentence,
    pub log_prob: f64,
    /// Log-probability after the length penalty; equal to `log_prob` when the
    /// penalty is off.
    pub search_score: f64,
}

impl ScoredSentence {
    pub fn unpenalised(sentence: Sentence, log_prob: f64) -> Self {
        ScoredSentence {
            sentence,
            log_prob,
            search_score: log_prob,
        }
    }
}
