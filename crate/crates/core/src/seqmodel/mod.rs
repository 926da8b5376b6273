//! Token and sentence data model plus the locally normalised conditional
//! sequence models everything else is built on.
//!
//! A model maps `(source, target prefix)` to a categorical distribution over
//! the target vocabulary, EOS included. The probability of a full target is
//! the product of those per-step distributions, terminated by EOS. Every model
//! carries a hard length cap: once the prefix reaches `max_len` the only
//! continuation is EOS, which keeps the support finite.

mod corpus;
mod explicit;
mod support;
mod tabular;
mod vocab;

pub use corpus::{ParallelCorpus, ParallelPair};
pub use explicit::ExplicitDistributionModel;
pub use support::{enumerate_support, DEFAULT_NODE_BUDGET};
pub use tabular::{fit_tabular, SourceConditioning, TabularConditionalModel, TabularConfig};
pub use vocab::{Sentence, TokenId, Vocabulary, BOS_TOKEN, EOS, EOS_TOKEN, UNKNOWN};

use crate::error::{Error, Result};

/// Tolerance on the sum of every next-token distribution.
pub const NORMALISATION_TOLERANCE: f64 = 1e-9;

pub trait SequenceModel: Send + Sync {
    fn source_vocab(&self) -> &Vocabulary;

    fn target_vocab(&self) -> &Vocabulary;

    /// Longest target the model can emit.
    fn max_len(&self) -> usize;

    /// Next-token distribution over the whole target vocabulary.
    fn next_distribution(&self, source: &Sentence, prefix: &[TokenId]) -> Result<Vec<f64>>;

    /// Log-probability of `target` followed by EOS. Returns `-inf` when some
    /// step has probability zero.
    fn sequence_log_prob(&self, source: &Sentence, target: &[TokenId]) -> Result<f64> {
        check_prefix(self, target)?;
        let mut log_prob = 0.0;
        for j in 0..=target.len() {
            let dist = self.next_distribution(source, &target[..j])?;
            let next = target.get(j).copied().unwrap_or(EOS);
            let p = dist[next as usize];
            if p <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            log_prob += p.ln();
        }
        Ok(log_prob)
    }

    fn encode_source<S: AsRef<str>>(&self, tokens: &[S]) -> Sentence
    where
        Self: Sized,
    {
        self.source_vocab().encode_lossy(tokens)
    }
}

/// Rejects prefixes beyond the length cap or with ids outside the vocabulary.
pub(crate) fn check_prefix<M: SequenceModel + ?Sized>(model: &M, prefix: &[TokenId]) -> Result<()> {
    if prefix.len() > model.max_len() {
        return Err(Error::PrefixTooLong {
            len: prefix.len(),
            max_len: model.max_len(),
        });
    }
    let v = model.target_vocab().len() as TokenId;
    if let Some(bad) = prefix.iter().find(|&&t| t == EOS || t >= v) {
        return Err(Error::invalid(format!("target id {bad} is not a content token")));
    }
    Ok(())
}

/// Point mass on EOS over a vocabulary of size `v`.
pub(crate) fn eos_point_mass(v: usize) -> Vec<f64> {
    let mut dist = vec![0.0; v];
    dist[EOS as usize] = 1.0;
    dist
}
