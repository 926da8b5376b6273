use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::ScoredSentence;
use crate::error::{Error, Result};
use crate::seqmodel::{SequenceModel, Sentence, TokenId, EOS};

pub const DEFAULT_MAX_BEAM_WIDTH: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamConfig {
    pub width: usize,
    /// Exponent `a` of the length penalty `((5 + |y|) / 6)^a`; 0 disables it.
    pub length_penalty: f64,
    pub max_width: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            width: 5,
            length_penalty: 0.0,
            max_width: DEFAULT_MAX_BEAM_WIDTH,
        }
    }
}

impl BeamConfig {
    pub fn with_width(width: usize) -> Self {
        BeamConfig {
            width,
            ..BeamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 1 {
            return Err(Error::config("beam width must be at least 1"));
        }
        if self.width > self.max_width {
            return Err(Error::config(format!(
                "beam width {} exceeds the configured maximum {}",
                self.width, self.max_width
            )));
        }
        if !(self.length_penalty.is_finite() && self.length_penalty >= 0.0) {
            return Err(Error::config("length penalty exponent must be finite and non-negative"));
        }
        Ok(())
    }
}

/// GNMT-style length normalisation of a log-probability.
pub fn length_penalty(log_prob: f64, len: usize, exponent: f64) -> f64 {
    if exponent == 0.0 {
        log_prob
    } else {
        log_prob / ((5.0 + len as f64) / 6.0).powf(exponent)
    }
}

struct Candidate {
    /// Parent tokens followed by the chosen token (EOS for completions).
    extended: Vec<TokenId>,
    log_prob: f64,
    score: f64,
}

impl Candidate {
    fn is_complete(&self) -> bool {
        self.extended.last() == Some(&EOS)
    }
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.extended.cmp(&b.extended))
}

/// Beam search over `(source)`.
///
/// Each step expands every live hypothesis by every token with non-zero
/// probability and keeps the `width` best candidates by search score, ties in
/// lexicographic order with EOS (id 0) first. Kept candidates that end in EOS
/// are set aside as finished. Without a length penalty the search stops as
/// soon as the best finished score is at least the best live score, since
/// extending a prefix can only lower its log-probability; with a penalty that
/// bound no longer holds and the search runs until no live hypothesis remains.
/// The length cap forces EOS, so at least one hypothesis always finishes.
pub fn beam_search<M: SequenceModel + ?Sized>(model: &M, source: &Sentence, config: &BeamConfig) -> Result<ScoredSentence> {
    config.validate()?;
    let a = config.length_penalty;
    let mut live: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<Candidate> = Vec::new();

    while !live.is_empty() {
        let mut candidates = Vec::new();
        for (prefix, lp) in &live {
            let dist = model.next_distribution(source, prefix)?;
            for (tok, &p) in dist.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let log_prob = lp + p.ln();
                let len = if tok as TokenId == EOS { prefix.len() } else { prefix.len() + 1 };
                let mut extended = Vec::with_capacity(prefix.len() + 1);
                extended.extend_from_slice(prefix);
                extended.push(tok as TokenId);
                candidates.push(Candidate {
                    extended,
                    log_prob,
                    score: length_penalty(log_prob, len, a),
                });
            }
        }
        candidates.sort_by(rank);
        candidates.truncate(config.width);

        live.clear();
        for c in candidates {
            if c.is_complete() {
                finished.push(c);
            } else {
                live.push((c.extended, c.log_prob));
            }
        }

        if a == 0.0 {
            let best_finished = finished.iter().map(|c| c.score).fold(f64::NEG_INFINITY, f64::max);
            let best_live = live.iter().map(|h| h.1).fold(f64::NEG_INFINITY, f64::max);
            if !finished.is_empty() && best_finished >= best_live {
                break;
            }
        }
    }

    finished.sort_by(rank);
    let best = finished
        .into_iter()
        .next()
        .ok_or_else(|| Error::Invariant("beam search finished no hypothesis".into()))?;
    let mut tokens = best.extended;
    tokens.pop();
    Ok(ScoredSentence {
        sentence: Sentence::new(tokens),
        log_prob: best.log_prob,
        search_score: best.score,
    })
}
