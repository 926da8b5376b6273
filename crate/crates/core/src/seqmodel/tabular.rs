use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{
    check_prefix, eos_point_mass, ParallelCorpus, SequenceModel, Sentence, TokenId, Vocabulary, EOS,
};
use crate::error::{Error, Result};

/// How the tabular model looks at the source sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceConditioning {
    /// Contexts are keyed on the whole source sentence.
    Identity,
    /// Contexts are keyed on the source tokens within `window` positions of
    /// the target position being predicted, with sentinels past either end.
    Aligned { window: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TabularConfig {
    /// Markov order over the target prefix.
    pub order: usize,
    /// Additive smoothing weight applied over the vocabulary plus EOS.
    pub smoothing: f64,
    pub max_len: usize,
    pub conditioning: SourceConditioning,
}

impl Default for TabularConfig {
    fn default() -> Self {
        TabularConfig {
            order: 1,
            smoothing: 0.01,
            max_len: 25,
            conditioning: SourceConditioning::Identity,
        }
    }
}

impl TabularConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::config("Markov order must be at least 1"));
        }
        if self.max_len < 1 {
            return Err(Error::config("maximum target length must be at least 1"));
        }
        if !(self.smoothing.is_finite() && self.smoothing >= 0.0) {
            return Err(Error::config("smoothing must be finite and non-negative"));
        }
        Ok(())
    }
}

const BEFORE_START: TokenId = TokenId::MAX - 1;
const PAST_END: TokenId = TokenId::MAX - 2;
const BOS_PAD: TokenId = TokenId::MAX - 3;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
struct ContextKey {
    source: Option<Vec<TokenId>>,
    history: Vec<TokenId>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Counts {
    total: u64,
    /// Sparse `(token, count)` pairs sorted by token.
    entries: Vec<(TokenId, u64)>,
}

impl Counts {
    fn add(&mut self, token: TokenId) {
        self.total += 1;
        match self.entries.binary_search_by_key(&token, |&(t, _)| t) {
            Ok(i) => self.entries[i].1 += 1,
            Err(i) => self.entries.insert(i, (token, 1)),
        }
    }
}

/// Count-based Markov-`k` conditional model fitted by (smoothed) maximum
/// likelihood.
///
/// Contexts that never occurred in training back off, first to shorter target
/// histories under the same source signature and then to source-agnostic
/// contexts, so every `(source, prefix)` has a well-defined distribution.
/// Observed contexts are never backed off, so with zero smoothing the
/// conditionals are exactly the empirical relative frequencies.
#[derive(Clone, Debug)]
pub struct TabularConditionalModel {
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
    config: TabularConfig,
    tables: HashMap<ContextKey, Counts>,
}

pub fn fit_tabular(corpus: &ParallelCorpus, config: &TabularConfig) -> Result<TabularConditionalModel> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::config("cannot fit a model on an empty corpus"));
    }
    let source_vocab =
        Vocabulary::from_observed(corpus.iter().flat_map(|p| p.src.iter().map(String::as_str)))?;
    let target_vocab =
        Vocabulary::from_observed(corpus.iter().flat_map(|p| p.tgt.iter().map(String::as_str)))?;
    let mut model = TabularConditionalModel {
        source_vocab,
        target_vocab,
        config: config.clone(),
        tables: HashMap::new(),
    };
    for pair in corpus.iter() {
        let source = model.source_vocab.encode(&pair.src)?;
        let target = model.target_vocab.encode(&pair.tgt)?;
        let ids = target.ids();
        let last = ids.len().min(config.max_len - 1);
        for j in 0..=last {
            let next = ids.get(j).copied().unwrap_or(EOS);
            for key in model.backoff_chain(&source, &ids[..j]) {
                model.tables.entry(key).or_default().add(next);
            }
        }
    }
    Ok(model)
}

impl TabularConditionalModel {
    pub fn config(&self) -> &TabularConfig {
        &self.config
    }

    fn signature(&self, source: &Sentence, position: usize) -> Vec<TokenId> {
        match self.config.conditioning {
            SourceConditioning::Identity => source.ids().to_vec(),
            SourceConditioning::Aligned { window } => {
                let ids = source.ids();
                let pos = position as i64;
                (pos - window as i64..=pos + window as i64)
                    .map(|i| {
                        if i < 0 {
                            BEFORE_START
                        } else {
                            ids.get(i as usize).copied().unwrap_or(PAST_END)
                        }
                    })
                    .collect()
            }
        }
    }

    /// Context keys from most to least specific.
    fn backoff_chain(&self, source: &Sentence, prefix: &[TokenId]) -> Vec<ContextKey> {
        let k = self.config.order;
        let sig = self.signature(source, prefix.len());
        let mut chain = Vec::with_capacity(2 * (k + 1));
        for src in [Some(sig), None] {
            for m in (0..=k).rev() {
                let history = (0..m)
                    .map(|back| {
                        let j = prefix.len() as i64 - m as i64 + back as i64;
                        if j < 0 {
                            BOS_PAD
                        } else {
                            prefix[j as usize]
                        }
                    })
                    .collect();
                chain.push(ContextKey {
                    source: src.clone(),
                    history,
                });
            }
        }
        chain
    }

    /// Serialises to a self-describing JSON document.
    pub fn to_json(&self) -> Result<String> {
        let mut tables: Vec<TableEntry> = self
            .tables
            .iter()
            .map(|(key, counts)| TableEntry {
                source: key.source.clone(),
                history: key.history.clone(),
                counts: counts.entries.clone(),
            })
            .collect();
        tables.sort_by(|a, b| (&a.source, &a.history).cmp(&(&b.source, &b.history)));
        let doc = ModelDocument {
            format: MODEL_FORMAT.to_string(),
            source_vocab: self.source_vocab.clone(),
            target_vocab: self.target_vocab.clone(),
            order: self.config.order,
            smoothing: self.config.smoothing,
            max_len: self.config.max_len,
            conditioning: self.config.conditioning,
            tables,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(json)?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::invalid(format!("unsupported model format {:?}", doc.format)));
        }
        let config = TabularConfig {
            order: doc.order,
            smoothing: doc.smoothing,
            max_len: doc.max_len,
            conditioning: doc.conditioning,
        };
        config.validate()?;
        let v = doc.target_vocab.len() as TokenId;
        let mut tables = HashMap::with_capacity(doc.tables.len());
        for entry in doc.tables {
            if entry.counts.iter().any(|&(t, _)| t >= v) {
                return Err(Error::invalid("count table refers to a token outside the vocabulary"));
            }
            let total = entry.counts.iter().map(|&(_, c)| c).sum();
            let key = ContextKey {
                source: entry.source,
                history: entry.history,
            };
            tables.insert(key, Counts { total, entries: entry.counts });
        }
        if !tables.contains_key(&ContextKey { source: None, history: vec![] }) {
            return Err(Error::invalid("model document lacks the unconditioned count table"));
        }
        Ok(TabularConditionalModel {
            source_vocab: doc.source_vocab,
            target_vocab: doc.target_vocab,
            config,
            tables,
        })
    }
}

const MODEL_FORMAT: &str = "modecheck-tabular-v1";

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
    order: usize,
    smoothing: f64,
    max_len: usize,
    conditioning: SourceConditioning,
    tables: Vec<TableEntry>,
}

#[derive(Serialize, Deserialize)]
struct TableEntry {
    source: Option<Vec<TokenId>>,
    history: Vec<TokenId>,
    counts: Vec<(TokenId, u64)>,
}

impl SequenceModel for TabularConditionalModel {
    fn source_vocab(&self) -> &Vocabulary {
        &self.source_vocab
    }

    fn target_vocab(&self) -> &Vocabulary {
        &self.target_vocab
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn next_distribution(&self, source: &Sentence, prefix: &[TokenId]) -> Result<Vec<f64>> {
        check_prefix(self, prefix)?;
        let v = self.target_vocab.len();
        if prefix.len() == self.config.max_len {
            return Ok(eos_point_mass(v));
        }
        let counts = self
            .backoff_chain(source, prefix)
            .into_iter()
            .find_map(|key| self.tables.get(&key).filter(|c| c.total > 0))
            .ok_or_else(|| Error::Invariant("model has no unconditioned counts".into()))?;
        let lambda = self.config.smoothing;
        let norm = counts.total as f64 + lambda * v as f64;
        let mut dist = vec![lambda / norm; v];
        for &(tok, c) in &counts.entries {
            dist[tok as usize] = (c as f64 + lambda) / norm;
        }
        Ok(dist)
    }
}
