use std::collections::HashMap;

use super::{check_prefix, eos_point_mass, SequenceModel, Sentence, TokenId, Vocabulary, EOS};
use crate::error::{Error, Result};

/// Ranges at most this long are summed directly instead of through the
/// cumulative table, which avoids cancellation for small models.
const DIRECT_SUM_LIMIT: usize = 64;

#[derive(Clone, Debug)]
struct Table {
    /// Targets in lexicographic id order.
    targets: Vec<Sentence>,
    probs: Vec<f64>,
    /// `cumulative[i]` is the mass of `targets[..i]`.
    cumulative: Vec<f64>,
}

impl Table {
    fn mass(&self, lo: usize, hi: usize) -> f64 {
        if hi - lo <= DIRECT_SUM_LIMIT {
            self.probs[lo..hi].iter().sum()
        } else {
            self.cumulative[hi] - self.cumulative[lo]
        }
    }

    /// Index range of targets that start with `prefix`.
    fn range(&self, prefix: &[TokenId]) -> (usize, usize) {
        let lo = self.targets.partition_point(|t| t.ids() < prefix);
        let hi = lo + self.targets[lo..].partition_point(|t| t.ids().starts_with(prefix));
        (lo, hi)
    }
}

/// A finite, explicitly listed distribution over targets for each source.
///
/// The next-token conditionals are derived from the listed string
/// probabilities, so the induced sequence probabilities reproduce the list
/// exactly. Prefixes outside the support have no defined continuation; they
/// get a point mass on EOS.
#[derive(Clone, Debug)]
pub struct ExplicitDistributionModel {
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
    max_len: usize,
    tables: HashMap<Sentence, Table>,
}

pub type ExplicitEntries = Vec<(Vec<String>, Vec<(Vec<String>, f64)>)>;

impl ExplicitDistributionModel {
    /// Builds a model from `(source tokens, [(target tokens, probability)])`
    /// entries. Vocabularies are the lexicographically sorted observed tokens.
    pub fn new(entries: ExplicitEntries) -> Result<Self> {
        let source_vocab = Vocabulary::from_observed(
            entries.iter().flat_map(|(s, _)| s.iter().map(String::as_str)),
        )?;
        let target_vocab = Vocabulary::from_observed(
            entries
                .iter()
                .flat_map(|(_, ts)| ts.iter().flat_map(|(t, _)| t.iter().map(String::as_str))),
        )?;
        Self::with_vocabularies(source_vocab, target_vocab, entries)
    }

    pub fn with_vocabularies(
        source_vocab: Vocabulary,
        target_vocab: Vocabulary,
        entries: ExplicitEntries,
    ) -> Result<Self> {
        let mut tables = HashMap::with_capacity(entries.len());
        let mut max_len = 0;
        for (src, targets) in entries {
            let source = source_vocab.encode(&src)?;
            let mut rows = targets
                .iter()
                .map(|(t, p)| {
                    if !(p.is_finite() && *p > 0.0) {
                        return Err(Error::invalid(format!("probability {p} must be positive")));
                    }
                    Ok((target_vocab.encode(t)?, *p))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.sort_by(|a, b| a.0.cmp(&b.0));
            if rows.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::invalid("explicit targets must be distinct"));
            }
            let total: f64 = rows.iter().map(|r| r.1).sum();
            if (total - 1.0).abs() > super::NORMALISATION_TOLERANCE {
                return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
            }
            max_len = rows.iter().map(|r| r.0.len()).fold(max_len, usize::max);
            let mut cumulative = Vec::with_capacity(rows.len() + 1);
            let mut acc = 0.0;
            cumulative.push(acc);
            for (_, p) in &rows {
                acc += p;
                cumulative.push(acc);
            }
            let (targets, probs) = rows.into_iter().unzip();
            if tables.insert(source, Table { targets, probs, cumulative }).is_some() {
                return Err(Error::invalid("duplicate source in explicit model"));
            }
        }
        Ok(ExplicitDistributionModel {
            source_vocab,
            target_vocab,
            max_len,
            tables,
        })
    }

    /// One model for a single empty source, from whitespace-separated targets.
    pub fn single(entries: &[(&str, f64)]) -> Result<Self> {
        Self::new(vec![(Vec::new(), split_entries(entries))])
    }

    /// Several sources given as whitespace-separated strings.
    pub fn from_text(entries: &[(&str, &[(&str, f64)])]) -> Result<Self> {
        Self::new(
            entries
                .iter()
                .map(|(src, ts)| (split(src), split_entries(ts)))
                .collect(),
        )
    }

    /// Raises the length cap above the longest listed target.
    pub fn with_max_len(mut self, max_len: usize) -> Result<Self> {
        if max_len < self.max_len {
            return Err(Error::config(format!(
                "length cap {max_len} is below the longest listed target ({})",
                self.max_len
            )));
        }
        self.max_len = max_len;
        Ok(self)
    }

    /// The listed support for `source`, in lexicographic order.
    pub fn entries(&self, source: &Sentence) -> Result<Vec<(Sentence, f64)>> {
        let table = self.table(source)?;
        Ok(table.targets.iter().cloned().zip(table.probs.iter().copied()).collect())
    }

    pub fn sources(&self) -> impl Iterator<Item = &Sentence> {
        self.tables.keys()
    }

    fn table(&self, source: &Sentence) -> Result<&Table> {
        self.tables
            .get(source)
            .ok_or_else(|| Error::UnknownSource(source.ids().to_vec()))
    }
}

fn split(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

fn split_entries(entries: &[(&str, f64)]) -> Vec<(Vec<String>, f64)> {
    entries.iter().map(|(t, p)| (split(t), *p)).collect()
}

impl SequenceModel for ExplicitDistributionModel {
    fn source_vocab(&self) -> &Vocabulary {
        &self.source_vocab
    }

    fn target_vocab(&self) -> &Vocabulary {
        &self.target_vocab
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn next_distribution(&self, source: &Sentence, prefix: &[TokenId]) -> Result<Vec<f64>> {
        let table = self.table(source)?;
        check_prefix(self, prefix)?;
        let v = self.target_vocab.len();
        if prefix.len() == self.max_len {
            return Ok(eos_point_mass(v));
        }
        let (lo, hi) = table.range(prefix);
        let total = table.mass(lo, hi);
        if lo == hi || total <= 0.0 {
            return Ok(eos_point_mass(v));
        }
        let mut dist = vec![0.0; v];
        let depth = prefix.len();
        let mut i = lo;
        if table.targets[i].len() == depth {
            dist[EOS as usize] = table.probs[i] / total;
            i += 1;
        }
        while i < hi {
            let tok = table.targets[i].ids()[depth];
            let end = i + table.targets[i..hi].partition_point(|t| t.ids()[depth] == tok);
            dist[tok as usize] = table.mass(i, end) / total;
            i = end;
        }
        Ok(dist)
    }
}
