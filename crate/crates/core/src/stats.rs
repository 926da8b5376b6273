//! Statistics extracted from groups of sentences and from sample sets: length
//! and n-gram tables, probability-mass coverage, and the mode and
//! empty-string diagnostics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decoding::SampleSet;
use crate::error::{Error, Result};
use crate::seqmodel::{SequenceModel, Sentence, TokenId};

/// Where a group of sentences came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Training,
    Reference,
    Sampling,
    Beam,
}

impl Group {
    pub const TEST_GROUPS: [Group; 3] = [Group::Reference, Group::Sampling, Group::Beam];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Training => "training",
            Group::Reference => "reference",
            Group::Sampling => "sampling",
            Group::Beam => "beam",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" => Ok(Group::Training),
            "reference" => Ok(Group::Reference),
            "sampling" => Ok(Group::Sampling),
            "beam" => Ok(Group::Beam),
            other => Err(Error::invalid(format!("unknown group label {other:?}"))),
        }
    }
}

pub type Bigram = (TokenId, TokenId);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStatistics {
    pub group: Group,
    pub lengths: Vec<u64>,
    pub unigrams: BTreeMap<TokenId, u64>,
    /// Adjacent pairs; sentence boundaries are not tokens here.
    pub bigrams: BTreeMap<Bigram, u64>,
    /// All ordered pairs `(y_i, y_j)` with `i < j`.
    pub skip_bigrams: BTreeMap<Bigram, u64>,
}

pub fn extract_group_statistics<'a, I>(sentences: I, group: Group) -> GroupStatistics
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let mut stats = GroupStatistics {
        group,
        lengths: Vec::new(),
        unigrams: BTreeMap::new(),
        bigrams: BTreeMap::new(),
        skip_bigrams: BTreeMap::new(),
    };
    for sentence in sentences {
        let ids = sentence.ids();
        stats.lengths.push(ids.len() as u64);
        for (i, &a) in ids.iter().enumerate() {
            *stats.unigrams.entry(a).or_default() += 1;
            if let Some(&b) = ids.get(i + 1) {
                *stats.bigrams.entry((a, b)).or_default() += 1;
            }
            for &b in &ids[i + 1..] {
                *stats.skip_bigrams.entry((a, b)).or_default() += 1;
            }
        }
    }
    stats
}

impl GroupStatistics {
    pub fn total_length(&self) -> u64 {
        self.lengths.iter().sum()
    }

    pub fn mean_length(&self) -> f64 {
        if self.lengths.is_empty() {
            0.0
        } else {
            self.total_length() as f64 / self.lengths.len() as f64
        }
    }
}

/// Running probability mass of the distinct sentences in a sample stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassCurve {
    pub source_index: u64,
    /// `curve[t]` is the mass of distinct sentences among the first `t + 1`
    /// samples.
    pub curve: Vec<f64>,
    pub unique: usize,
}

impl MassCurve {
    pub fn coverage(&self) -> f64 {
        self.curve.last().copied().unwrap_or(0.0)
    }
}

/// Each distinct sentence contributes its exact model probability once, at
/// its first occurrence. Probabilities are recomputed from the model rather
/// than trusted from the sample records.
pub fn mass_curve<M: SequenceModel + ?Sized>(model: &M, source: &Sentence, samples: &SampleSet) -> Result<MassCurve> {
    let mut seen = std::collections::HashSet::new();
    let mut acc = 0.0;
    let mut curve = Vec::with_capacity(samples.len());
    for s in &samples.samples {
        if seen.insert(&s.sentence) {
            acc += model.sequence_log_prob(source, s.sentence.ids())?.exp();
        }
        curve.push(acc);
    }
    Ok(MassCurve {
        source_index: samples.source_index,
        curve,
        unique: seen.len(),
    })
}

pub fn beam_in_samples(beam_output: &Sentence, samples: &SampleSet) -> bool {
    samples.unique().contains_key(beam_output)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmptyStringStats {
    pub occurred: bool,
    pub count: usize,
}

pub fn empty_string_stats(samples: &SampleSet) -> EmptyStringStats {
    let count = samples.multiplicity(&Sentence::empty());
    EmptyStringStats {
        occurred: count > 0,
        count,
    }
}

/// Fraction of sources whose samples are all distinct. Zero for no sources.
pub fn all_unique_rate(sample_sets: &[SampleSet]) -> f64 {
    if sample_sets.is_empty() {
        return 0.0;
    }
    let all_unique = sample_sets
        .iter()
        .filter(|s| !s.is_empty() && s.unique().len() == s.len())
        .count();
    all_unique as f64 / sample_sets.len() as f64
}
