use std::io::{BufRead, Write};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ScoredSentence;
use crate::error::{Error, Result};
use crate::seqmodel::{SequenceModel, Sentence, TokenId, Vocabulary, EOS};

/// Mixes `(seed, source index, replicate)` into one 64-bit seed with the
/// SplitMix64 finaliser, so every sample can be regenerated on its own.
pub fn derive_seed(seed: u64, source_index: u64, replicate: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(seed) ^ source_index) ^ replicate)
}

/// Draws one sentence by sampling each next token from the model until EOS.
/// The returned log-probability is accumulated from the same per-step
/// distributions, so it equals `sequence_log_prob` of the result.
pub fn ancestral_sample<M: SequenceModel + ?Sized>(model: &M, source: &Sentence, seed: u64) -> Result<ScoredSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ancestral_sample_with_rng(model, source, &mut rng)
}

pub fn ancestral_sample_with_rng<M: SequenceModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    source: &Sentence,
    rng: &mut R,
) -> Result<ScoredSentence> {
    let mut prefix: Vec<TokenId> = Vec::new();
    let mut log_prob = 0.0;
    loop {
        let dist = model.next_distribution(source, &prefix)?;
        let tok = draw_categorical(&dist, rng);
        log_prob += dist[tok as usize].ln();
        if tok == EOS {
            return Ok(ScoredSentence::unpenalised(Sentence::new(prefix), log_prob));
        }
        prefix.push(tok);
    }
}

fn draw_categorical<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> TokenId {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i as TokenId;
            }
        }
    }
    // Rounding left `acc` just below `u`.
    last_positive as TokenId
}

/// `S` ancestral samples for one source, with first-occurrence multiplicities.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub source: Sentence,
    pub source_index: u64,
    pub seed: u64,
    pub samples: Vec<ScoredSentence>,
    unique: IndexMap<Sentence, usize>,
}

impl SampleSet {
    pub fn new(source: Sentence, source_index: u64, seed: u64, samples: Vec<ScoredSentence>) -> Self {
        let mut unique = IndexMap::new();
        for s in &samples {
            *unique.entry(s.sentence.clone()).or_insert(0) += 1;
        }
        SampleSet {
            source,
            source_index,
            seed,
            samples,
            unique,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct sentences with multiplicities, in order of first occurrence.
    pub fn unique(&self) -> &IndexMap<Sentence, usize> {
        &self.unique
    }

    pub fn multiplicity(&self, sentence: &Sentence) -> usize {
        self.unique.get(sentence).copied().unwrap_or(0)
    }

    pub fn records(&self, vocab: &Vocabulary) -> Vec<SampleRecord> {
        self.samples
            .iter()
            .enumerate()
            .map(|(r, s)| SampleRecord {
                src_id: self.source_index,
                replicate: r as u64,
                tokens: vocab.decode(&s.sentence),
                log_prob: s.log_prob,
            })
            .collect()
    }

    pub fn write_jsonl<W: Write>(sets: &[SampleSet], vocab: &Vocabulary, out: &mut W) -> Result<()> {
        for set in sets {
            for rec in set.records(vocab) {
                serde_json::to_writer(&mut *out, &rec)?;
                out.write_all(b"\n").map_err(|e| Error::io("<samples>", e))?;
            }
        }
        Ok(())
    }

    /// Reads sample records back into sets grouped by `src_id` (ascending).
    /// The file does not carry sources or seeds; `sources[src_id]` supplies
    /// the former when given.
    pub fn read_jsonl<R: BufRead>(reader: R, vocab: &Vocabulary, sources: Option<&[Sentence]>) -> Result<Vec<SampleSet>> {
        let mut grouped: std::collections::BTreeMap<u64, Vec<SampleRecord>> = Default::default();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<samples>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SampleRecord = serde_json::from_str(&line)
                .map_err(|e| Error::invalid(format!("sample line {}: {e}", lineno + 1)))?;
            grouped.entry(rec.src_id).or_default().push(rec);
        }
        grouped
            .into_iter()
            .map(|(src_id, mut recs)| {
                recs.sort_by_key(|r| r.replicate);
                let samples = recs
                    .iter()
                    .map(|r| Ok(ScoredSentence::unpenalised(vocab.encode(&r.tokens)?, r.log_prob)))
                    .collect::<Result<Vec<_>>>()?;
                let source = match sources {
                    Some(srcs) => srcs
                        .get(src_id as usize)
                        .cloned()
                        .ok_or_else(|| Error::invalid(format!("no source for src_id {src_id}")))?,
                    None => Sentence::empty(),
                };
                Ok(SampleSet::new(source, src_id, 0, samples))
            })
            .collect()
    }
}

/// One line of the sample JSON-lines format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub src_id: u64,
    pub replicate: u64,
    pub tokens: Vec<String>,
    pub log_prob: f64,
}

/// Draws `S` samples; sample `r` uses `derive_seed(seed, source_index, r)`.
pub fn draw_sample_set<M: SequenceModel + ?Sized>(
    model: &M,
    source: &Sentence,
    source_index: u64,
    num_samples: usize,
    seed: u64,
) -> Result<SampleSet> {
    if num_samples == 0 {
        return Err(Error::config("sample size must be at least 1"));
    }
    let samples = (0..num_samples as u64)
        .into_par_iter()
        .map(|r| ancestral_sample(model, source, derive_seed(seed, source_index, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleSet::new(source.clone(), source_index, seed, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::testing::{explicit, ids};

    #[test]
    fn point_mass_always_yields_the_outcome() {
        let m = explicit(&[("a", 1.0)]);
        for seed in 0..20 {
            let s = ancestral_sample(&m, &Sentence::empty(), seed).unwrap();
            assert_eq!(s.sentence.ids(), ids(&m, "a"));
            assert_eq!(s.log_prob, 0.0);
        }
        let set = draw_sample_set(&m, &Sentence::empty(), 0, 3, 7).unwrap();
        assert_eq!(set.unique().len(), 1);
        assert_eq!(set.unique()[0], 3);
    }

    #[test]
    fn binomial_frequency_within_three_sigma() {
        let m = explicit(&[("a", 0.7), ("b", 0.3)]);
        let set = draw_sample_set(&m, &Sentence::empty(), 0, 10_000, 11).unwrap();
        let a = Sentence::new(ids(&m, "a"));
        let freq = set.multiplicity(&a) as f64 / 10_000.0;
        // 3 * sqrt(0.7 * 0.3 / 10000) = 0.01375
        assert!((freq - 0.7).abs() <= 0.0138, "{freq}");
        assert!(set.unique().len() <= 2);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let m = explicit(&[("a b", 0.2), ("a", 0.3), ("b c a", 0.5)]);
        let a = ancestral_sample(&m, &Sentence::empty(), 42).unwrap();
        let b = ancestral_sample(&m, &Sentence::empty(), 42).unwrap();
        assert_eq!(a, b);
        let set = draw_sample_set(&m, &Sentence::empty(), 5, 50, 9).unwrap();
        let again = draw_sample_set(&m, &Sentence::empty(), 5, 50, 9).unwrap();
        assert_eq!(set, again);
        // Any single replicate can be regenerated in isolation.
        let lone = ancestral_sample(&m, &Sentence::empty(), derive_seed(9, 5, 17)).unwrap();
        assert_eq!(lone, set.samples[17]);
    }

    #[test]
    fn log_probs_match_recomputation() {
        let m = explicit(&[("a b", 0.2), ("a", 0.3), ("b c a", 0.5)]);
        let set = draw_sample_set(&m, &Sentence::empty(), 0, 200, 3).unwrap();
        for s in &set.samples {
            let lp = m.sequence_log_prob(&Sentence::empty(), s.sentence.ids()).unwrap();
            assert!((lp - s.log_prob).abs() <= 1e-12);
        }
        assert_eq!(set.unique().values().sum::<usize>(), 200);
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..100)
            .flat_map(|i| (0..100).map(move |r| derive_seed(1, i, r)))
            .collect();
        assert_eq!(seeds.len(), 10_000);
        assert_ne!(derive_seed(1, 0, 1), derive_seed(1, 1, 0));
    }

    #[test]
    fn jsonl_roundtrip() {
        let m = explicit(&[("a b", 0.2), ("", 0.3), ("b", 0.5)]);
        let sets = vec![
            draw_sample_set(&m, &Sentence::empty(), 0, 5, 1).unwrap(),
            draw_sample_set(&m, &Sentence::empty(), 1, 4, 1).unwrap(),
        ];
        let mut buf = Vec::new();
        SampleSet::write_jsonl(&sets, m.target_vocab(), &mut buf).unwrap();
        let first = String::from_utf8(buf.clone()).unwrap();
        assert!(first.starts_with(r#"{"src_id":0,"replicate":0,"tokens":["#));
        let back = SampleSet::read_jsonl(&buf[..], m.target_vocab(), None).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].samples, sets[1].samples);
        assert_eq!(back[0].unique(), sets[0].unique());
    }

    #[test]
    fn zero_samples_rejected() {
        let m = explicit(&[("a", 1.0)]);
        assert!(draw_sample_set(&m, &Sentence::empty(), 0, 0, 0).is_err());
    }
}
