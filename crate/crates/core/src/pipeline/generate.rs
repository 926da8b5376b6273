//! Synthetic parallel corpora with a known generative process: token-wise
//! synonym translation, local swaps, and inserted function words.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqmodel::{ParallelCorpus, ParallelPair};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LengthDistribution {
    Uniform { min: usize, max: usize },
    /// Poisson with the given mean, clamped into `[min, max]`.
    Poisson { mean: f64, min: usize, max: usize },
}

impl LengthDistribution {
    fn bounds(&self) -> (usize, usize) {
        match *self {
            LengthDistribution::Uniform { min, max } | LengthDistribution::Poisson { min, max, .. } => (min, max),
        }
    }

    fn validate(&self) -> Result<()> {
        let (min, max) = self.bounds();
        if min == 0 || max < min {
            return Err(Error::config(format!("source length bounds [{min}, {max}] must satisfy 1 <= min <= max")));
        }
        if let LengthDistribution::Poisson { mean, .. } = self {
            if !(*mean > 0.0 && mean.is_finite()) {
                return Err(Error::config("source length mean must be positive"));
            }
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            LengthDistribution::Uniform { min, max } => rng.random_range(min..=max),
            LengthDistribution::Poisson { mean, min, max } => {
                let n = Poisson::new(mean).expect("validated").sample(rng) as usize;
                n.clamp(min, max)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub source_vocab: usize,
    /// Number of distinct target content tokens.
    pub target_vocab: usize,
    pub pairs: usize,
    /// Target synonyms per source token.
    pub synonyms: usize,
    /// Choice probabilities over the synonyms; one entry per synonym.
    pub synonym_probs: Vec<f64>,
    /// Probability of swapping each visited adjacent target pair.
    pub swap_prob: f64,
    /// Mean number of function words inserted per sentence.
    pub function_word_rate: f64,
    pub function_words: usize,
    pub source_length: LengthDistribution,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            source_vocab: 30,
            target_vocab: 60,
            pairs: 5000,
            synonyms: 2,
            synonym_probs: vec![0.6, 0.4],
            swap_prob: 0.1,
            function_word_rate: 0.5,
            function_words: 4,
            source_length: LengthDistribution::Uniform { min: 3, max: 10 },
            seed: 0,
        }
    }
}

impl CorpusConfig {
    /// Synonym translation only: no swaps, no function words.
    pub fn noise_free(mut self) -> Self {
        self.swap_prob = 0.0;
        self.function_word_rate = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_vocab == 0 || self.target_vocab == 0 {
            return Err(Error::config("vocabulary sizes must be positive"));
        }
        if self.synonyms == 0 {
            return Err(Error::config("synonyms must be at least 1"));
        }
        if self.synonym_probs.len() != self.synonyms {
            return Err(Error::config(format!(
                "synonym_probs has {} entries for {} synonyms",
                self.synonym_probs.len(),
                self.synonyms
            )));
        }
        if self.synonym_probs.iter().any(|p| !(0.0..=1.0).contains(p))
            || (self.synonym_probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::config("synonym_probs must lie in [0, 1] and sum to 1"));
        }
        if !(0.0..=1.0).contains(&self.swap_prob) {
            return Err(Error::config("swap_prob must lie in [0, 1]"));
        }
        if !(self.function_word_rate >= 0.0 && self.function_word_rate.is_finite()) {
            return Err(Error::config("function_word_rate must be finite and non-negative"));
        }
        if self.function_word_rate > 0.0 && self.function_words == 0 {
            return Err(Error::config("function words are inserted but none are defined"));
        }
        self.source_length.validate()
    }

    pub fn source_token(i: usize) -> String {
        format!("s{i}")
    }

    /// The j-th synonym of source token i.
    pub fn synonym(&self, i: usize, j: usize) -> String {
        format!("t{}", (i * self.synonyms + j) % self.target_vocab)
    }

    pub fn function_word(k: usize) -> String {
        format!("f{k}")
    }
}

/// Draws translations of given sources under the corpus process.
pub struct Translator<'a> {
    config: &'a CorpusConfig,
    choice: WeightedIndex<f64>,
    insertions: Option<Poisson<f64>>,
}

impl<'a> Translator<'a> {
    pub fn new(config: &'a CorpusConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            choice: WeightedIndex::new(&config.synonym_probs).map_err(|e| Error::config(e.to_string()))?,
            insertions: (config.function_word_rate > 0.0)
                .then(|| Poisson::new(config.function_word_rate).expect("validated")),
        })
    }

    /// `source` holds source token indices.
    pub fn translate<R: Rng + ?Sized>(&self, source: &[usize], rng: &mut R) -> Vec<String> {
        let mut out: Vec<String> = source
            .iter()
            .map(|&i| self.config.synonym(i, self.choice.sample(rng)))
            .collect();
        // Left to right; a swapped pair is not revisited.
        let mut i = 0;
        while i + 1 < out.len() {
            if self.config.swap_prob > 0.0 && rng.random_bool(self.config.swap_prob) {
                out.swap(i, i + 1);
                i += 2;
            } else {
                i += 1;
            }
        }
        if let Some(p) = &self.insertions {
            let k = p.sample(rng) as usize;
            for _ in 0..k {
                let at = rng.random_range(0..=out.len());
                let word = CorpusConfig::function_word(rng.random_range(0..self.config.function_words));
                out.insert(at, word);
            }
        }
        out
    }
}

pub fn generate_corpus(config: &CorpusConfig) -> Result<ParallelCorpus> {
    let translator = Translator::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pairs = (0..config.pairs)
        .map(|_| {
            let n = config.source_length.sample(&mut rng);
            let src: Vec<usize> = (0..n).map(|_| rng.random_range(0..config.source_vocab)).collect();
            let tgt = translator.translate(&src, &mut rng);
            let src: Vec<String> = src.into_iter().map(CorpusConfig::source_token).collect();
            ParallelPair::new(&src, &tgt)
        })
        .collect();
    Ok(ParallelCorpus::new(pairs))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    #[test]
    fn noise_free_single_synonym_is_a_relabeling() {
        let cfg = CorpusConfig {
            synonyms: 1,
            synonym_probs: vec![1.0],
            pairs: 300,
            ..CorpusConfig::default()
        }
        .noise_free();
        let corpus = generate_corpus(&cfg).unwrap();
        for pair in corpus.iter() {
            let want: Vec<String> = pair
                .src
                .iter()
                .map(|s| cfg.synonym(s[1..].parse().unwrap(), 0))
                .collect();
            assert_eq!(pair.tgt, want);
        }
    }

    #[test]
    fn two_uniform_synonyms_give_all_combinations() {
        let cfg = CorpusConfig {
            synonym_probs: vec![0.5, 0.5],
            ..CorpusConfig::default()
        }
        .noise_free();
        let t = Translator::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts: BTreeMap<Vec<String>, usize> = BTreeMap::new();
        let draws = 16_000;
        for _ in 0..draws {
            *counts.entry(t.translate(&[0, 4, 7, 2], &mut rng)).or_default() += 1;
        }
        assert_eq!(counts.len(), 16);
        // each outcome has probability 1/16: 4 sigma = 4 * sqrt(16000 / 16 * 15 / 16)
        for c in counts.values() {
            assert!((*c as f64 - 1000.0).abs() < 4.0 * (1000.0f64 * 15.0 / 16.0).sqrt(), "{c}");
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let cfg = CorpusConfig {
            pairs: 200,
            seed: 9,
            ..CorpusConfig::default()
        };
        assert_eq!(generate_corpus(&cfg).unwrap(), generate_corpus(&cfg).unwrap());
        let other = CorpusConfig { seed: 10, ..cfg.clone() };
        assert_ne!(generate_corpus(&cfg).unwrap(), generate_corpus(&other).unwrap());
    }

    #[test]
    fn noise_changes_length_and_order() {
        let cfg = CorpusConfig {
            function_word_rate: 2.0,
            swap_prob: 0.5,
            pairs: 500,
            ..CorpusConfig::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        let extra: usize = corpus.iter().map(|p| p.tgt.len() - p.src.len()).sum();
        let mean = extra as f64 / 500.0;
        assert!((mean - 2.0).abs() < 0.3, "{mean}");
        assert!(corpus.iter().all(|p| p.tgt.iter().all(|t| t.starts_with('t') || t.starts_with('f'))));
    }

    #[test]
    fn invalid_configs() {
        let base = CorpusConfig::default();
        let cases = [
            CorpusConfig { synonyms: 0, ..base.clone() },
            CorpusConfig { synonym_probs: vec![0.5, 0.6], ..base.clone() },
            CorpusConfig { synonym_probs: vec![1.0], ..base.clone() },
            CorpusConfig { swap_prob: 1.5, ..base.clone() },
            CorpusConfig { function_word_rate: -1.0, ..base.clone() },
            CorpusConfig { function_words: 0, ..base.clone() },
            CorpusConfig { source_length: LengthDistribution::Uniform { min: 0, max: 3 }, ..base.clone() },
            CorpusConfig { source_length: LengthDistribution::Uniform { min: 4, max: 3 }, ..base.clone() },
            CorpusConfig { target_vocab: 0, ..base },
        ];
        for cfg in cases {
            assert!(matches!(generate_corpus(&cfg), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}
