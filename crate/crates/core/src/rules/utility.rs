use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqmodel::TokenId;

/// A deterministic similarity `u(reference, hypothesis)` in `[0, 1]`.
/// Symmetry is not assumed anywhere.
pub trait Utility: Send + Sync {
    fn name(&self) -> &str;

    fn score(&self, reference: &[TokenId], hypothesis: &[TokenId]) -> f64;
}

impl<U: Utility + ?Sized> Utility for &U {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn score(&self, reference: &[TokenId], hypothesis: &[TokenId]) -> f64 {
        (**self).score(reference, hypothesis)
    }
}

impl<U: Utility + ?Sized> Utility for Box<U> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn score(&self, reference: &[TokenId], hypothesis: &[TokenId]) -> f64 {
        (**self).score(reference, hypothesis)
    }
}

/// 1 if the token sequences are identical, else 0. Maximising its expectation
/// is the same as searching for the mode.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExactMatch;

impl Utility for ExactMatch {
    fn name(&self) -> &str {
        "exact-match"
    }

    fn score(&self, reference: &[TokenId], hypothesis: &[TokenId]) -> f64 {
        if reference == hypothesis {
            1.0
        } else {
            0.0
        }
    }
}

/// Clipped unigram overlap between two sentences.
fn unigram_matches(a: &[TokenId], b: &[TokenId]) -> usize {
    let mut counts: HashMap<TokenId, usize> = HashMap::new();
    for &t in a {
        *counts.entry(t).or_default() += 1;
    }
    let mut m = 0;
    for t in b {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                m += 1;
            }
        }
    }
    m
}

/// Harmonic mean of clipped unigram precision and recall.
#[derive(Clone, Copy, Debug, Default)]
pub struct UnigramF1;

impl Utility for UnigramF1 {
    fn name(&self) -> &str {
        "unigram-f1"
    }

    fn score(&self, reference: &[TokenId], hypothesis: &[TokenId]) -> f64 {
        match (reference.is_empty(), hypothesis.is_empty()) {
            (true, true) => return 1.0,
            (true, false) | (false, true) => return 0.0,
            _ => {}
        }
        let m = unigram_matches(reference, hypothesis) as f64;
        2.0 * m / (reference.len() + hypothesis.len()) as f64
    }
}

/// Clipped unigram precision of the hypothesis. Deliberately asymmetric.
#[derive(Clone, Copy, Debug, Default)]
pub struct UnigramPrecision;

impl Utility for UnigramPrecision {
    fn name(&self) -> &str {
        "unigram-precision"
    }

    fn score(&self, reference: &[TokenId], hypothesis: &[TokenId]) -> f64 {
        match (reference.is_empty(), hypothesis.is_empty()) {
            (true, true) => return 1.0,
            (true, false) | (false, true) => return 0.0,
            _ => {}
        }
        unigram_matches(reference, hypothesis) as f64 / hypothesis.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeteorParams {
    /// Weight of precision in the harmonic mean; 0.9 gives `10PR / (R + 9P)`.
    pub alpha: f64,
    /// Maximum fragmentation penalty.
    pub gamma: f64,
    /// Exponent on the chunks-per-match ratio.
    pub beta: f64,
}

impl Default for MeteorParams {
    fn default() -> Self {
        MeteorParams {
            alpha: 0.9,
            gamma: 0.5,
            beta: 3.0,
        }
    }
}

impl MeteorParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.alpha) || !unit(self.gamma) || !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::config("METEOR-lite needs alpha, gamma in [0, 1] and beta > 0"));
        }
        Ok(())
    }
}

/// Sentence-level METEOR restricted to exact unigram matches.
///
/// The alignment is a maximum one-to-one matching of identical tokens that
/// uses as few chunks (runs contiguous and in the same order on both sides)
/// as possible. With `m` matches, `P = m/|h|`, `R = m/|y|`,
/// `Fmean = PR / (alpha P + (1 - alpha) R)` and the score is
/// `Fmean * (1 - gamma (chunks/m)^beta)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct MeteorLite {
    pub params: MeteorParams,
}

impl MeteorLite {
    pub fn new(params: MeteorParams) -> Result<Self> {
        params.validate()?;
        Ok(MeteorLite { params })
    }
}

impl Utility for MeteorLite {
    fn name(&self) -> &str {
        "meteor-lite"
    }

    fn score(&self, reference: &[TokenId], hypothesis: &[TokenId]) -> f64 {
        match (reference.is_empty(), hypothesis.is_empty()) {
            (true, true) => return 1.0,
            (true, false) | (false, true) => return 0.0,
            _ => {}
        }
        let Alignment { matches, chunks } = align(reference, hypothesis);
        if matches == 0 {
            return 0.0;
        }
        let m = matches as f64;
        let p = m / hypothesis.len() as f64;
        let r = m / reference.len() as f64;
        let MeteorParams { alpha, gamma, beta } = self.params;
        let fmean = p * r / (alpha * p + (1.0 - alpha) * r);
        let penalty = gamma * (chunks as f64 / m).powf(beta);
        fmean * (1.0 - penalty)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
}

/// Sentences up to this length get the exact minimum-chunk search.
const EXACT_ALIGNMENT_MAX_LEN: usize = 20;
/// Memo size at which the exact search gives up in favour of the greedy one.
const EXACT_ALIGNMENT_MAX_STATES: usize = 200_000;

/// Maximum one-to-one exact alignment with the fewest chunks.
pub fn align(reference: &[TokenId], hypothesis: &[TokenId]) -> Alignment {
    if reference.len() <= EXACT_ALIGNMENT_MAX_LEN && hypothesis.len() <= EXACT_ALIGNMENT_MAX_LEN {
        if let Some(a) = exact_alignment(reference, hypothesis) {
            return a;
        }
    }
    greedy_alignment(reference, hypothesis)
}

/// Repeatedly aligns the longest common run of still-unaligned tokens
/// (leftmost in the hypothesis on ties). Exact when no token repeats.
pub fn greedy_alignment(reference: &[TokenId], hypothesis: &[TokenId]) -> Alignment {
    let mut ref_used = vec![false; reference.len()];
    let mut hyp_used = vec![false; hypothesis.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    loop {
        let mut best = (0, 0, 0);
        for i in 0..hypothesis.len() {
            for j in 0..reference.len() {
                let mut len = 0;
                while i + len < hypothesis.len()
                    && j + len < reference.len()
                    && !hyp_used[i + len]
                    && !ref_used[j + len]
                    && hypothesis[i + len] == reference[j + len]
                {
                    len += 1;
                }
                if len > best.2 {
                    best = (i, j, len);
                }
            }
        }
        let (i, j, len) = best;
        if len == 0 {
            break;
        }
        for k in 0..len {
            hyp_used[i + k] = true;
            ref_used[j + k] = true;
            pairs.push((i + k, j + k));
        }
    }
    pairs.sort_unstable();
    Alignment {
        matches: pairs.len(),
        chunks: count_chunks(&pairs),
    }
}

fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    pairs
        .iter()
        .enumerate()
        .filter(|&(k, &(i, j))| k == 0 || pairs[k - 1] != (i.wrapping_sub(1), j.wrapping_sub(1)))
        .count()
}

/// Memoised search over hypothesis positions, maximising matches first and
/// then minimising chunks. `None` when the state space is too large.
fn exact_alignment(reference: &[TokenId], hypothesis: &[TokenId]) -> Option<Alignment> {
    const NONE: usize = usize::MAX;
    struct Search<'a> {
        reference: &'a [TokenId],
        hypothesis: &'a [TokenId],
        memo: HashMap<(usize, u32, usize), (usize, usize)>,
        overflow: bool,
    }
    impl Search<'_> {
        // Returns (matches, chunks) achievable from hypothesis position `i`.
        fn go(&mut self, i: usize, used: u32, prev: usize) -> (usize, usize) {
            if i == self.hypothesis.len() || self.overflow {
                return (0, 0);
            }
            if let Some(&v) = self.memo.get(&(i, used, prev)) {
                return v;
            }
            let better = |a: (usize, usize), b: (usize, usize)| a.0 > b.0 || (a.0 == b.0 && a.1 < b.1);
            let mut best = self.go(i + 1, used, NONE);
            for j in 0..self.reference.len() {
                if used & (1 << j) == 0 && self.reference[j] == self.hypothesis[i] {
                    let (m, c) = self.go(i + 1, used | (1 << j), j);
                    let continues = prev != NONE && prev + 1 == j;
                    let cand = (m + 1, c + usize::from(!continues));
                    if better(cand, best) {
                        best = cand;
                    }
                }
            }
            if self.memo.len() >= EXACT_ALIGNMENT_MAX_STATES {
                self.overflow = true;
            }
            self.memo.insert((i, used, prev), best);
            best
        }
    }
    let mut search = Search {
        reference,
        hypothesis,
        memo: HashMap::new(),
        overflow: false,
    };
    let (matches, chunks) = search.go(0, 0, NONE);
    (!search.overflow).then_some(Alignment { matches, chunks })
}

/// Named utilities selectable from configuration and the command line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityKind {
    ExactMatch,
    UnigramF1,
    UnigramPrecision,
    #[default]
    MeteorLite,
}

impl UtilityKind {
    pub fn build(self, meteor: MeteorParams) -> Result<Box<dyn Utility>> {
        Ok(match self {
            UtilityKind::ExactMatch => Box::new(ExactMatch),
            UtilityKind::UnigramF1 => Box::new(UnigramF1),
            UtilityKind::UnigramPrecision => Box::new(UnigramPrecision),
            UtilityKind::MeteorLite => Box::new(MeteorLite::new(meteor)?),
        })
    }
}

impl FromStr for UtilityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact-match" | "exact" => Ok(UtilityKind::ExactMatch),
            "unigram-f1" | "f1" => Ok(UtilityKind::UnigramF1),
            "unigram-precision" | "precision" => Ok(UtilityKind::UnigramPrecision),
            "meteor-lite" | "meteor" => Ok(UtilityKind::MeteorLite),
            other => Err(Error::config(format!("unknown utility {other:?}"))),
        }
    }
}

impl fmt::Display for UtilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UtilityKind::ExactMatch => "exact-match",
            UtilityKind::UnigramF1 => "unigram-f1",
            UtilityKind::UnigramPrecision => "unigram-precision",
            UtilityKind::MeteorLite => "meteor-lite",
        })
    }
}
