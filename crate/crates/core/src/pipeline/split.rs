//! Held-out selection with deduplication and overlap removal.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqmodel::{ParallelCorpus, ParallelPair};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub input_pairs: usize,
    pub duplicates_removed: usize,
    pub heldout_pairs: usize,
    /// Training pairs dropped because one side equals a held-out sentence.
    pub overlap_removed: usize,
    pub training_pairs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: ParallelCorpus,
    pub heldout: ParallelCorpus,
    pub summary: SplitSummary,
}

/// Removes exact duplicate pairs (first occurrence kept; pairs sharing only
/// one side stay), holds out `n_heldout` pairs chosen by `seed`, then drops
/// every training pair whose source or target equals any held-out source or
/// target.
pub fn split_heldout(corpus: &ParallelCorpus, n_heldout: usize, seed: u64) -> Result<Split> {
    let mut seen = HashSet::new();
    let unique: Vec<&ParallelPair> = corpus.iter().filter(|p| seen.insert(*p)).collect();
    if n_heldout >= unique.len() {
        return Err(Error::config(format!(
            "cannot hold out {n_heldout} of {} distinct pairs",
            unique.len()
        )));
    }
    let mut order: Vec<usize> = (0..unique.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut held: Vec<usize> = order[..n_heldout].to_vec();
    held.sort_unstable();
    let held_set: HashSet<usize> = held.iter().copied().collect();

    let mut sides: HashSet<&[String]> = HashSet::new();
    for &i in &held {
        sides.insert(&unique[i].src);
        sides.insert(&unique[i].tgt);
    }
    let mut train = Vec::new();
    let mut overlap_removed = 0;
    for (i, pair) in unique.iter().enumerate() {
        if held_set.contains(&i) {
            continue;
        }
        if sides.contains(pair.src.as_slice()) || sides.contains(pair.tgt.as_slice()) {
            overlap_removed += 1;
        } else {
            train.push((*pair).clone());
        }
    }
    let summary = SplitSummary {
        input_pairs: corpus.len(),
        duplicates_removed: corpus.len() - unique.len(),
        heldout_pairs: n_heldout,
        overlap_removed,
        training_pairs: train.len(),
    };
    Ok(Split {
        train: ParallelCorpus::new(train),
        heldout: held.iter().map(|&i| unique[i].clone()).collect(),
        summary,
    })
}
