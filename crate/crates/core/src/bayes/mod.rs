//! Hierarchical analysis models for length and lexical statistics, fitted by
//! stochastic variational inference with Gamma factors.

mod export;
mod gamma;
mod length;
mod lexical;
mod svi;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use export::{ExportedVariable, PosteriorExport, Variable};
pub use gamma::{trigamma, GammaParams};
pub use length::{
    fit_length_test, fit_length_train, fit_length_train_with, moments, predictive_check_length,
    predictive_check_length_group, FixedPopulation, GroupLengthPosterior, LengthCheckReport, LengthTestPosterior,
    LengthTrainPosterior, MomentCheck, MIN_TRAIN_LENGTHS,
};
pub use lexical::{
    dirmult_log_marginal, fit_lexical_test, fit_lexical_train, predictive_check_lexical,
    predictive_check_lexical_group, spearman, FrequencyCheck, GroupLexicalPosterior, LexicalCheckReport,
    LexicalCounts, LexicalTestPosterior, LexicalTrainPosterior, PairKind,
};
pub use svi::SviConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BayesConfig {
    pub svi: SviConfig,
    pub seed: u64,
    /// Draws per variable in posterior exports.
    pub posterior_samples: usize,
    /// Replicate datasets per predictive check.
    pub predictive_draws: usize,
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self {
            svi: SviConfig::default(),
            seed: 0,
            posterior_samples: 1000,
            predictive_draws: 2000,
        }
    }
}

impl BayesConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn fit_rng(seed: u64, label: &str) -> ChaCha8Rng {
    let tag = label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    ChaCha8Rng::seed_from_u64(crate::decoding::derive_seed(seed, tag, 0))
}
