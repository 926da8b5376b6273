//! Decoding rules and distribution diagnostics for small conditional sequence
//! models.
//!
//! The crate is organised bottom-up:
//!
//! * [`seqmodel`]: vocabularies, sentences, corpora and the model interface,
//!   with a count-based Markov model and an explicitly enumerated model.
//! * [`decoding`]: ancestral sampling, beam search and exact mode search.
//! * [`rules`]: utilities and the decision rules built on them (Monte-Carlo
//!   and exact minimum Bayes risk, oracle selection).
//! * [`stats`]: length and n-gram statistics, probability-mass coverage of
//!   sample sets, and the mode/empty-string diagnostics.
//! * [`bayes`]: hierarchical Gamma-Poisson and Dirichlet-Multinomial analysis
//!   models fitted with stochastic variational inference, plus predictive
//!   checks.
//! * [`pipeline`]: synthetic corpora, held-out splitting and the end-to-end
//!   experiment runner.

pub mod bayes;
pub mod decoding;
pub mod error;
pub mod pipeline;
pub mod rules;
pub mod seqmodel;
pub mod stats;

pub use error::{Error, Result};
