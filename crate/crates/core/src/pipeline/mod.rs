//! End-to-end experiment: synthetic corpus, held-out split, model fitting,
//! decoding under every rule, sample statistics and the Bayesian analyses.

mod config;
mod generate;
mod report;
mod run;
mod split;

pub use config::{Analyses, RunConfig};
pub use generate::{generate_corpus, CorpusConfig, LengthDistribution, Translator};
pub use report::{
    rule, BayesSummary, Decoded, GroupSummary, GroupTable, LengthSummary, LexicalSummary, Report, ReplicateSummary,
    RunStatus, SourceReport, StatsSummary, SCHEMA_VERSION,
};
pub use run::{run_pipeline, run_pipeline_to_dir};
pub use split::{split_heldout, Split, SplitSummary};
