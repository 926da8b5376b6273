//! Utilities and the decision rules built on them.

mod decision;
mod utility;

pub use decision::{
    estimate_expected_utility, exact_expected_utility, exact_mbr, mbr_decode, oracle_select, CandidateRecord,
    DecisionRecord, DecisionResult,
};
pub use utility::{
    align, greedy_alignment, Alignment, ExactMatch, MeteorLite, MeteorParams, UnigramF1, UnigramPrecision, Utility,
    UtilityKind,
};
