//! Error type shared by every fallible operation in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building, merging, or analysing
/// rankings.
///
/// Variants are grouped by the stage that raises them; messages carry the
/// offending values so callers can surface them without extra lookups.
#[derive(Debug, Error)]
pub enum Error {
    /// An item universe was malformed (duplicate ids, empty, …).
    #[error("invalid item universe: {0}")]
    InvalidUniverse(String),

    /// Two structures refer to different item universes.
    #[error("item universe mismatch: {0}")]
    UniverseMismatch(String),

    /// A ranking was not a bijection between items and positions 1..=n.
    #[error("invalid ranking: {0}")]
    InvalidRanking(String),

    /// A pure per-item metric must be non-negative to induce a ranker.
    #[error("negative utility {value} for item `{item}`")]
    NegativeUtility { item: String, value: f64 },

    /// Arm probabilities must be non-negative and sum to one.
    #[error("invalid arm probabilities: {0}")]
    InvalidProbabilities(String),

    /// An operation needed genuine randomization between the arms but the
    /// effective control share left none.
    #[error(
        "degenerate traffic split: effective control share {p0_eff} admits no \
         randomization between arms"
    )]
    DegenerateSplit { p0_eff: f64 },

    /// The two items handed to the tie-break rule do not actually contest
    /// the stated position.
    #[error("tie-break precondition violated: {0}")]
    TieBreakPrecondition(String),

    /// The spot-labeling baseline is defined for two-arm experiments only.
    #[error("the spot-labeling baseline does not support holdout items")]
    HoldoutUnsupported,

    /// A candidate pool was too small to fill the requested slate.
    #[error("{needed} eligible items needed but only {available} available")]
    InsufficientCandidates { needed: usize, available: usize },

    /// Exact kernel computation enumerates all arm assignments and coin
    /// outcomes; beyond the bound, Monte Carlo estimation must be used.
    #[error(
        "ranking size {n} exceeds the exact-enumeration bound {bound}; \
         use Monte Carlo kernel estimation instead"
    )]
    EnumerationBound { n: usize, bound: usize },

    /// Two aligned sequences had different lengths.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A probability mass was negative or did not normalize.
    #[error("invalid probability mass: {0}")]
    InvalidDistribution(String),

    /// Attention curves must be non-negative and non-increasing in position.
    #[error("invalid attention function: {0}")]
    InvalidAttention(String),

    /// A scenario failed cross-field validation.
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// Kernels and readouts exist for the control and treatment arms only.
    #[error("`{0}` is not an experiment arm; use control or treatment")]
    NotAnExperimentArm(String),

    /// An arm with zero traffic share has no defined scaled readout.
    #[error(
        "degenerate traffic split: arm `{arm}` has share 0, its \
         inverse-propensity readout is undefined"
    )]
    DegenerateArmShare { arm: String },

    /// Variance estimation needs at least two replications.
    #[error("simulation requires at least two replications, got {0}")]
    TooFewReplications(u64),

    /// Monte Carlo estimation needs at least one sample.
    #[error("Monte Carlo estimation requires at least one sample")]
    NoSamples,
}
