//! Counterfactual interleaving for producer-side ranking experiments.
//!
//! When an A/B test randomizes over *items being ranked* (producers) rather
//! than over viewers, control and treatment items must share a single ranked
//! slate. This crate builds that shared slate and quantifies how faithful it
//! is to the two counterfactual worlds:
//!
//! - [`ranking`] — item universes, rankers as bijections between items and
//!   positions, arm assignments, and the pre-merge ranking in which every
//!   item demands the position its governing ranker gives it.
//! - [`mod@merge`] — turning the pre-merge ranking into a real slate. Conflicts
//!   (two items demanding one position) are settled by a weighted coin; the
//!   [`merge::consistent_tie_break`] weighting makes the slate statistically
//!   indistinguishable, position by position, from the counterfactual
//!   slates, while the equal-odds weighting reproduces the bias of naive
//!   interleaving.
//! - [`dist`] — probability masses over positions and validated
//!   non-increasing attention curves.
//! - [`kernel`] — position kernels: for each arm and source position, the
//!   distribution of the position actually rendered. Computed exactly by
//!   enumeration or approximately by Monte Carlo, then audited for
//!   arm-invariance and for stochastic-dominance ordering.
//! - [`sim`] — readouts (attention-weighted utility sums, per arm and
//!   inverse-propensity scaled) and a deterministic, seed-streamed Monte
//!   Carlo simulator whose means are comparable to the kernel-based
//!   analytic expectations.
//! - [`export`] — CSV and JSON renderings with fixed-width decimal
//!   formatting so repeated runs are byte-identical.
//!
//! Positions are 1-based throughout: position 1 is the top of the slate.

pub mod dist;
pub mod error;
pub mod export;
pub mod kernel;
pub mod merge;
pub mod ranking;
pub mod rng;
pub mod scenario;
pub mod sim;

pub use dist::{AttentionFunction, PositionDistribution};
pub use error::{Error, Result};
pub use kernel::{
    check_consistency, check_monotonicity, compute_kernels_exact, compute_kernels_exact_bounded,
    compute_kernels_mc, convolve_attention, stochastic_dominates, ConsistencyReport,
    ConsistencyWorst, Dominance, DominanceWitness, KernelMode, KernelTable, MonotonicityReport,
    MonotonicityViolation, DEFAULT_ENUMERATION_BOUND, DOMINANCE_SLACK, ENUMERATION_BOUND_ENV,
};
pub use merge::{
    consistent_tie_break, merge, merge_random_spot_labeling, merge_with_coins,
    spot_labeling_with_labels, MergeStrategy,
};
pub use ranking::{
    derive_control_ranking_shortcut, ranker_from_utility, sutva_merge, sutva_merge_with, Arm,
    ArmAssignment, ArmProbabilities, Conflict, GoverningRanker, HoldoutSource, ItemId, Position,
    Ranker, SutvaPreRanking, Universe,
};
pub use rng::replication_rng;
pub use scenario::{ExperimentDesign, Scenario};
pub use sim::{
    counterfactual_readout, expected_readout_via_kernels, experiment_readout, simulate,
    ReadoutStats, SimulationResult,
};
