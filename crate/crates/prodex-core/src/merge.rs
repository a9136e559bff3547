//! Turning a pre-merge ranking into a real slate.
//!
//! Items keep the relative order of their demanded positions; the only
//! freedom is the order of the two items inside each conflict, settled by
//! a weighted coin. Once the order is fixed, items are packed into
//! positions `1..=n` top-down (holes left by unclaimed positions close up).
//!
//! Three weightings are provided:
//!
//! - [`MergeStrategy::Consistent`] puts the control-governed item first
//!   with the probability returned by [`consistent_tie_break`]. With this
//!   coin, each arm's items land on positions with the same distribution
//!   the arm's own counterfactual slate would give them, so an A/A
//!   comparison is exactly unbiased.
//! - [`MergeStrategy::NaiveEqualTie`] flips a fair coin. This is the
//!   common interleaving shortcut; it systematically favours whichever arm
//!   holds less traffic and distorts both arms' readouts.
//! - [`MergeStrategy::RandomSpotLabeling`] ignores demanded positions
//!   entirely: it labels each position with an arm uniformly at random
//!   (respecting realized arm sizes) and fills labelled positions from each
//!   arm's own ranking top-down. Even an A/A experiment then reshuffles the
//!   slate, which is what this baseline is here to demonstrate.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::{Arm, ArmAssignment, Position, Ranker, SutvaPreRanking};

/// How conflicts between the two arms' demanded positions are settled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MergeStrategy {
    /// Weighted coin matching the counterfactual position distributions.
    #[serde(rename = "consistent")]
    Consistent,
    /// Fair coin for every conflict (biased baseline).
    #[serde(rename = "naive")]
    NaiveEqualTie,
    /// Uniformly random arm labels per position (biased baseline; two-arm
    /// experiments only).
    #[serde(rename = "spot-labeling")]
    RandomSpotLabeling,
}

impl MergeStrategy {
    /// Stable name used on the command line and in config files.
    pub fn name(self) -> &'static str {
        match self {
            MergeStrategy::Consistent => "consistent",
            MergeStrategy::NaiveEqualTie => "naive",
            MergeStrategy::RandomSpotLabeling => "spot-labeling",
        }
    }

    /// All strategies, for iteration in tests and docs.
    pub const ALL: [MergeStrategy; 3] = [
        MergeStrategy::Consistent,
        MergeStrategy::NaiveEqualTie,
        MergeStrategy::RandomSpotLabeling,
    ];
}

impl fmt::Display for MergeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MergeStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consistent" => Ok(MergeStrategy::Consistent),
            "naive" => Ok(MergeStrategy::NaiveEqualTie),
            "spot-labeling" => Ok(MergeStrategy::RandomSpotLabeling),
            other => Err(Error::InvalidScenario(format!(
                "unknown merge strategy `{other}` (expected `consistent`, `naive`, or \
                 `spot-labeling`)"
            ))),
        }
    }
}

/// Probability that the control-governed item `x` is placed before the
/// treatment-governed item `y` when both demand position `spot`.
///
/// The weighting is chosen so that, marginally over arm assignments, each
/// item's realized position is distributed exactly as in its own arm's
/// counterfactual slate. Writing `p1_eff = 1 - p0_eff`, the four cases are
/// determined by where the *other* ranker puts each contestant:
///
/// | `r1(x)` vs `spot` | `r0(y)` vs `spot` | probability `x` first |
/// |-------------------|-------------------|-----------------------|
/// | after             | after             | `p1_eff`              |
/// | before            | before            | `p0_eff`              |
/// | after             | before            | `1`                   |
/// | before            | after             | `0`                   |
///
/// `r1(x) == spot` or `r0(y) == spot` cannot occur: the contestants are
/// distinct items, and a ranker gives `spot` to only one of them.
///
/// # Errors
///
/// - [`Error::TieBreakPrecondition`] when `x` and `y` do not actually
///   contest `spot` (`r0(x) != spot`, `r1(y) != spot`, or `x == y`).
/// - [`Error::DegenerateSplit`] when `p0_eff` is 0 or 1: the merged slate
///   is then deterministic and no coin weighting can be consistent.
pub fn consistent_tie_break(
    spot: Position,
    x: usize,
    y: usize,
    r0: &Ranker,
    r1: &Ranker,
    p0_eff: f64,
) -> Result<f64> {
    if x == y {
        return Err(Error::TieBreakPrecondition(format!(
            "items x and y must differ, both are item {x}"
        )));
    }
    if r0.position(x) != spot {
        return Err(Error::TieBreakPrecondition(format!(
            "item x={x} holds control position {} but the contested position is {spot}",
            r0.position(x)
        )));
    }
    if r1.position(y) != spot {
        return Err(Error::TieBreakPrecondition(format!(
            "item y={y} holds treatment position {} but the contested position is {spot}",
            r1.position(y)
        )));
    }
    if !p0_eff.is_finite() || p0_eff <= 0.0 || p0_eff >= 1.0 {
        return Err(Error::DegenerateSplit { p0_eff });
    }
    let p1_eff = 1.0 - p0_eff;
    let x_after = r1.position(x) > spot;
    let y_after = r0.position(y) > spot;
    Ok(match (x_after, y_after) {
        (true, true) => p1_eff,
        (false, false) => p0_eff,
        (true, false) => 1.0,
        (false, true) => 0.0,
    })
}

/// Deterministic merge core: settles conflict `i` by putting the
/// control-governed item first iff `r0_first[i]`, with coins aligned to
/// [`SutvaPreRanking::conflicts`] (ascending contested position).
///
/// Items are ordered by `(demanded position, within-conflict order)` and
/// packed into positions `1..=n`.
///
/// # Errors
///
/// [`Error::DimensionMismatch`] when the coin count differs from the
/// conflict count.
pub fn merge_with_coins(pre: &SutvaPreRanking, r0_first: &[bool]) -> Result<Ranker> {
    if r0_first.len() != pre.conflicts().len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coins for {} conflicts",
            r0_first.len(),
            pre.conflicts().len()
        )));
    }
    let n = pre.len();
    // Within a demanded position, rank 0 goes first. Non-conflicted items
    // are alone on their position, so their within rank never matters.
    let mut within = vec![0u8; n];
    for (c, &first) in pre.conflicts().iter().zip(r0_first) {
        let (winner, loser) = if first {
            (c.r0_item, c.r1_item)
        } else {
            (c.r1_item, c.r0_item)
        };
        within[winner] = 0;
        within[loser] = 1;
    }
    let mut order: Vec<usize> = (0..n).collect();
    // Keys (value, within) are unique: at most two items share a value and
    // they receive distinct within ranks.
    order.sort_unstable_by_key(|&item| (pre.value(item), within[item]));
    Ranker::from_item_order(order)
}

/// Merges the pre-ranking with the given strategy, drawing any randomness
/// from `rng`.
///
/// [`MergeStrategy::Consistent`] and [`MergeStrategy::NaiveEqualTie`]
/// consume one uniform per conflict, in ascending contested-position
/// order. [`MergeStrategy::RandomSpotLabeling`] instead shuffles the
/// position labels (see [`merge_random_spot_labeling`]).
///
/// # Errors
///
/// - [`Error::DegenerateSplit`] when the consistent weighting is requested
///   but the effective control share is 0 or 1.
/// - [`Error::HoldoutUnsupported`] when spot labeling is requested for an
///   experiment with holdout traffic.
pub fn merge<R: Rng + ?Sized>(
    pre: &SutvaPreRanking,
    strategy: MergeStrategy,
    rng: &mut R,
) -> Result<Ranker> {
    match strategy {
        MergeStrategy::Consistent | MergeStrategy::NaiveEqualTie => {
            let mut coins = Vec::with_capacity(pre.conflicts().len());
            for c in pre.conflicts() {
                let beta0 = match strategy {
                    MergeStrategy::Consistent => consistent_tie_break(
                        c.spot,
                        c.r0_item,
                        c.r1_item,
                        pre.r0(),
                        pre.r1(),
                        pre.p0_eff(),
                    )?,
                    _ => 0.5,
                };
                let u: f64 = rng.random();
                coins.push(u < beta0);
            }
            merge_with_coins(pre, &coins)
        }
        MergeStrategy::RandomSpotLabeling => {
            merge_random_spot_labeling(pre.r0(), pre.r1(), pre.assignment(), rng)
        }
    }
}

/// Deterministic spot-labeling core: position `p` shows the next unused
/// item of the arm `labels[p-1]`, where control items queue in control
/// ranking order and treatment items in treatment ranking order.
///
/// # Errors
///
/// - [`Error::HoldoutUnsupported`] when the assignment or the labels
///   involve holdout.
/// - [`Error::DimensionMismatch`] when label counts do not match the
///   realized arm sizes.
pub fn spot_labeling_with_labels(
    r0: &Ranker,
    r1: &Ranker,
    assignment: &ArmAssignment,
    labels: &[Arm],
) -> Result<Ranker> {
    let n = r0.len();
    if r1.len() != n || assignment.len() != n || labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "r0 has {} items, r1 has {}, assignment covers {}, {} labels",
            n,
            r1.len(),
            assignment.len(),
            labels.len()
        )));
    }
    if assignment.probs().ph() > 0.0
        || assignment.arms().contains(&Arm::Holdout)
        || labels.contains(&Arm::Holdout)
    {
        return Err(Error::HoldoutUnsupported);
    }
    let label_controls = labels.iter().filter(|&&a| a == Arm::Control).count();
    if label_controls != assignment.count(Arm::Control) {
        return Err(Error::DimensionMismatch(format!(
            "{label_controls} control labels for {} control items",
            assignment.count(Arm::Control)
        )));
    }
    let mut control_queue = r0
        .items_by_position()
        .iter()
        .copied()
        .filter(|&i| assignment.arm(i) == Arm::Control);
    let mut treatment_queue = r1
        .items_by_position()
        .iter()
        .copied()
        .filter(|&i| assignment.arm(i) == Arm::Treatment);
    let order: Vec<usize> = labels
        .iter()
        .map(|&label| match label {
            Arm::Control => control_queue.next().expect("label counts checked"),
            Arm::Treatment => treatment_queue.next().expect("label counts checked"),
            Arm::Holdout => unreachable!("holdout labels rejected above"),
        })
        .collect();
    Ranker::from_item_order(order)
}

/// The spot-labeling baseline: draws the position labels uniformly at
/// random over all arrangements of `#control` control labels and
/// `#treatment` treatment labels, then fills positions per
/// [`spot_labeling_with_labels`].
///
/// # Errors
///
/// [`Error::HoldoutUnsupported`] when the experiment has holdout traffic;
/// this baseline is defined for two-arm experiments only.
pub fn merge_random_spot_labeling<R: Rng + ?Sized>(
    r0: &Ranker,
    r1: &Ranker,
    assignment: &ArmAssignment,
    rng: &mut R,
) -> Result<Ranker> {
    if assignment.probs().ph() > 0.0 || assignment.arms().contains(&Arm::Holdout) {
        return Err(Error::HoldoutUnsupported);
    }
    let mut labels: Vec<Arm> = assignment.arms().to_vec();
    labels.sort_unstable_by_key(|a| match a {
        Arm::Control => 0,
        Arm::Treatment => 1,
        Arm::Holdout => 2,
    });
    labels.shuffle(rng);
    spot_labeling_with_labels(r0, r1, assignment, &labels)
}
