//! Item universes, rankers, arm assignments, and the pre-merge ranking.
//!
//! A [`Ranker`] is a bijection between the items of a [`Universe`] and the
//! positions `1..=n`. An experiment assigns every item to an [`Arm`]; under
//! the stable-unit assumption each item demands the position its own arm's
//! ranker would give it, which [`sutva_merge`] records as a
//! [`SutvaPreRanking`] together with the list of *conflicts* — positions
//! demanded by one control-governed and one treatment-governed item at once.
//! Conflicts are the only places where the merged slate is random; every
//! other item keeps its demanded position (up to compaction of holes).

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 1-based slate position; position 1 is the top.
pub type Position = usize;

// ── Items and universes ─────────────────────────────────────────────────

/// Opaque item identifier. Ordering is lexicographic and is used as the
/// deterministic tie-break when utilities are equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub String);

impl ItemId {
    /// Borrows the underlying identifier.
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ItemId {
    fn from(s: &str) -> Self {
        ItemId(s.to_owned())
    }
}

impl From<String> for ItemId {
    fn from(s: String) -> Self {
        ItemId(s)
    }
}

/// The fixed set of items being ranked, with a dense index `0..n`.
///
/// All rankers, assignments, and per-item vectors in this crate are aligned
/// to the universe's index order, which is the order the ids were given in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Universe {
    ids: Vec<ItemId>,
    index: BTreeMap<ItemId, usize>,
}

impl Universe {
    /// Builds a universe from distinct ids.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidUniverse`] when `ids` is empty or contains a
    /// duplicate.
    pub fn new<I, T>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: Into<ItemId>,
    {
        let ids: Vec<ItemId> = ids.into_iter().map(Into::into).collect();
        if ids.is_empty() {
            return Err(Error::InvalidUniverse("no items".into()));
        }
        let mut index = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidUniverse(format!("duplicate item id `{id}`")));
            }
        }
        Ok(Universe { ids, index })
    }

    /// Number of items.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    /// True when the universe holds no items (never, post-construction).
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The id at dense index `item`.
    pub fn id(&self, item: usize) -> &ItemId {
        &self.ids[item]
    }

    /// All ids in index order.
    pub fn ids(&self) -> &[ItemId] {
        &self.ids
    }

    /// Dense index of `id`, if it belongs to the universe.
    pub fn index_of(&self, id: &ItemId) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Dense index of `id`, or a [`Error::UniverseMismatch`] naming it.
    pub fn require(&self, id: &ItemId) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| Error::UniverseMismatch(format!("unknown item id `{id}`")))
    }
}

// ── Rankers ─────────────────────────────────────────────────────────────

/// A bijection between item indices `0..n` and positions `1..=n`.
///
/// Both directions are stored: `position(item)` is the rank given to an
/// item, `item_at(pos)` is the item occupying a position (the slate read
/// top-down).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranker {
    item_at: Vec<usize>, // item_at[p-1] = item index shown at position p
    pos_of: Vec<Position>, // pos_of[item] = 1-based position
}

impl Ranker {
    /// Builds a ranker from the slate read top-down: `order[p-1]` is the
    /// item index at position `p`.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidRanking`] unless `order` is a permutation of `0..n`.
    pub fn from_item_order(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        if n == 0 {
            return Err(Error::InvalidRanking("empty ranking".into()));
        }
        let mut pos_of = vec![0usize; n];
        let mut seen = vec![false; n];
        for (p, &item) in order.iter().enumerate() {
            if item >= n {
                return Err(Error::InvalidRanking(format!(
                    "item index {item} out of range for {n} items"
                )));
            }
            if seen[item] {
                return Err(Error::InvalidRanking(format!(
                    "item index {item} appears more than once"
                )));
            }
            seen[item] = true;
            pos_of[item] = p + 1;
        }
        Ok(Ranker {
            item_at: order,
            pos_of,
        })
    }

    /// Builds a ranker from per-item positions: `positions[item]` is the
    /// 1-based rank of that item.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidRanking`] unless `positions` is a permutation of
    /// `1..=n`.
    pub fn from_positions(positions: Vec<Position>) -> Result<Self> {
        let n = positions.len();
        if n == 0 {
            return Err(Error::InvalidRanking("empty ranking".into()));
        }
        let mut item_at = vec![usize::MAX; n];
        for (item, &p) in positions.iter().enumerate() {
            if p == 0 || p > n {
                return Err(Error::InvalidRanking(format!(
                    "position {p} out of range 1..={n}"
                )));
            }
            if item_at[p - 1] != usize::MAX {
                return Err(Error::InvalidRanking(format!(
                    "position {p} assigned to more than one item"
                )));
            }
            item_at[p - 1] = item;
        }
        Ok(Ranker {
            item_at,
            pos_of: positions,
        })
    }

    /// Number of items (equivalently, positions).
    pub fn len(&self) -> usize {
        self.item_at.len()
    }

    /// True when the ranker is empty (never, post-construction).
    pub fn is_empty(&self) -> bool {
        self.item_at.is_empty()
    }

    /// 1-based position of `item`.
    pub fn position(&self, item: usize) -> Position {
        self.pos_of[item]
    }

    /// Item index at 1-based position `pos`.
    pub fn item_at(&self, pos: Position) -> usize {
        self.item_at[pos - 1]
    }

    /// Item indices read top-down (position 1 first).
    pub fn items_by_position(&self) -> &[usize] {
        &self.item_at
    }

    /// Per-item 1-based positions.
    pub fn positions(&self) -> &[Position] {
        &self.pos_of
    }
}

/// Induces a ranker from a pure per-item metric: higher utility ranks
/// first; exact ties rank the lexicographically smaller id first.
///
/// A ranker built this way maximizes the attention-weighted utility sum
/// over all rankers whenever the attention curve is non-increasing.
///
/// # Errors
///
/// - [`Error::DimensionMismatch`] when `u` is not aligned to `universe`.
/// - [`Error::NegativeUtility`] when any utility is negative.
pub fn ranker_from_utility(universe: &Universe, u: &[f64]) -> Result<Ranker> {
    if u.len() != universe.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} utilities for {} items",
            u.len(),
            universe.len()
        )));
    }
    for (item, &value) in u.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::NegativeUtility {
                item: universe.id(item).to_string(),
                value,
            });
        }
    }
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&a, &b| {
        u[b].total_cmp(&u[a])
            .then_with(|| universe.id(a).cmp(universe.id(b)))
    });
    Ranker::from_item_order(order)
}

/// Derives the control counterfactual slate from a longer treatment slate:
/// keep the control-eligible items in their treatment order and take the
/// first `n`.
///
/// This is the cheap route when the two rankers differ only in which items
/// are eligible: the result equals re-ranking the eligible subset with the
/// same scoring order.
///
/// # Errors
///
/// - [`Error::InvalidRanking`] when `treatment_ranking` repeats an id.
/// - [`Error::UniverseMismatch`] when an eligible id is not in the slate.
/// - [`Error::InsufficientCandidates`] when fewer than `n` eligible items
///   appear in the slate.
pub fn derive_control_ranking_shortcut(
    treatment_ranking: &[ItemId],
    control_eligible: &HashSet<ItemId>,
    n: usize,
) -> Result<Vec<ItemId>> {
    let mut seen = HashSet::with_capacity(treatment_ranking.len());
    for id in treatment_ranking {
        if !seen.insert(id) {
            return Err(Error::InvalidRanking(format!(
                "item id `{id}` appears more than once"
            )));
        }
    }
    for id in control_eligible {
        if !seen.contains(id) {
            return Err(Error::UniverseMismatch(format!(
                "eligible item `{id}` is not in the treatment ranking"
            )));
        }
    }
    let eligible: Vec<ItemId> = treatment_ranking
        .iter()
        .filter(|id| control_eligible.contains(id))
        .cloned()
        .collect();
    if eligible.len() < n {
        return Err(Error::InsufficientCandidates {
            needed: n,
            available: eligible.len(),
        });
    }
    Ok(eligible.into_iter().take(n).collect())
}

// ── Arms and assignments ────────────────────────────────────────────────

/// The experiment arm an item is assigned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    /// Ranked by the incumbent ranker; readout scaled by `1/p0`.
    Control,
    /// Ranked by the candidate ranker; readout scaled by `1/p1`.
    Treatment,
    /// Kept out of both readouts; governed by a configurable side ranker.
    Holdout,
}

impl Arm {
    /// Stable lowercase label used in CSV and JSON output.
    pub fn label(self) -> &'static str {
        match self {
            Arm::Control => "control",
            Arm::Treatment => "treatment",
            Arm::Holdout => "holdout",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Traffic split between arms. Probabilities must be non-negative and sum
/// to one within `1e-12`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmProbabilities {
    p0: f64,
    p1: f64,
    ph: f64,
}

impl ArmProbabilities {
    /// Builds a split from control, treatment, and holdout shares.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidProbabilities`] when any share is negative, not
    /// finite, or the shares do not sum to one within `1e-12`.
    pub fn new(p0: f64, p1: f64, ph: f64) -> Result<Self> {
        for (name, v) in [("p0", p0), ("p1", p1), ("ph", ph)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidProbabilities(format!(
                    "{name} = {v} must be a non-negative finite number"
                )));
            }
        }
        let sum = p0 + p1 + ph;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProbabilities(format!(
                "shares sum to {sum}, expected 1"
            )));
        }
        Ok(ArmProbabilities { p0, p1, ph })
    }

    /// Two-arm split: control share `p0`, treatment share `1 - p0`, no
    /// holdout.
    pub fn two_arm(p0: f64) -> Result<Self> {
        if !p0.is_finite() || !(0.0..=1.0).contains(&p0) {
            return Err(Error::InvalidProbabilities(format!(
                "p0 = {p0} must lie in [0, 1]"
            )));
        }
        ArmProbabilities::new(p0, 1.0 - p0, 0.0)
    }

    /// Control share.
    pub fn p0(self) -> f64 {
        self.p0
    }

    /// Treatment share.
    pub fn p1(self) -> f64 {
        self.p1
    }

    /// Holdout share.
    pub fn ph(self) -> f64 {
        self.ph
    }

    /// Share of the given arm.
    pub fn prob(self, arm: Arm) -> f64 {
        match arm {
            Arm::Control => self.p0,
            Arm::Treatment => self.p1,
            Arm::Holdout => self.ph,
        }
    }
}

/// Which side ranker governs the positions of holdout items.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldoutSource {
    /// Holdout items demand their control-ranker positions (default).
    #[default]
    ControlRanker,
    /// Holdout items demand their treatment-ranker positions.
    TreatmentRanker,
}

/// A realized assignment of every item to an arm, together with the split
/// it was (or would be) drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmAssignment {
    arms: Vec<Arm>,
    probs: ArmProbabilities,
}

impl ArmAssignment {
    /// Wraps explicit per-item arms with their design split.
    pub fn new(arms: Vec<Arm>, probs: ArmProbabilities) -> Self {
        ArmAssignment { arms, probs }
    }

    /// Draws an independent per-item assignment: each item lands in control
    /// with probability `p0`, treatment with `p1`, holdout with `ph`.
    ///
    /// One uniform draw is consumed per item, in item-index order, so the
    /// stream position after this call is independent of the outcome.
    pub fn draw<R: Rng + ?Sized>(probs: ArmProbabilities, n: usize, rng: &mut R) -> Self {
        let arms = (0..n)
            .map(|_| {
                let x: f64 = rng.random();
                if x < probs.p0 {
                    Arm::Control
                } else if x < probs.p0 + probs.p1 {
                    Arm::Treatment
                } else {
                    Arm::Holdout
                }
            })
            .collect();
        ArmAssignment { arms, probs }
    }

    /// Number of items covered.
    pub fn len(&self) -> usize {
        self.arms.len()
    }

    /// True when no items are covered.
    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    /// Arm of `item`.
    pub fn arm(&self, item: usize) -> Arm {
        self.arms[item]
    }

    /// Per-item arms in index order.
    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    /// The split the assignment was drawn from.
    pub fn probs(&self) -> ArmProbabilities {
        self.probs
    }

    /// Item indices currently in `arm`.
    pub fn items_in(&self, arm: Arm) -> impl Iterator<Item = usize> + '_ {
        self.arms
            .iter()
            .enumerate()
            .filter(move |(_, &a)| a == arm)
            .map(|(i, _)| i)
    }

    /// Number of items currently in `arm`.
    pub fn count(&self, arm: Arm) -> usize {
        self.arms.iter().filter(|&&a| a == arm).count()
    }
}

// ── Pre-merge ranking ───────────────────────────────────────────────────

/// Which ranker governs an item's demanded position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GoverningRanker {
    /// The control (incumbent) ranker.
    R0,
    /// The treatment (candidate) ranker.
    R1,
}

/// One position demanded by both a control-governed and a
/// treatment-governed item.
///
/// Because each ranker is a bijection, at most two items can demand a
/// position and each item takes part in at most one conflict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conflict {
    /// The contested position.
    pub spot: Position,
    /// The item demanding `spot` through the control ranker.
    pub r0_item: usize,
    /// The item demanding `spot` through the treatment ranker.
    pub r1_item: usize,
}

/// The pre-merge ranking: per-item demanded positions plus everything a
/// merge strategy needs to settle the conflicts.
#[derive(Debug, Clone)]
pub struct SutvaPreRanking {
    values: Vec<Position>,
    governed_by: Vec<GoverningRanker>,
    conflicts: Vec<Conflict>,
    r0: Ranker,
    r1: Ranker,
    assignment: ArmAssignment,
    holdout_source: HoldoutSource,
}

impl SutvaPreRanking {
    /// Number of items.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when no items are covered (never, post-construction).
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Position demanded by `item` under its governing ranker.
    pub fn value(&self, item: usize) -> Position {
        self.values[item]
    }

    /// All demanded positions in item-index order.
    pub fn values(&self) -> &[Position] {
        &self.values
    }

    /// The ranker governing `item` (holdout items follow the configured
    /// [`HoldoutSource`]).
    pub fn governed_by(&self, item: usize) -> GoverningRanker {
        self.governed_by[item]
    }

    /// Conflicts in ascending order of contested position.
    pub fn conflicts(&self) -> &[Conflict] {
        &self.conflicts
    }

    /// True when every demanded position is distinct, in which case the
    /// merged slate is exactly the demanded one.
    pub fn is_conflict_free(&self) -> bool {
        self.conflicts.is_empty()
    }

    /// True when `item` takes part in a conflict.
    pub fn is_conflicted(&self, item: usize) -> bool {
        self.conflicts
            .iter()
            .any(|c| c.r0_item == item || c.r1_item == item)
    }

    /// The control ranker the pre-ranking was built from.
    pub fn r0(&self) -> &Ranker {
        &self.r0
    }

    /// The treatment ranker the pre-ranking was built from.
    pub fn r1(&self) -> &Ranker {
        &self.r1
    }

    /// The arm assignment the pre-ranking was built from.
    pub fn assignment(&self) -> &ArmAssignment {
        &self.assignment
    }

    /// Where holdout items take their positions from.
    pub fn holdout_source(&self) -> HoldoutSource {
        self.holdout_source
    }

    /// Effective control-side share used by the consistent tie-break: the
    /// holdout share counts toward whichever side governs holdout items.
    pub fn p0_eff(&self) -> f64 {
        let p = self.assignment.probs();
        match self.holdout_source {
            HoldoutSource::ControlRanker => p.p0() + p.ph(),
            HoldoutSource::TreatmentRanker => p.p0(),
        }
    }
}

/// Builds the pre-merge ranking with holdout items governed by the control
/// ranker. See [`sutva_merge_with`].
pub fn sutva_merge(r0: &Ranker, r1: &Ranker, assignment: &ArmAssignment) -> Result<SutvaPreRanking> {
    sutva_merge_with(r0, r1, assignment, HoldoutSource::ControlRanker)
}

/// Builds the pre-merge ranking: every control item demands its `r0`
/// position, every treatment item its `r1` position, and holdout items the
/// position of the ranker named by `holdout_source`.
///
/// The returned structure also lists every conflict — a position demanded
/// by exactly one control-governed item and one treatment-governed item —
/// in ascending position order. Holdout items count as control-governed
/// (or treatment-governed, per `holdout_source`) for conflict purposes.
///
/// # Errors
///
/// [`Error::DimensionMismatch`] when `r0`, `r1`, and `assignment` disagree
/// on the number of items.
pub fn sutva_merge_with(
    r0: &Ranker,
    r1: &Ranker,
    assignment: &ArmAssignment,
    holdout_source: HoldoutSource,
) -> Result<SutvaPreRanking> {
    let n = r0.len();
    if r1.len() != n || assignment.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "r0 has {} items, r1 has {}, assignment covers {}",
            n,
            r1.len(),
            assignment.len()
        )));
    }
    let mut values = Vec::with_capacity(n);
    let mut governed_by = Vec::with_capacity(n);
    for item in 0..n {
        let side = match (assignment.arm(item), holdout_source) {
            (Arm::Control, _) => GoverningRanker::R0,
            (Arm::Treatment, _) => GoverningRanker::R1,
            (Arm::Holdout, HoldoutSource::ControlRanker) => GoverningRanker::R0,
            (Arm::Holdout, HoldoutSource::TreatmentRanker) => GoverningRanker::R1,
        };
        let value = match side {
            GoverningRanker::R0 => r0.position(item),
            GoverningRanker::R1 => r1.position(item),
        };
        values.push(value);
        governed_by.push(side);
    }
    // Each ranker is injective, so a position can be demanded by at most
    // one item per side: buckets never exceed two items.
    let mut r0_at = vec![usize::MAX; n + 1];
    let mut r1_at = vec![usize::MAX; n + 1];
    for item in 0..n {
        let slot = match governed_by[item] {
            GoverningRanker::R0 => &mut r0_at[values[item]],
            GoverningRanker::R1 => &mut r1_at[values[item]],
        };
        debug_assert_eq!(*slot, usize::MAX);
        *slot = item;
    }
    let mut conflicts = Vec::new();
    for spot in 1..=n {
        if r0_at[spot] != usize::MAX && r1_at[spot] != usize::MAX {
            conflicts.push(Conflict {
                spot,
                r0_item: r0_at[spot],
                r1_item: r1_at[spot],
            });
        }
    }
    Ok(SutvaPreRanking {
        values,
        governed_by,
        conflicts,
        r0: r0.clone(),
        r1: r1.clone(),
        assignment: assignment.clone(),
        holdout_source,
    })
}
