//! Position kernels: where an arm's items actually land on the merged
//! slate.
//!
//! For arm `k` and source position `j`, the kernel `π_{k,j}` is the
//! distribution of the merged position of the item that arm `k`'s own
//! ranker shows at `j`, conditioned on that item belonging to arm `k`.
//! Kernels summarize everything the merge does to an arm's slate:
//! convolving the attention curve through them gives the attention each
//! source position effectively receives, and hence the analytic
//! expectation of any experiment readout.
//!
//! Two diagnostics certify a merge procedure:
//!
//! - **arm-invariance** ([`check_consistency`]): `π_{0,j} = π_{1,j}` for
//!   every `j`, so both arms see the same position noise and their
//!   readouts stay comparable;
//! - **dominance ordering** ([`check_monotonicity`]): `π_{k,j}` is
//!   stochastically earlier than `π_{k,j+1}`, so better source ranks never
//!   receive less attention under any non-increasing attention curve.
//!
//! Kernels are computed exactly — enumerating every arm assignment and
//! every coin outcome, in closed form for the label-shuffling baseline —
//! or estimated by Monte Carlo for slates too large to enumerate.

use rayon::prelude::*;

use crate::dist::PositionDistribution;
use crate::error::{Error, Result};
use crate::merge::{consistent_tie_break, merge, merge_with_coins, MergeStrategy};
use crate::ranking::{Arm, ArmAssignment, ArmProbabilities, Position, Ranker};
use crate::rng::replication_rng;
use crate::scenario::Scenario;

/// Largest slate enumerated exactly unless a caller raises the bound.
///
/// Exact computation walks all `2^n` arm assignments crossed with every
/// coin outcome, so cost roughly quadruples per extra item.
pub const DEFAULT_ENUMERATION_BOUND: usize = 14;

/// Environment variable the command-line tool reads to override
/// [`DEFAULT_ENUMERATION_BOUND`].
pub const ENUMERATION_BOUND_ENV: &str = "PRODEX_ENUM_BOUND";

/// Slack allowed when comparing cumulative distributions for dominance.
pub const DOMINANCE_SLACK: f64 = 1e-12;

/// Masks per work chunk in parallel enumeration. Chunk boundaries are
/// fixed so the floating-point summation order — and therefore the result
/// bit pattern — does not depend on the number of worker threads.
const ENUMERATION_CHUNK: u64 = 512;

/// Samples per work chunk in parallel Monte Carlo estimation.
const MC_CHUNK: u64 = 4096;

/// How a kernel table was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMode {
    /// Exact enumeration of assignments and coin outcomes.
    Exact,
    /// Monte Carlo estimate from this many replications.
    MonteCarlo {
        /// Number of sampled replications.
        samples: u64,
    },
}

/// Position kernels for both experiment arms.
///
/// Cell `(arm, j)` holds the merged-position distribution of the item that
/// `arm`'s ranker shows at source position `j`. Monte Carlo cells that saw
/// no conditioning events are `None` — absent, never fabricated.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    n: usize,
    mode: KernelMode,
    cells: [Vec<Option<PositionDistribution>>; 2],
}

impl KernelTable {
    fn arm_index(arm: Arm) -> Result<usize> {
        match arm {
            Arm::Control => Ok(0),
            Arm::Treatment => Ok(1),
            Arm::Holdout => Err(Error::NotAnExperimentArm(arm.label().into())),
        }
    }

    /// Number of positions.
    pub fn n(&self) -> usize {
        self.n
    }

    /// How the table was produced.
    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    /// Kernel of `(arm, source)`, or `None` when a Monte Carlo run never
    /// observed the conditioning event.
    ///
    /// # Errors
    ///
    /// [`Error::NotAnExperimentArm`] for the holdout arm.
    pub fn kernel(&self, arm: Arm, source: Position) -> Result<Option<&PositionDistribution>> {
        let k = Self::arm_index(arm)?;
        Ok(self.cells[k][source - 1].as_ref())
    }

    /// All `(arm, source)` cells that are absent.
    pub fn missing_cells(&self) -> Vec<(Arm, Position)> {
        let mut missing = Vec::new();
        for (k, arm) in [(0, Arm::Control), (1, Arm::Treatment)] {
            for j in 1..=self.n {
                if self.cells[k][j - 1].is_none() {
                    missing.push((arm, j));
                }
            }
        }
        missing
    }

    /// True when every cell is present.
    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|col| col.iter().all(Option::is_some))
    }
}

// ── Exact computation ───────────────────────────────────────────────────

/// Per-chunk accumulator: unnormalized mass per (arm, source, realized).
struct MassGrid {
    n: usize,
    mass: [Vec<f64>; 2], // mass[k][(j-1) * n + (t-1)]
}

impl MassGrid {
    fn new(n: usize) -> Self {
        MassGrid {
            n,
            mass: [vec![0.0; n * n], vec![0.0; n * n]],
        }
    }

    fn add(&mut self, k: usize, source: Position, realized: Position, w: f64) {
        self.mass[k][(source - 1) * self.n + (realized - 1)] += w;
    }

    fn merge_from(&mut self, other: &MassGrid) {
        for k in 0..2 {
            for (a, b) in self.mass[k].iter_mut().zip(&other.mass[k]) {
                *a += *b;
            }
        }
    }

    fn into_table(self, mode: KernelMode) -> KernelTable {
        let n = self.n;
        let cells = self.mass.map(|flat| {
            (0..n)
                .map(|j| {
                    let row = &flat[j * n..(j + 1) * n];
                    if row.iter().sum::<f64>() > 0.0 {
                        Some(
                            PositionDistribution::from_weights(row)
                                .expect("accumulated weights are non-negative"),
                        )
                    } else {
                        None
                    }
                })
                .collect()
        });
        KernelTable { n, mode, cells }
    }
}

/// Arms encoded by a bitmask: bit `i` set means item `i` is in treatment.
fn assignment_from_mask(mask: u64, n: usize, probs: ArmProbabilities) -> (ArmAssignment, f64) {
    let mut weight = 1.0;
    let arms = (0..n)
        .map(|i| {
            if mask >> i & 1 == 1 {
                weight *= probs.p1();
                Arm::Treatment
            } else {
                weight *= probs.p0();
                Arm::Control
            }
        })
        .collect();
    (ArmAssignment::new(arms, probs), weight)
}

/// Accumulates one realized slate into the grid: every item contributes to
/// its own arm's cell at its own source position.
fn accumulate_slate(
    grid: &mut MassGrid,
    assignment: &ArmAssignment,
    r0: &Ranker,
    r1: &Ranker,
    merged: &Ranker,
    w: f64,
) {
    for (k, rk) in [(0usize, r0), (1usize, r1)] {
        let arm = if k == 0 { Arm::Control } else { Arm::Treatment };
        for j in 1..=grid.n {
            let item = rk.item_at(j);
            if assignment.arm(item) == arm {
                grid.add(k, j, merged.position(item), w);
            }
        }
    }
}

/// Exact kernels over masks `lo..hi` for the coin-based strategies.
fn enumerate_coin_chunk(
    s: &Scenario,
    lo: u64,
    hi: u64,
    beta_for: &dyn Fn(&crate::ranking::SutvaPreRanking, &crate::ranking::Conflict) -> Result<f64>,
) -> Result<MassGrid> {
    let n = s.len();
    let mut grid = MassGrid::new(n);
    for mask in lo..hi {
        let (assignment, w_arms) = assignment_from_mask(mask, n, s.probs());
        let pre = crate::ranking::sutva_merge_with(
            s.r0(),
            s.r1(),
            &assignment,
            s.holdout_source(),
        )?;
        let betas: Vec<f64> = pre
            .conflicts()
            .iter()
            .map(|c| beta_for(&pre, c))
            .collect::<Result<_>>()?;
        let c = betas.len();
        let mut coins = vec![false; c];
        for coin_mask in 0..(1u64 << c) {
            let mut w = w_arms;
            for (i, coin) in coins.iter_mut().enumerate() {
                *coin = coin_mask >> i & 1 == 1;
                w *= if *coin { betas[i] } else { 1.0 - betas[i] };
            }
            if w == 0.0 {
                continue;
            }
            let merged = merge_with_coins(&pre, &coins)?;
            accumulate_slate(&mut grid, &assignment, s.r0(), s.r1(), &merged, w);
        }
    }
    Ok(grid)
}

/// Pascal's triangle up to row `n`, exact in f64 for the slate sizes the
/// enumeration bound allows.
fn binomials(n: usize) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; n + 1]; n + 1];
    for (row, cr) in c.iter_mut().enumerate() {
        cr[0] = 1.0;
        for col in 1..=row {
            // Multiplicative identity keeps every intermediate an integer,
            // so values stay exact in f64 at these sizes.
            cr[col] = cr[col - 1] * ((row - col + 1) as f64) / (col as f64);
        }
    }
    c
}

/// Exact kernels over masks `lo..hi` for the label-shuffling baseline.
///
/// With `m` control labels among `n`, the `i`-th control item (control
/// order) lands at position `t` with the hypergeometric-style probability
/// `C(t-1, i-1) * C(n-t, m-i) / C(n, m)`, and symmetrically for treatment;
/// no per-arrangement enumeration is needed.
fn enumerate_label_chunk(s: &Scenario, lo: u64, hi: u64, binom: &[Vec<f64>]) -> Result<MassGrid> {
    let n = s.len();
    let mut grid = MassGrid::new(n);
    for mask in lo..hi {
        let (assignment, w_arms) = assignment_from_mask(mask, n, s.probs());
        let m = assignment.count(Arm::Control);
        for (k, rk, arm, arm_size) in [
            (0usize, s.r0(), Arm::Control, m),
            (1usize, s.r1(), Arm::Treatment, n - m),
        ] {
            let total = binom[n][arm_size];
            let mut i = 0usize; // rank of the item within its arm, 1-based below
            for j in 1..=n {
                let item = rk.item_at(j);
                if assignment.arm(item) != arm {
                    continue;
                }
                i += 1;
                for t in i..=(n - (arm_size - i)) {
                    let ways = binom[t - 1][i - 1] * binom[n - t][arm_size - i];
                    if ways > 0.0 {
                        grid.add(k, j, t, w_arms * ways / total);
                    }
                }
            }
        }
    }
    Ok(grid)
}

/// Exact kernels with the default enumeration bound. See
/// [`compute_kernels_exact_bounded`].
pub fn compute_kernels_exact(s: &Scenario) -> Result<KernelTable> {
    compute_kernels_exact_bounded(s, DEFAULT_ENUMERATION_BOUND)
}

/// Exact kernels by full enumeration: every two-arm assignment, weighted
/// by its probability, crossed with every conflict-coin outcome (or the
/// closed-form label distribution for the shuffling baseline).
///
/// Each cell is normalized by its own conditioning mass, so the result is
/// exact up to f64 rounding; every cell is present.
///
/// # Errors
///
/// - [`Error::EnumerationBound`] when the slate exceeds `bound`.
/// - [`Error::InvalidScenario`] when the scenario carries holdout traffic;
///   enumeration covers two-arm designs, use [`compute_kernels_mc`]
///   otherwise.
pub fn compute_kernels_exact_bounded(s: &Scenario, bound: usize) -> Result<KernelTable> {
    let n = s.len();
    if n > bound {
        return Err(Error::EnumerationBound { n, bound });
    }
    if s.probs().ph() > 0.0 {
        return Err(Error::InvalidScenario(
            "exact kernel enumeration covers two-arm designs; use Monte Carlo \
             estimation for experiments with holdout traffic"
                .into(),
        ));
    }
    let total: u64 = 1u64 << n;
    let chunks: Vec<(u64, u64)> = (0..total)
        .step_by(ENUMERATION_CHUNK as usize)
        .map(|lo| (lo, (lo + ENUMERATION_CHUNK).min(total)))
        .collect();
    let strategy = s.strategy();
    let grids: Vec<Result<MassGrid>> = chunks
        .par_iter()
        .map(|&(lo, hi)| match strategy {
            MergeStrategy::Consistent => enumerate_coin_chunk(s, lo, hi, &|pre, c| {
                consistent_tie_break(c.spot, c.r0_item, c.r1_item, pre.r0(), pre.r1(), pre.p0_eff())
            }),
            MergeStrategy::NaiveEqualTie => enumerate_coin_chunk(s, lo, hi, &|_, _| Ok(0.5)),
            MergeStrategy::RandomSpotLabeling => {
                enumerate_label_chunk(s, lo, hi, &binomials(n))
            }
        })
        .collect();
    let mut acc = MassGrid::new(n);
    for grid in grids {
        acc.merge_from(&grid?);
    }
    Ok(acc.into_table(KernelMode::Exact))
}

// ── Monte Carlo estimation ──────────────────────────────────────────────

/// Per-chunk hit counter for Monte Carlo estimation. Counts are integers,
/// so merging is exact and order-independent.
struct CountGrid {
    n: usize,
    hits: [Vec<u64>; 2],
}

impl CountGrid {
    fn new(n: usize) -> Self {
        CountGrid {
            n,
            hits: [vec![0; n * n], vec![0; n * n]],
        }
    }

    fn add(&mut self, k: usize, source: Position, realized: Position) {
        self.hits[k][(source - 1) * self.n + (realized - 1)] += 1;
    }

    fn merge_from(&mut self, other: &CountGrid) {
        for k in 0..2 {
            for (a, b) in self.hits[k].iter_mut().zip(&other.hits[k]) {
                *a += *b;
            }
        }
    }

    fn into_table(self, samples: u64) -> KernelTable {
        let n = self.n;
        let cells = self.hits.map(|flat| {
            (0..n)
                .map(|j| {
                    let row: Vec<f64> =
                        flat[j * n..(j + 1) * n].iter().map(|&c| c as f64).collect();
                    if row.iter().sum::<f64>() > 0.0 {
                        Some(
                            PositionDistribution::from_weights(&row)
                                .expect("hit counts are non-negative"),
                        )
                    } else {
                        None
                    }
                })
                .collect()
        });
        KernelTable {
            n,
            mode: KernelMode::MonteCarlo { samples },
            cells,
        }
    }
}

fn mc_chunk(s: &Scenario, seed: u64, lo: u64, hi: u64) -> Result<CountGrid> {
    let n = s.len();
    let mut grid = CountGrid::new(n);
    for rep in lo..hi {
        let mut rng = replication_rng(seed, rep);
        let assignment = ArmAssignment::draw(s.probs(), n, &mut rng);
        let pre =
            crate::ranking::sutva_merge_with(s.r0(), s.r1(), &assignment, s.holdout_source())?;
        let merged = merge(&pre, s.strategy(), &mut rng)?;
        for (k, rk, arm) in [(0usize, s.r0(), Arm::Control), (1usize, s.r1(), Arm::Treatment)] {
            for j in 1..=n {
                let item = rk.item_at(j);
                if assignment.arm(item) == arm {
                    grid.add(k, j, merged.position(item));
                }
            }
        }
    }
    Ok(grid)
}

/// Monte Carlo kernel estimate from `samples` independent replications of
/// the experiment, seeded like [`crate::sim::simulate`] (replication `i`
/// reads stream `i` of `seed`).
///
/// Cells whose conditioning event never occurred are left absent; callers
/// can see them via [`KernelTable::missing_cells`]. Results are
/// bit-identical across runs and worker-thread counts.
///
/// # Errors
///
/// [`Error::NoSamples`] when `samples` is zero.
pub fn compute_kernels_mc(s: &Scenario, samples: u64, seed: u64) -> Result<KernelTable> {
    if samples == 0 {
        return Err(Error::NoSamples);
    }
    let chunks: Vec<(u64, u64)> = (0..samples)
        .step_by(MC_CHUNK as usize)
        .map(|lo| (lo, (lo + MC_CHUNK).min(samples)))
        .collect();
    let grids: Vec<Result<CountGrid>> = chunks
        .par_iter()
        .map(|&(lo, hi)| mc_chunk(s, seed, lo, hi))
        .collect();
    let mut acc = CountGrid::new(s.len());
    for grid in grids {
        acc.merge_from(&grid?);
    }
    Ok(acc.into_table(samples))
}

// ── Convolution and checks ──────────────────────────────────────────────

/// Attention effectively received by each source position of `arm`: the
/// attention curve averaged through the kernel,
/// `h^k(j) = Σ_t π_{k,j}(t) · h(t)`.
///
/// Absent Monte Carlo cells yield `NaN` so gaps stay visible.
///
/// # Errors
///
/// - [`Error::DimensionMismatch`] when the curve length differs from the
///   table's position count.
/// - [`Error::NotAnExperimentArm`] for the holdout arm.
pub fn convolve_attention(
    kernels: &KernelTable,
    h: &crate::dist::AttentionFunction,
    arm: Arm,
) -> Result<Vec<f64>> {
    if h.len() != kernels.n() {
        return Err(Error::DimensionMismatch(format!(
            "attention curve covers {} positions, kernels cover {}",
            h.len(),
            kernels.n()
        )));
    }
    (1..=kernels.n())
        .map(|j| match kernels.kernel(arm, j)? {
            Some(d) => d.expectation(h.values()),
            None => Ok(f64::NAN),
        })
        .collect()
}

/// Where one cumulative distribution dips furthest below another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceWitness {
    /// Position with the largest `cdf_b - cdf_a`.
    pub position: Position,
    /// `P(a <= position)`.
    pub cdf_a: f64,
    /// `P(b <= position)`.
    pub cdf_b: f64,
}

impl DominanceWitness {
    /// How far `a`'s cumulative distribution fell below `b`'s; positive
    /// values break dominance.
    pub fn gap(&self) -> f64 {
        self.cdf_b - self.cdf_a
    }
}

/// Outcome of a stochastic-dominance comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dominance {
    /// True when `a` is stochastically earlier than `b`.
    pub holds: bool,
    /// The position where dominance came closest to failing (or failed).
    pub worst: DominanceWitness,
}

/// Checks that `a` is stochastically earlier than (or equal to) `b`:
/// `P(a <= t) >= P(b <= t)` at every position `t`, within
/// [`DOMINANCE_SLACK`].
///
/// For position distributions this is exactly the guarantee that a
/// better source rank never loses attention under any non-increasing
/// attention curve.
///
/// # Panics
///
/// When the two distributions cover different position ranges.
pub fn stochastic_dominates(a: &PositionDistribution, b: &PositionDistribution) -> Dominance {
    assert_eq!(
        a.len(),
        b.len(),
        "dominance comparison needs a common position range"
    );
    let mut worst = DominanceWitness {
        position: 1,
        cdf_a: f64::INFINITY,
        cdf_b: f64::NEG_INFINITY,
    };
    let mut worst_gap = f64::NEG_INFINITY;
    let (mut cdf_a, mut cdf_b) = (0.0, 0.0);
    for t in 1..=a.len() {
        cdf_a += a.mass(t);
        cdf_b += b.mass(t);
        let gap = cdf_b - cdf_a;
        if gap > worst_gap {
            worst_gap = gap;
            worst = DominanceWitness {
                position: t,
                cdf_a,
                cdf_b,
            };
        }
    }
    Dominance {
        holds: worst_gap <= DOMINANCE_SLACK,
        worst,
    }
}

/// The cell where the two arms' kernels disagree the most.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyWorst {
    /// Source position of the worst cell.
    pub source: Position,
    /// Realized position of the worst cell.
    pub realized: Position,
    /// Control-arm mass at that cell.
    pub control_mass: f64,
    /// Treatment-arm mass at that cell.
    pub treatment_mass: f64,
}

/// Result of the arm-invariance check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport {
    /// Tolerance the check was run at.
    pub tolerance: f64,
    /// Largest `|π_{0,j}(t) - π_{1,j}(t)|` over compared cells.
    pub max_deviation: f64,
    /// The worst cell, when at least one source position was compared.
    pub worst: Option<ConsistencyWorst>,
    /// Source positions compared (both arms' kernels present).
    pub compared: usize,
    /// Source positions skipped because a Monte Carlo cell was absent.
    pub skipped: usize,
}

impl ConsistencyReport {
    /// True when every source position was compared and none deviated
    /// beyond the tolerance.
    pub fn passes(&self) -> bool {
        self.skipped == 0 && self.max_deviation <= self.tolerance
    }
}

/// Compares the two arms' kernels position by position.
///
/// A merge procedure is arm-invariant when both arms' items experience
/// identically distributed position noise; readouts of the two arms are
/// then estimates over the same slate distribution and comparing them is
/// fair.
pub fn check_consistency(kernels: &KernelTable, tolerance: f64) -> ConsistencyReport {
    let mut report = ConsistencyReport {
        tolerance,
        max_deviation: 0.0,
        worst: None,
        compared: 0,
        skipped: 0,
    };
    for j in 1..=kernels.n() {
        let c = kernels.kernel(Arm::Control, j).expect("control arm is valid");
        let t = kernels.kernel(Arm::Treatment, j).expect("treatment arm is valid");
        match (c, t) {
            (Some(c), Some(t)) => {
                report.compared += 1;
                for pos in 1..=kernels.n() {
                    let dev = (c.mass(pos) - t.mass(pos)).abs();
                    if report.worst.is_none() || dev > report.max_deviation {
                        report.max_deviation = dev;
                        report.worst = Some(ConsistencyWorst {
                            source: j,
                            realized: pos,
                            control_mass: c.mass(pos),
                            treatment_mass: t.mass(pos),
                        });
                    }
                }
            }
            _ => report.skipped += 1,
        }
    }
    report
}

/// One failed dominance comparison between adjacent source positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityViolation {
    /// Arm whose kernels are out of order.
    pub arm: Arm,
    /// Source position `j` such that `π_{arm,j}` is not stochastically
    /// earlier than `π_{arm,j+1}`.
    pub source: Position,
    /// Where and by how much the cumulative distributions cross.
    pub witness: DominanceWitness,
}

/// Result of the dominance-ordering check.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    /// Every adjacent pair whose dominance comparison failed.
    pub violations: Vec<MonotonicityViolation>,
    /// Adjacent pairs compared (both kernels present).
    pub compared: usize,
    /// Adjacent pairs skipped because a Monte Carlo cell was absent.
    pub skipped: usize,
}

impl MonotonicityReport {
    /// True when every adjacent pair was compared and none violated
    /// dominance.
    pub fn passes(&self) -> bool {
        self.skipped == 0 && self.violations.is_empty()
    }
}

/// Checks, for each arm, that kernels of adjacent source positions are
/// ordered by stochastic dominance.
///
/// Ordered kernels guarantee that an item ranked higher by its own arm
/// never receives less expected attention on the merged slate, whatever
/// the (non-increasing) attention curve — ranking incentives survive the
/// experiment.
pub fn check_monotonicity(kernels: &KernelTable) -> MonotonicityReport {
    let mut report = MonotonicityReport {
        violations: Vec::new(),
        compared: 0,
        skipped: 0,
    };
    for arm in [Arm::Control, Arm::Treatment] {
        for j in 1..kernels.n() {
            let earlier = kernels.kernel(arm, j).expect("arm is valid");
            let later = kernels.kernel(arm, j + 1).expect("arm is valid");
            match (earlier, later) {
                (Some(a), Some(b)) => {
                    report.compared += 1;
                    let dom = stochastic_dominates(a, b);
                    if !dom.holds {
                        report.violations.push(MonotonicityViolation {
                            arm,
                            source: j,
                            witness: dom.worst,
                        });
                    }
                }
                _ => report.skipped += 1,
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::AttentionFunction;
    use crate::ranking::{HoldoutSource, Universe};
    use crate::scenario::ExperimentDesign;

    /// Four items, control slate x1..x4, treatment slate x2,x3,x4,x1,
    /// valuable middle items, attention on the top two positions.
    fn scenario4(p0: f64, strategy: MergeStrategy) -> Scenario {
        let universe = Universe::new(["x1", "x2", "x3", "x4"]).unwrap();
        let u = vec![0.9, 1.0, 1.0, 0.9];
        let h = AttentionFunction::new(vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let r0 = Ranker::from_item_order(vec![0, 1, 2, 3]).unwrap();
        let r1 = Ranker::from_item_order(vec![1, 2, 3, 0]).unwrap();
        Scenario::new(
            universe,
            u,
            h,
            r0,
            r1,
            ExperimentDesign {
                probs: ArmProbabilities::two_arm(p0).unwrap(),
                strategy,
                holdout_source: HoldoutSource::ControlRanker,
            },
        )
        .unwrap()
    }

    fn convolved(s: &Scenario, kernels: &KernelTable, arm: Arm) -> Vec<f64> {
        convolve_attention(kernels, s.h(), arm).unwrap()
    }

    fn assert_close(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (i, (g, w)) in got.iter().zip(want).enumerate() {
            assert!(
                (g - w).abs() <= tol,
                "index {i}: got {g}, want {w} (tol {tol})"
            );
        }
    }

    #[test]
    fn naive_merge_at_uneven_split_distorts_both_arms() {
        let s = scenario4(0.9, MergeStrategy::NaiveEqualTie);
        let kernels = compute_kernels_exact(&s).unwrap();
        assert!(kernels.is_complete());
        assert_close(&convolved(&s, &kernels, Arm::Control), &[1.0, 0.955, 0.095, 0.0], 1e-9);
        assert_close(
            &convolved(&s, &kernels, Arm::Treatment),
            &[1.0, 0.505, 0.045, 0.0],
            1e-9,
        );
        let report = check_consistency(&kernels, 1e-9);
        assert!(!report.passes());
        assert!(report.max_deviation > 0.01);
    }

    #[test]
    fn naive_merge_at_even_split_still_disagrees_across_arms() {
        let s = scenario4(0.5, MergeStrategy::NaiveEqualTie);
        let kernels = compute_kernels_exact(&s).unwrap();
        assert_close(&convolved(&s, &kernels, Arm::Control), &[1.0, 0.875, 0.375, 0.0], 1e-9);
        assert_close(
            &convolved(&s, &kernels, Arm::Treatment),
            &[1.0, 0.625, 0.125, 0.0],
            1e-9,
        );
        assert!(!check_consistency(&kernels, 1e-9).passes());
    }

    #[test]
    fn consistent_merge_gives_identical_kernels_for_both_arms() {
        for (p0, want) in [
            (0.9, [1.0, 0.91, 0.09, 0.0]),
            (0.5, [1.0, 0.75, 0.25, 0.0]),
        ] {
            let s = scenario4(p0, MergeStrategy::Consistent);
            let kernels = compute_kernels_exact(&s).unwrap();
            let report = check_consistency(&kernels, 1e-9);
            assert!(report.passes(), "p0={p0}: {report:?}");
            assert_close(&convolved(&s, &kernels, Arm::Control), &want, 1e-9);
            assert_close(&convolved(&s, &kernels, Arm::Treatment), &want, 1e-9);
            assert!(check_monotonicity(&kernels).passes());
        }
    }

    /// With both arms running the same ranker, nothing can move: every
    /// kernel is a point mass on its own source position.
    #[test]
    fn aa_experiment_kernels_are_point_masses() {
        let universe = Universe::new(["a", "b", "c", "d", "e"]).unwrap();
        let r = Ranker::from_item_order(vec![4, 2, 0, 3, 1]).unwrap();
        let s = Scenario::new(
            universe,
            vec![1.0; 5],
            AttentionFunction::new(vec![1.0, 0.8, 0.5, 0.2, 0.0]).unwrap(),
            r.clone(),
            r,
            ExperimentDesign {
                probs: ArmProbabilities::two_arm(0.3).unwrap(),
                strategy: MergeStrategy::Consistent,
                holdout_source: HoldoutSource::ControlRanker,
            },
        )
        .unwrap();
        let kernels = compute_kernels_exact(&s).unwrap();
        for arm in [Arm::Control, Arm::Treatment] {
            for j in 1..=5 {
                let d = kernels.kernel(arm, j).unwrap().unwrap();
                let delta = PositionDistribution::point_mass(j, 5).unwrap();
                assert!(d.tv_distance(&delta).unwrap() <= 1e-12);
            }
        }
        let h = convolve_attention(&kernels, s.h(), Arm::Control).unwrap();
        assert_close(&h, s.h().values(), 1e-12);
    }

    #[test]
    fn enumeration_bound_is_enforced() {
        let n = 15;
        let universe = Universe::new((0..n).map(|i| format!("i{i:02}"))).unwrap();
        let order: Vec<usize> = (0..n).collect();
        let r0 = Ranker::from_item_order(order.clone()).unwrap();
        let r1 = Ranker::from_item_order(order.into_iter().rev().collect()).unwrap();
        let s = Scenario::new(
            universe,
            vec![1.0; n],
            AttentionFunction::new(vec![1.0; n]).unwrap(),
            r0,
            r1,
            ExperimentDesign {
                probs: ArmProbabilities::two_arm(0.5).unwrap(),
                strategy: MergeStrategy::Consistent,
                holdout_source: HoldoutSource::ControlRanker,
            },
        )
        .unwrap();
        assert!(matches!(
            compute_kernels_exact(&s),
            Err(Error::EnumerationBound { n: 15, bound: 14 })
        ));
        assert!(compute_kernels_exact_bounded(&s, 15).is_ok());
    }

    #[test]
    fn monte_carlo_kernels_approach_exact_kernels() {
        for strategy in [
            MergeStrategy::Consistent,
            MergeStrategy::NaiveEqualTie,
            MergeStrategy::RandomSpotLabeling,
        ] {
            let s = scenario4(0.7, strategy);
            let exact = compute_kernels_exact(&s).unwrap();
            let mc = compute_kernels_mc(&s, 100_000, 9).unwrap();
            assert!(matches!(mc.mode(), KernelMode::MonteCarlo { samples: 100_000 }));
            for arm in [Arm::Control, Arm::Treatment] {
                for j in 1..=4 {
                    let e = exact.kernel(arm, j).unwrap().unwrap();
                    let m = mc.kernel(arm, j).unwrap().unwrap();
                    let tv = e.tv_distance(m).unwrap();
                    assert!(
                        tv < 0.01,
                        "{strategy}: arm {arm} source {j}: tv {tv}"
                    );
                }
            }
        }
    }

    #[test]
    fn monte_carlo_is_thread_count_invariant() {
        let s = scenario4(0.7, MergeStrategy::Consistent);
        let base = compute_kernels_mc(&s, 20_000, 3).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let single = pool.install(|| compute_kernels_mc(&s, 20_000, 3).unwrap());
        assert_eq!(base, single);
        let exact = compute_kernels_exact(&s).unwrap();
        let exact_single = pool.install(|| compute_kernels_exact(&s).unwrap());
        assert_eq!(exact, exact_single);
    }

    #[test]
    fn dominance_comparisons_report_witnesses() {
        let early = PositionDistribution::new(vec![0.7, 0.2, 0.1]).unwrap();
        let late = PositionDistribution::new(vec![0.1, 0.2, 0.7]).unwrap();
        let ok = stochastic_dominates(&early, &late);
        assert!(ok.holds);
        let not = stochastic_dominates(&late, &early);
        assert!(!not.holds);
        assert_eq!(not.worst.position, 1);
        assert!((not.worst.gap() - 0.6).abs() < 1e-15);
        let tie = stochastic_dominates(&early, &early);
        assert!(tie.holds);
    }

    #[test]
    fn holdout_traffic_requires_monte_carlo_kernels() {
        let universe = Universe::new(["x1", "x2", "x3", "x4"]).unwrap();
        let r0 = Ranker::from_item_order(vec![0, 1, 2, 3]).unwrap();
        let r1 = Ranker::from_item_order(vec![1, 2, 3, 0]).unwrap();
        let s = Scenario::new(
            universe,
            vec![0.9, 1.0, 1.0, 0.9],
            AttentionFunction::new(vec![1.0, 1.0, 0.0, 0.0]).unwrap(),
            r0,
            r1,
            ExperimentDesign {
                probs: ArmProbabilities::new(0.6, 0.2, 0.2).unwrap(),
                strategy: MergeStrategy::Consistent,
                holdout_source: HoldoutSource::ControlRanker,
            },
        )
        .unwrap();
        assert!(matches!(
            compute_kernels_exact(&s),
            Err(Error::InvalidScenario(_))
        ));
        let mc = compute_kernels_mc(&s, 20_000, 5).unwrap();
        // Consistency still holds with holdout governed by control.
        let report = check_consistency(&mc, 0.05);
        assert!(report.passes(), "{report:?}");
    }
}
