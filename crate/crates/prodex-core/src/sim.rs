//! Experiment readouts and the deterministic replication simulator.
//!
//! The per-arm readout is an inverse-propensity estimate: sum the metric
//! times the attention at each of the arm's realized positions, then scale
//! by the arm's traffic share. On the counterfactual slate (the arm's own
//! ranker applied to everything) the same quantity needs no scaling; the
//! merge is unbiased for an arm exactly when the expected experiment
//! readout equals a kernel-weighted counterfactual readout, which
//! [`expected_readout_via_kernels`] computes in closed form.
//!
//! [`simulate`] replays the experiment many times — fresh arm assignment
//! and fresh conflict coins per replication, each on its own seed stream —
//! and reports per-arm mean, variance, and standard error. Replications
//! are independent streams, so the simulator parallelizes without losing
//! bit-for-bit reproducibility.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{convolve_attention, KernelTable};
use crate::merge::merge;
use crate::ranking::{sutva_merge_with, Arm, ArmAssignment, Ranker};
use crate::rng::replication_rng;
use crate::scenario::Scenario;

/// Replications per parallel work chunk. Chunk boundaries are fixed so
/// the reduction order — and the result bit pattern — never depends on
/// the number of worker threads.
const SIM_CHUNK: u64 = 4096;

/// Moment summary of one arm's readouts across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutStats {
    /// Mean readout over replications.
    pub mean: f64,
    /// Sample variance (denominator `N - 1`).
    pub variance: f64,
    /// Standard error of the mean, `sqrt(variance / N)`.
    pub sd: f64,
    /// Number of replications.
    pub replications: u64,
}

/// Per-arm statistics of one simulated experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    /// Control-arm readout statistics.
    pub control: ReadoutStats,
    /// Treatment-arm readout statistics.
    pub treatment: ReadoutStats,
    /// Master seed the replication streams were derived from.
    pub master_seed: u64,
}

impl SimulationResult {
    /// Statistics of one experiment arm.
    ///
    /// # Errors
    ///
    /// [`Error::NotAnExperimentArm`] for the holdout arm.
    pub fn stats(&self, arm: Arm) -> Result<ReadoutStats> {
        match arm {
            Arm::Control => Ok(self.control),
            Arm::Treatment => Ok(self.treatment),
            Arm::Holdout => Err(Error::NotAnExperimentArm(arm.label().into())),
        }
    }
}

fn require_experiment_arm(arm: Arm) -> Result<()> {
    if arm == Arm::Holdout {
        return Err(Error::NotAnExperimentArm(arm.label().into()));
    }
    Ok(())
}

/// The readout an arm would produce if its ranker served all traffic:
/// `Σ_d u(d) · h(R_k(d))`, no scaling.
///
/// # Errors
///
/// [`Error::NotAnExperimentArm`] for the holdout arm.
pub fn counterfactual_readout(s: &Scenario, arm: Arm) -> Result<f64> {
    require_experiment_arm(arm)?;
    let ranker = s.ranker(arm);
    Ok((0..s.len())
        .map(|item| s.utility(item) * s.h().value(ranker.position(item)))
        .sum())
}

/// The inverse-propensity readout of one arm on a realized merged slate:
/// `(1 / p_k) · Σ_{d in arm k} u(d) · h(R(d))`.
///
/// Holdout items never contribute. An arm that happened to receive no
/// items reads out 0.
///
/// # Errors
///
/// - [`Error::NotAnExperimentArm`] for the holdout arm.
/// - [`Error::DimensionMismatch`] when the slate or assignment is not
///   aligned to the scenario.
/// - [`Error::DegenerateArmShare`] when the arm's design share is 0.
pub fn experiment_readout(
    s: &Scenario,
    merged: &Ranker,
    assignment: &ArmAssignment,
    arm: Arm,
) -> Result<f64> {
    require_experiment_arm(arm)?;
    let n = s.len();
    if merged.len() != n || assignment.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "scenario has {n} items, slate has {}, assignment covers {}",
            merged.len(),
            assignment.len()
        )));
    }
    let p = assignment.probs().prob(arm);
    if p <= 0.0 {
        return Err(Error::DegenerateArmShare {
            arm: arm.label().into(),
        });
    }
    let total: f64 = assignment
        .items_in(arm)
        .map(|item| s.utility(item) * s.h().value(merged.position(item)))
        .sum();
    Ok(total / p)
}

/// The exact expectation of [`experiment_readout`] computed through the
/// position kernels: `Σ_j u(J_k(j)) · h^k(j)`, where `h^k` is the
/// kernel-convolved attention of the arm.
///
/// With Monte Carlo kernels that have absent cells the result is `NaN`;
/// exact kernels always yield a number.
///
/// # Errors
///
/// - [`Error::NotAnExperimentArm`] for the holdout arm.
/// - [`Error::DimensionMismatch`] when the kernel table and scenario
///   disagree on the position count.
pub fn expected_readout_via_kernels(
    s: &Scenario,
    kernels: &KernelTable,
    arm: Arm,
) -> Result<f64> {
    require_experiment_arm(arm)?;
    if kernels.n() != s.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel table covers {} positions, scenario has {}",
            kernels.n(),
            s.len()
        )));
    }
    let hk = convolve_attention(kernels, s.h(), arm)?;
    let ranker = s.ranker(arm);
    Ok((1..=s.len())
        .map(|j| s.utility(ranker.item_at(j)) * hk[j - 1])
        .sum())
}

/// Partial readout sums of one chunk of replications, accumulated in
/// replication order.
#[derive(Default, Clone, Copy)]
struct MomentSums {
    sum: [f64; 2],
    sum_sq: [f64; 2],
}

impl MomentSums {
    fn add(&mut self, readouts: [f64; 2]) {
        for (k, x) in readouts.into_iter().enumerate() {
            self.sum[k] += x;
            self.sum_sq[k] += x * x;
        }
    }

    fn merge_from(&mut self, other: &MomentSums) {
        for k in 0..2 {
            self.sum[k] += other.sum[k];
            self.sum_sq[k] += other.sum_sq[k];
        }
    }
}

fn run_replication(s: &Scenario, master_seed: u64, rep: u64) -> Result<[f64; 2]> {
    let mut rng = replication_rng(master_seed, rep);
    let assignment = ArmAssignment::draw(s.probs(), s.len(), &mut rng);
    let pre = sutva_merge_with(s.r0(), s.r1(), &assignment, s.holdout_source())?;
    let merged = merge(&pre, s.strategy(), &mut rng)?;
    Ok([
        experiment_readout(s, &merged, &assignment, Arm::Control)?,
        experiment_readout(s, &merged, &assignment, Arm::Treatment)?,
    ])
}

fn stats_from(sum: f64, sum_sq: f64, n: u64) -> ReadoutStats {
    let nf = n as f64;
    let mean = sum / nf;
    // Sample variance with the N-1 denominator; clamp the tiny negative
    // values rounding can produce when the readouts barely vary.
    let variance = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    ReadoutStats {
        mean,
        variance,
        sd: (variance / nf).sqrt(),
        replications: n,
    }
}

/// Replays the experiment `replications` times and summarizes both arms'
/// readouts.
///
/// Replication `i` draws its arm assignment and conflict coins from
/// stream `i` of `master_seed` (see [`replication_rng`]), so results are
/// bit-identical across runs and worker-thread counts.
///
/// # Errors
///
/// [`Error::TooFewReplications`] when `replications < 2` (the sample
/// variance needs at least two observations). Merge errors propagate.
pub fn simulate(s: &Scenario, replications: u64, master_seed: u64) -> Result<SimulationResult> {
    if replications < 2 {
        return Err(Error::TooFewReplications(replications));
    }
    let chunks: Vec<(u64, u64)> = (0..replications)
        .step_by(SIM_CHUNK as usize)
        .map(|lo| (lo, (lo + SIM_CHUNK).min(replications)))
        .collect();
    let partials: Vec<Result<MomentSums>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut sums = MomentSums::default();
            for rep in lo..hi {
                sums.add(run_replication(s, master_seed, rep)?);
            }
            Ok(sums)
        })
        .collect();
    let mut total = MomentSums::default();
    for p in partials {
        total.merge_from(&p?);
    }
    Ok(SimulationResult {
        control: stats_from(total.sum[0], total.sum_sq[0], replications),
        treatment: stats_from(total.sum[1], total.sum_sq[1], replications),
        master_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::AttentionFunction;
    use crate::kernel::compute_kernels_exact;
    use crate::merge::{merge_with_coins, MergeStrategy};
    use crate::ranking::{ArmProbabilities, HoldoutSource, Universe};
    use crate::scenario::ExperimentDesign;

    fn scenario4(p0: f64, strategy: MergeStrategy) -> Scenario {
        let universe = Universe::new(["x1", "x2", "x3", "x4"]).unwrap();
        Scenario::new(
            universe,
            vec![0.9, 1.0, 1.0, 0.9],
            AttentionFunction::new(vec![1.0, 1.0, 0.0, 0.0]).unwrap(),
            Ranker::from_item_order(vec![0, 1, 2, 3]).unwrap(),
            Ranker::from_item_order(vec![1, 2, 3, 0]).unwrap(),
            ExperimentDesign {
                probs: ArmProbabilities::two_arm(p0).unwrap(),
                strategy,
                holdout_source: HoldoutSource::ControlRanker,
            },
        )
        .unwrap()
    }

    #[test]
    fn counterfactual_readouts_follow_each_ranker() {
        let s = scenario4(0.9, MergeStrategy::Consistent);
        // Control slate puts x1, x2 on the attended positions; treatment
        // puts x2, x3 there.
        assert!((counterfactual_readout(&s, Arm::Control).unwrap() - 1.9).abs() < 1e-12);
        assert!((counterfactual_readout(&s, Arm::Treatment).unwrap() - 2.0).abs() < 1e-12);
        assert!(counterfactual_readout(&s, Arm::Holdout).is_err());
    }

    /// Hand-checked single realization: x2 in treatment, everyone else in
    /// control, control wins the only conflict. Slate is x1,x2,x3,x4, so
    /// control reads (0.9·1)/0.9 = 1 and treatment reads (1·1)/0.1 = 10.
    #[test]
    fn experiment_readout_scales_by_arm_share() {
        let s = scenario4(0.9, MergeStrategy::Consistent);
        let arms = vec![Arm::Control, Arm::Treatment, Arm::Control, Arm::Control];
        let assignment = ArmAssignment::new(arms, s.probs());
        let pre = sutva_merge_with(s.r0(), s.r1(), &assignment, HoldoutSource::ControlRanker)
            .unwrap();
        let merged = merge_with_coins(&pre, &[true]).unwrap();
        let agg0 = experiment_readout(&s, &merged, &assignment, Arm::Control).unwrap();
        let agg1 = experiment_readout(&s, &merged, &assignment, Arm::Treatment).unwrap();
        assert!((agg0 - 1.0).abs() < 1e-12, "agg0 = {agg0}");
        assert!((agg1 - 10.0).abs() < 1e-12, "agg1 = {agg1}");
    }

    #[test]
    fn empty_arm_reads_zero() {
        let s = scenario4(0.9, MergeStrategy::Consistent);
        let arms = vec![Arm::Control; 4];
        let assignment = ArmAssignment::new(arms, s.probs());
        let pre = sutva_merge_with(s.r0(), s.r1(), &assignment, HoldoutSource::ControlRanker)
            .unwrap();
        let merged = merge_with_coins(&pre, &[]).unwrap();
        let agg1 = experiment_readout(&s, &merged, &assignment, Arm::Treatment).unwrap();
        assert_eq!(agg1, 0.0);
    }

    /// The four anchor expectations, computed through exact kernels:
    /// fair-coin merges read high for control and low for treatment, the
    /// weighted coin restores the counterfactual control readout and a
    /// small holdout-free uplift for treatment.
    #[test]
    fn kernel_expectations_match_hand_derived_values() {
        let cases = [
            (0.9, MergeStrategy::NaiveEqualTie, 1.95, 1.5455),
            (0.5, MergeStrategy::NaiveEqualTie, 2.15, 1.7375),
            (0.9, MergeStrategy::Consistent, 1.9, 1.991),
            (0.5, MergeStrategy::Consistent, 1.9, 1.975),
        ];
        for (p0, strategy, want0, want1) in cases {
            let s = scenario4(p0, strategy);
            let kernels = compute_kernels_exact(&s).unwrap();
            let got0 = expected_readout_via_kernels(&s, &kernels, Arm::Control).unwrap();
            let got1 = expected_readout_via_kernels(&s, &kernels, Arm::Treatment).unwrap();
            assert!(
                (got0 - want0).abs() <= 1e-9,
                "p0={p0} {strategy}: control {got0} vs {want0}"
            );
            assert!(
                (got1 - want1).abs() <= 1e-9,
                "p0={p0} {strategy}: treatment {got1} vs {want1}"
            );
        }
    }

    #[test]
    fn simulation_means_match_kernel_expectations() {
        let s = scenario4(0.9, MergeStrategy::NaiveEqualTie);
        let kernels = compute_kernels_exact(&s).unwrap();
        let result = simulate(&s, 20_000, 7).unwrap();
        for arm in [Arm::Control, Arm::Treatment] {
            let analytic = expected_readout_via_kernels(&s, &kernels, arm).unwrap();
            let stats = result.stats(arm).unwrap();
            assert!(
                (stats.mean - analytic).abs() <= 4.0 * stats.sd,
                "{arm}: mean {} vs analytic {analytic} (sd {})",
                stats.mean,
                stats.sd
            );
        }
    }

    #[test]
    fn simulation_is_reproducible_and_thread_count_invariant() {
        let s = scenario4(0.5, MergeStrategy::Consistent);
        let a = simulate(&s, 10_000, 11).unwrap();
        let b = simulate(&s, 10_000, 11).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let c = pool.install(|| simulate(&s, 10_000, 11).unwrap());
        assert_eq!(a, c);
        let d = simulate(&s, 10_000, 12).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn simulation_needs_two_replications() {
        let s = scenario4(0.5, MergeStrategy::Consistent);
        assert!(matches!(
            simulate(&s, 1, 0),
            Err(Error::TooFewReplications(1))
        ));
        assert!(simulate(&s, 2, 0).is_ok());
    }

    #[test]
    fn variance_uses_sample_denominator() {
        // Two replications with known readouts: variance is the squared
        // half-gap times two, i.e. sum of squared deviations over N-1 = 1.
        let s = scenario4(0.5, MergeStrategy::Consistent);
        let result = simulate(&s, 2, 123).unwrap();
        for arm in [Arm::Control, Arm::Treatment] {
            let x: Vec<f64> = (0..2)
                .map(|rep| run_replication(&s, 123, rep).unwrap()[if arm == Arm::Control { 0 } else { 1 }])
                .collect();
            let mean = (x[0] + x[1]) / 2.0;
            let var = (x[0] - mean).powi(2) + (x[1] - mean).powi(2);
            let stats = result.stats(arm).unwrap();
            assert!((stats.mean - mean).abs() < 1e-12);
            assert!((stats.variance - var).abs() < 1e-9, "{} vs {var}", stats.variance);
            assert!((stats.sd - (var / 2.0).sqrt()).abs() < 1e-9);
        }
    }
}
