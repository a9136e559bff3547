//! Shared scenario builders for the benchmark targets.

use prodex_core::{
    ArmProbabilities, AttentionFunction, ExperimentDesign, HoldoutSource, MergeStrategy, Ranker,
    Scenario, Universe,
};

/// Builds a scenario over synthetic ids `d00..` from slate orders.
///
/// # Panics
///
/// Panics on invalid inputs; benchmark fixtures are hard-coded.
pub fn scenario_from_orders(
    r0_order: Vec<usize>,
    r1_order: Vec<usize>,
    u: Vec<f64>,
    h: Vec<f64>,
    p0: f64,
    strategy: MergeStrategy,
) -> Scenario {
    let n = u.len();
    let universe = Universe::new((0..n).map(|i| format!("d{i:02}"))).expect("valid universe");
    Scenario::new(
        universe,
        u,
        AttentionFunction::new(h).expect("valid attention"),
        Ranker::from_item_order(r0_order).expect("valid r0"),
        Ranker::from_item_order(r1_order).expect("valid r1"),
        ExperimentDesign {
            probs: ArmProbabilities::two_arm(p0).expect("valid split"),
            strategy,
            holdout_source: HoldoutSource::ControlRanker,
        },
    )
    .expect("valid scenario")
}

/// `n`-item scenario whose treatment slate swaps the top and bottom
/// halves: the densest conflict structure, so a worst case for both
/// enumeration and per-replication merging.
///
/// # Panics
///
/// Panics when `n < 2`.
pub fn blockswap(n: usize, p0: f64, strategy: MergeStrategy) -> Scenario {
    assert!(n >= 2, "blockswap needs at least two items");
    let half = n / 2;
    let r1 = (half..n).chain(0..half).collect();
    let h = (0..n).map(|i| 1.0 - i as f64 / n as f64).collect();
    scenario_from_orders((0..n).collect(), r1, vec![1.0; n], h, p0, strategy)
}
