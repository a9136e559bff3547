//! Deterministic CSV and JSON renderings of slates, kernels, and readouts.
//!
//! Every float is written with exactly twelve digits after the decimal
//! point, fields appear in a fixed order, and nothing depends on map
//! iteration or thread scheduling — identical inputs render identical
//! bytes.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dist::AttentionFunction;
use crate::error::{Error, Result};
use crate::kernel::{compute_kernels_exact_bounded, convolve_attention, KernelTable};
use crate::ranking::{Arm, Position, Ranker, SutvaPreRanking};
use crate::scenario::Scenario;
use crate::sim::SimulationResult;

/// Fixed-width float rendering used by every exporter.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.12}")
}

fn csv_from_records<I, R, F>(header: &[&str], records: I) -> String
where
    I: IntoIterator<Item = R>,
    F: AsRef<[u8]>,
    R: IntoIterator<Item = F>,
{
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header).expect("writing to memory");
    for record in records {
        writer.write_record(record).expect("writing to memory");
    }
    String::from_utf8(writer.into_inner().expect("writing to memory"))
        .expect("csv output is utf-8")
}

/// One realized merged slate, top-down: the item at each position, its
/// arm, both counterfactual positions, the position it demanded, and
/// whether it was part of a conflict.
///
/// Columns: `position,item,arm,r0_position,r1_position,sutva_value,conflicted`.
///
/// # Errors
///
/// [`Error::DimensionMismatch`] when slate, pre-ranking, and scenario
/// disagree on the item count.
pub fn merged_ranking_csv(
    s: &Scenario,
    pre: &SutvaPreRanking,
    merged: &Ranker,
) -> Result<String> {
    let n = s.len();
    if pre.len() != n || merged.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "scenario has {n} items, pre-ranking {}, slate {}",
            pre.len(),
            merged.len()
        )));
    }
    let rows = (1..=n).map(|p| {
        let item = merged.item_at(p);
        vec![
            p.to_string(),
            s.universe().id(item).to_string(),
            pre.assignment().arm(item).label().to_string(),
            s.r0().position(item).to_string(),
            s.r1().position(item).to_string(),
            pre.value(item).to_string(),
            pre.is_conflicted(item).to_string(),
        ]
    });
    Ok(csv_from_records(
        &[
            "position",
            "item",
            "arm",
            "r0_position",
            "r1_position",
            "sutva_value",
            "conflicted",
        ],
        rows,
    ))
}

/// Full kernel table, one row per (arm, source, realized) cell. Absent
/// Monte Carlo cells produce no rows.
///
/// Columns: `arm,source_position,realized_position,probability`.
pub fn kernel_table_csv(kernels: &KernelTable) -> String {
    let mut rows = Vec::new();
    for arm in [Arm::Control, Arm::Treatment] {
        for j in 1..=kernels.n() {
            if let Some(d) = kernels.kernel(arm, j).expect("arm is valid") {
                for t in 1..=kernels.n() {
                    rows.push(vec![
                        arm.label().to_string(),
                        j.to_string(),
                        t.to_string(),
                        fmt_f64(d.mass(t)),
                    ]);
                }
            }
        }
    }
    csv_from_records(
        &["arm", "source_position", "realized_position", "probability"],
        rows,
    )
}

/// The attention curve next to its kernel-convolved counterparts for both
/// arms. Absent Monte Carlo cells render as `NaN`.
///
/// Columns: `position,h,h_control,h_treatment`.
///
/// # Errors
///
/// [`Error::DimensionMismatch`] when the kernel table and scenario
/// disagree on the position count.
pub fn convolved_attention_csv(s: &Scenario, kernels: &KernelTable) -> Result<String> {
    let h0 = convolve_attention(kernels, s.h(), Arm::Control)?;
    let h1 = convolve_attention(kernels, s.h(), Arm::Treatment)?;
    let rows = (1..=s.len()).map(|p| {
        vec![
            p.to_string(),
            fmt_f64(s.h().value(p)),
            fmt_f64(h0[p - 1]),
            fmt_f64(h1[p - 1]),
        ]
    });
    Ok(csv_from_records(
        &["position", "h", "h_control", "h_treatment"],
        rows,
    ))
}

/// Per-arm simulation statistics.
///
/// Columns: `arm,replications,mean,variance,sd`.
pub fn readout_csv(result: &SimulationResult) -> String {
    let rows = [Arm::Control, Arm::Treatment].map(|arm| {
        let stats = result.stats(arm).expect("arm is valid");
        vec![
            arm.label().to_string(),
            stats.replications.to_string(),
            fmt_f64(stats.mean),
            fmt_f64(stats.variance),
            fmt_f64(stats.sd),
        ]
    });
    csv_from_records(&["arm", "replications", "mean", "variance", "sd"], rows)
}

/// Analytic per-arm expectations included in a [`SimulationReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticReadouts {
    /// Exact expected control readout.
    pub control: f64,
    /// Exact expected treatment readout.
    pub treatment: f64,
}

/// Scenario echo embedded in a [`SimulationReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioEcho {
    /// Item ids in universe order.
    pub items: Vec<String>,
    /// Item ids in control-slate order.
    pub r0: Vec<String>,
    /// Item ids in treatment-slate order.
    pub r1: Vec<String>,
    /// Metric value per item id.
    pub u: BTreeMap<String, f64>,
    /// Attention curve, position 1 first.
    pub h: Vec<f64>,
    /// Control traffic share.
    pub p0: f64,
    /// Treatment traffic share.
    pub p1: f64,
    /// Holdout traffic share.
    pub ph: f64,
    /// Merge strategy name.
    pub strategy: String,
    /// Ranker governing holdout items (`r0` or `r1`).
    pub holdout_source: String,
}

/// Machine-readable simulation report: scenario echo, seeding, per-arm
/// statistics, and (when available) the kernel-based expectations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    /// The simulated scenario.
    pub scenario: ScenarioEcho,
    /// Master seed of the replication streams.
    pub seed: u64,
    /// Number of replications.
    pub replications: u64,
    /// Control-arm statistics.
    pub control: crate::sim::ReadoutStats,
    /// Treatment-arm statistics.
    pub treatment: crate::sim::ReadoutStats,
    /// Exact expectations, absent when kernels were not computed.
    pub analytic: Option<AnalyticReadouts>,
}

fn ids_by_position(s: &Scenario, ranker: &Ranker) -> Vec<String> {
    ranker
        .items_by_position()
        .iter()
        .map(|&item| s.universe().id(item).to_string())
        .collect()
}

/// Assembles the JSON-ready report structure.
pub fn simulation_report(
    s: &Scenario,
    result: &SimulationResult,
    replications: u64,
    analytic: Option<AnalyticReadouts>,
) -> SimulationReport {
    let scenario = ScenarioEcho {
        items: s.universe().ids().iter().map(ToString::to_string).collect(),
        r0: ids_by_position(s, s.r0()),
        r1: ids_by_position(s, s.r1()),
        u: s
            .universe()
            .ids()
            .iter()
            .zip(s.u())
            .map(|(id, &v)| (id.to_string(), v))
            .collect(),
        h: s.h().values().to_vec(),
        p0: s.probs().p0(),
        p1: s.probs().p1(),
        ph: s.probs().ph(),
        strategy: s.strategy().name().to_string(),
        holdout_source: match s.holdout_source() {
            crate::ranking::HoldoutSource::ControlRanker => "r0".to_string(),
            crate::ranking::HoldoutSource::TreatmentRanker => "r1".to_string(),
        },
    };
    SimulationReport {
        scenario,
        seed: result.master_seed,
        replications,
        control: result.control,
        treatment: result.treatment,
        analytic,
    }
}

/// Pretty-printed JSON with a trailing newline; field order is fixed by
/// the report structure.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

// ── Plot data ───────────────────────────────────────────────────────────

/// Long-format plot rows: one series per source position of one arm,
/// `x` the realized position, `y` its probability.
///
/// Columns: `series,x,y`.
///
/// # Errors
///
/// [`Error::NotAnExperimentArm`] for the holdout arm.
pub fn kernel_profile_plot_csv(kernels: &KernelTable, arm: Arm) -> Result<String> {
    let mut rows = Vec::new();
    for j in 1..=kernels.n() {
        if let Some(d) = kernels.kernel(arm, j)? {
            for t in 1..=kernels.n() {
                rows.push(vec![
                    format!("source={j}"),
                    t.to_string(),
                    fmt_f64(d.mass(t)),
                ]);
            }
        }
    }
    Ok(csv_from_records(&["series", "x", "y"], rows))
}

/// Long-format plot rows sweeping the control share: one series per `p0`,
/// `x` the realized position of the control-arm kernel at `source`, `y`
/// its probability. Kernels are recomputed exactly for each `p0`.
///
/// Columns: `series,x,y`.
///
/// # Errors
///
/// Propagates scenario and enumeration errors for each swept split.
pub fn kernel_split_sweep_plot_csv(
    s: &Scenario,
    source: Position,
    p0_grid: &[f64],
    bound: usize,
) -> Result<String> {
    if source == 0 || source > s.len() {
        return Err(Error::DimensionMismatch(format!(
            "source position {source} out of range 1..={}",
            s.len()
        )));
    }
    let mut rows = Vec::new();
    for &p0 in p0_grid {
        let swept = s.with_two_arm_split(p0)?;
        let kernels = compute_kernels_exact_bounded(&swept, bound)?;
        let d = kernels
            .kernel(Arm::Control, source)?
            .expect("exact kernels are complete");
        for t in 1..=kernels.n() {
            rows.push(vec![format!("p0={p0}"), t.to_string(), fmt_f64(d.mass(t))]);
        }
    }
    Ok(csv_from_records(&["series", "x", "y"], rows))
}

/// Long-format plot rows for step-attention convolutions: one series per
/// step depth `j`, `x` the source position, `y` the convolved attention
/// of the control arm under the curve that attends positions `1..=j`.
///
/// Columns: `series,x,y`.
///
/// # Errors
///
/// [`Error::DimensionMismatch`] when the kernel table and scenario
/// disagree on the position count.
pub fn step_attention_plot_csv(s: &Scenario, kernels: &KernelTable) -> Result<String> {
    let n = s.len();
    if kernels.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "kernel table covers {} positions, scenario has {n}",
            kernels.n()
        )));
    }
    let mut rows = Vec::new();
    for j in 1..=n {
        let step = AttentionFunction::step(j, n)?;
        let convolved = convolve_attention(kernels, &step, Arm::Control)?;
        for (idx, y) in convolved.iter().enumerate() {
            rows.push(vec![
                format!("step={j}"),
                (idx + 1).to_string(),
                fmt_f64(*y),
            ]);
        }
    }
    Ok(csv_from_records(&["series", "x", "y"], rows))
}
