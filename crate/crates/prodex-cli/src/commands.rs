//! Command implementations. Each returns the process exit code.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use prodex_core::export::{
    convolved_attention_csv, fmt_f64, kernel_profile_plot_csv, kernel_split_sweep_plot_csv,
    kernel_table_csv, merged_ranking_csv, readout_csv, simulation_report, step_attention_plot_csv,
    to_json_string, AnalyticReadouts,
};
use prodex_core::{
    check_consistency, check_monotonicity, compute_kernels_exact_bounded, compute_kernels_mc,
    expected_readout_via_kernels, merge, replication_rng, simulate, sutva_merge_with, Arm,
    ArmAssignment, ConsistencyReport, KernelTable, MergeStrategy, MonotonicityReport, Scenario,
    DEFAULT_ENUMERATION_BOUND, ENUMERATION_BOUND_ENV,
};
use thiserror::Error;

use crate::cli::{CheckArgs, Command, Format, KernelsArgs, MergeArgs, Mode, Plot, SimulateArgs};
use crate::config::{ConfigError, ScenarioConfig};

/// Control shares swept by `kernels --plot split-sweep`.
const SPLIT_SWEEP_GRID: [f64; 4] = [0.5, 0.7, 0.9, 0.99];

/// Default Monte Carlo sample count.
const DEFAULT_SAMPLES: u64 = 100_000;

/// Default replication count of `simulate`.
const DEFAULT_REPLICATIONS: u64 = 100_000;

/// Anything that aborts a command with exit code 2.
#[derive(Debug, Error)]
pub enum CliError {
    /// Config file problems (I/O, TOML syntax, field validation).
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// Scenario or computation errors from the core library.
    #[error(transparent)]
    Core(#[from] prodex_core::Error),
    /// Failures writing an output file.
    #[error("cannot write `{path}`: {source}")]
    Write {
        /// The file that could not be written.
        path: PathBuf,
        /// The underlying I/O error.
        source: std::io::Error,
    },
    /// An environment variable held an unusable value.
    #[error("environment variable `{var}`: {message}")]
    Env {
        /// The variable's name.
        var: &'static str,
        /// What was wrong with it.
        message: String,
    },
}

/// Dispatches a parsed command.
///
/// # Errors
///
/// Any [`CliError`]; the caller maps it to exit code 2.
pub fn run(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Merge(args) => cmd_merge(&args),
        Command::Kernels(args) => cmd_kernels(&args),
        Command::Check(args) => cmd_check(&args),
        Command::Simulate(args) => cmd_simulate(&args),
    }
}

/// Loads the config and applies a `--strategy` override, if any.
fn load_scenario(
    config: &Path,
    strategy: Option<&str>,
) -> Result<(Scenario, ScenarioConfig), CliError> {
    let cfg = ScenarioConfig::load(config)?;
    let mut scenario = cfg.build()?;
    if let Some(name) = strategy {
        let strategy: MergeStrategy = name.parse()?;
        scenario = scenario.with_strategy(strategy)?;
    }
    Ok((scenario, cfg))
}

/// The exact-enumeration size cap, honoring the override variable.
fn enumeration_bound() -> Result<usize, CliError> {
    match std::env::var(ENUMERATION_BOUND_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_ENUMERATION_BOUND),
        Err(err) => Err(CliError::Env {
            var: ENUMERATION_BOUND_ENV,
            message: err.to_string(),
        }),
        Ok(raw) => raw.trim().parse().map_err(|_| CliError::Env {
            var: ENUMERATION_BOUND_ENV,
            message: format!("expected a positive integer, got `{raw}`"),
        }),
    }
}

/// Writes `content` to `out` when given, otherwise to stdout.
fn write_artifact(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, content).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            print!("{content}");
            std::io::stdout().flush().map_err(|source| CliError::Write {
                path: PathBuf::from("<stdout>"),
                source,
            })
        }
    }
}

/// `out.csv` → `out_attention.csv`, preserving directory and extension.
fn attention_sibling(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut name = format!("{stem}_attention");
    if let Some(ext) = out.extension() {
        name.push('.');
        name.push_str(&ext.to_string_lossy());
    }
    out.with_file_name(name)
}

fn cmd_merge(args: &MergeArgs) -> Result<i32, CliError> {
    let (scenario, cfg) = load_scenario(&args.config, args.strategy.as_deref())?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);

    let mut rng = replication_rng(seed, 0);
    let assignment = ArmAssignment::draw(scenario.probs(), scenario.len(), &mut rng);
    let pre = sutva_merge_with(
        scenario.r0(),
        scenario.r1(),
        &assignment,
        scenario.holdout_source(),
    )?;
    let merged = merge(&pre, scenario.strategy(), &mut rng)?;
    let csv = merged_ranking_csv(&scenario, &pre, &merged)?;

    write_artifact(args.out.as_deref(), &csv)?;
    if let Some(out) = &args.out {
        eprintln!(
            "wrote merged slate ({} items, {} conflicts, seed {seed}) to {}",
            scenario.len(),
            pre.conflicts().len(),
            out.display()
        );
    }
    Ok(0)
}

/// Computes the kernel table in the requested mode.
fn kernels_for(
    scenario: &Scenario,
    mode: Mode,
    samples: Option<u64>,
    seed: u64,
) -> Result<KernelTable, CliError> {
    match mode {
        Mode::Exact => Ok(compute_kernels_exact_bounded(scenario, enumeration_bound()?)?),
        Mode::Mc => {
            let samples = samples.unwrap_or(DEFAULT_SAMPLES);
            Ok(compute_kernels_mc(scenario, samples, seed)?)
        }
    }
}

fn cmd_kernels(args: &KernelsArgs) -> Result<i32, CliError> {
    let (scenario, cfg) = load_scenario(&args.config, args.strategy.as_deref())?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);

    if let Some(plot) = args.plot {
        let csv = match plot {
            Plot::KernelProfile => {
                let kernels = kernels_for(&scenario, args.mode, args.samples, seed)?;
                kernel_profile_plot_csv(&kernels, Arm::Control)?
            }
            // The sweep recomputes kernels per grid point, exactly.
            Plot::SplitSweep => {
                let source = args.source.unwrap_or(scenario.len().div_ceil(2));
                kernel_split_sweep_plot_csv(
                    &scenario,
                    source,
                    &SPLIT_SWEEP_GRID,
                    enumeration_bound()?,
                )?
            }
            Plot::StepAttention => {
                let kernels = kernels_for(&scenario, args.mode, args.samples, seed)?;
                step_attention_plot_csv(&scenario, &kernels)?
            }
        };
        write_artifact(args.out.as_deref(), &csv)?;
        if let Some(out) = &args.out {
            eprintln!("wrote plot data to {}", out.display());
        }
        return Ok(0);
    }

    let kernels = kernels_for(&scenario, args.mode, args.samples, seed)?;
    let missing = kernels.missing_cells();
    if !missing.is_empty() {
        eprintln!(
            "note: {} kernel cell(s) saw no realization and are omitted",
            missing.len()
        );
    }
    let table = kernel_table_csv(&kernels);
    let attention = convolved_attention_csv(&scenario, &kernels)?;
    match &args.out {
        Some(out) => {
            let sibling = attention_sibling(out);
            write_artifact(Some(out), &table)?;
            write_artifact(Some(&sibling), &attention)?;
            eprintln!(
                "wrote kernel table to {} and convolved attention to {}",
                out.display(),
                sibling.display()
            );
        }
        None => {
            write_artifact(None, &table)?;
            println!();
            write_artifact(None, &attention)?;
        }
    }
    Ok(0)
}

/// Renders the consistency verdict lines.
fn print_consistency(report: &ConsistencyReport) {
    let verdict = if report.passes() { "pass" } else { "fail" };
    match &report.worst {
        Some(worst) => println!(
            "consistency: max deviation {} at source {} realized {} \
             (tolerance {}, {} cells compared): {verdict}",
            fmt_f64(report.max_deviation),
            worst.source,
            worst.realized,
            report.tolerance,
            report.compared,
        ),
        None => println!(
            "consistency: no comparable cells (tolerance {}): {verdict}",
            report.tolerance
        ),
    }
    if report.skipped > 0 {
        println!(
            "consistency: {} cell(s) skipped because one arm saw no realization",
            report.skipped
        );
    }
}

/// Renders the monotonicity verdict lines.
fn print_monotonicity(report: &MonotonicityReport) {
    let verdict = if report.passes() { "pass" } else { "fail" };
    println!(
        "monotonicity: {} violation(s) across {} adjacent source pairs: {verdict}",
        report.violations.len(),
        report.compared,
    );
    if let Some(v) = report.violations.first() {
        println!(
            "monotonicity: first violation in arm {} at sources {}<{}: \
             cdf gap {} at realized position {}",
            v.arm.label(),
            v.source,
            v.source + 1,
            fmt_f64(v.witness.gap()),
            v.witness.position,
        );
    }
    if report.skipped > 0 {
        println!(
            "monotonicity: {} pair(s) skipped because a kernel cell is absent",
            report.skipped
        );
    }
}

fn cmd_check(args: &CheckArgs) -> Result<i32, CliError> {
    let (scenario, cfg) = load_scenario(&args.config, args.strategy.as_deref())?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let kernels = kernels_for(&scenario, args.mode, args.samples, seed)?;

    let consistency = check_consistency(&kernels, args.tolerance);
    let monotonicity = check_monotonicity(&kernels);
    print_consistency(&consistency);
    print_monotonicity(&monotonicity);

    let overall = consistency.passes() && monotonicity.passes();
    let word = |ok: bool| if ok { "pass" } else { "fail" };
    println!(
        "verdict consistency={} monotonicity={} overall={}",
        word(consistency.passes()),
        word(monotonicity.passes()),
        word(overall),
    );
    Ok(if overall { 0 } else { 1 })
}

/// Exact expected readouts, when the scenario is small enough to enumerate.
fn analytic_readouts(scenario: &Scenario) -> Result<Option<AnalyticReadouts>, CliError> {
    if scenario.len() > enumeration_bound()? || scenario.probs().ph() > 0.0 {
        return Ok(None);
    }
    let kernels = compute_kernels_exact_bounded(scenario, enumeration_bound()?)?;
    Ok(Some(AnalyticReadouts {
        control: expected_readout_via_kernels(scenario, &kernels, Arm::Control)?,
        treatment: expected_readout_via_kernels(scenario, &kernels, Arm::Treatment)?,
    }))
}

/// Renders the human-readable per-arm summary table.
fn summary_lines(
    result: &prodex_core::SimulationResult,
    analytic: Option<&AnalyticReadouts>,
) -> Vec<String> {
    let mut lines = vec![format!(
        "{:<10} {:>18} {:>18} {:>18}",
        "arm", "mean", "sd", "analytic"
    )];
    for arm in [Arm::Control, Arm::Treatment] {
        let stats = result.stats(arm).expect("experiment arm");
        let exact = analytic.map_or_else(
            || "n/a".to_string(),
            |a| match arm {
                Arm::Control => fmt_f64(a.control),
                Arm::Treatment => fmt_f64(a.treatment),
                Arm::Holdout => unreachable!("loop covers experiment arms only"),
            },
        );
        lines.push(format!(
            "{:<10} {:>18} {:>18} {:>18}",
            arm.label(),
            fmt_f64(stats.mean),
            fmt_f64(stats.sd),
            exact,
        ));
    }
    lines
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32, CliError> {
    let (scenario, cfg) = load_scenario(&args.config, args.strategy.as_deref())?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let replications = args
        .replications
        .or(cfg.replications)
        .unwrap_or(DEFAULT_REPLICATIONS);

    let result = simulate(&scenario, replications, seed)?;
    let analytic = analytic_readouts(&scenario)?;
    let artifact = match args.format {
        Format::Csv => readout_csv(&result),
        Format::Json => to_json_string(&simulation_report(&scenario, &result, replications, analytic)),
    };

    let summary = summary_lines(&result, analytic.as_ref());
    match &args.out {
        Some(out) => {
            write_artifact(Some(out), &artifact)?;
            println!(
                "simulated {replications} replications (seed {seed}, strategy {})",
                scenario.strategy()
            );
            for line in &summary {
                println!("{line}");
            }
            println!("wrote artifact to {}", out.display());
        }
        None => {
            write_artifact(None, &artifact)?;
            eprintln!(
                "simulated {replications} replications (seed {seed}, strategy {})",
                scenario.strategy()
            );
            for line in &summary {
                eprintln!("{line}");
            }
        }
    }
    Ok(0)
}
