//! Command-line front end: parse a JSON run configuration, build the model,
//! run verification / simulation / consensus / sweeps, and emit CSV
//! trajectories and JSON reports.
//!
//! Exit codes: 0 = success (for `verify`, a full structural pass; for
//! `consensus`, all conditions pass and the run reaches consensus),
//! 2 = a check or consensus outcome failed, 1 = usage or configuration
//! error. Nothing is written on exit 1.

mod config;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{BuiltModel, RunConfig, SweepAxis};
use ktopical::core::{StateVector, ToleranceConfig};
use ktopical::dynamics::{fmt_g17, simulate_recorded, StepConfig, SystemDefinition};
use ktopical::mas::{consensus_report, run_consensus, ConsensusOutcome, ConsensusRun};
use ktopical::verify::{classify, SamplePlan, Verdict};
use rayon::prelude::*;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ktopical",
    version,
    about = "Verify, simulate, and sweep monotone plus-homogeneous dynamical systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the model's structural properties and write a JSON report.
    Verify(RunArgs),
    /// Simulate from the configured initial state; write a trajectory CSV
    /// and a convergence report.
    Simulate(RunArgs),
    /// Check the consensus conditions and run a consensus experiment.
    Consensus(RunArgs),
    /// Run the configured parameter sweep; write one CSV row per run.
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reports and CSV files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Maximum number of concurrent sweep runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides the plan seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify(args) => cmd_verify(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Consensus(args) => cmd_consensus(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

struct Prepared {
    config: RunConfig,
    base_dir: PathBuf,
    model: BuiltModel,
    step: StepConfig,
}

fn prepare(args: &RunArgs) -> Result<Prepared> {
    if args.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let config = RunConfig::load(&args.config)?;
    let base_dir = args
        .config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let model = config.build_model(&base_dir)?;
    let step = config.step_config();
    step.validate()?;
    Ok(Prepared {
        config,
        base_dir,
        model,
        step,
    })
}

fn write_output(out_dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("output directory `{}`", out_dir.display()))?;
    let path = out_dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing `{}`", path.display()))?;
    Ok(path)
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

fn cmd_verify(args: &RunArgs) -> Result<ExitCode> {
    let prepared = prepare(args)?;
    let sys = prepared.model.system()?;
    let cfg = prepared.config.tolerances_for(sys.time_domain())?;
    let plan = prepared.config.sample_plan(sys.dim(), args.seed)?;
    let report = classify(&sys, &plan, &cfg)?;
    let path = write_output(&args.out, "verify_report.json", &report.to_json())?;
    println!(
        "{}: verdict {:?} (report: {})",
        sys.label(),
        report.verdict,
        path.display()
    );
    Ok(if report.verdict == Verdict::Pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_simulate(args: &RunArgs) -> Result<ExitCode> {
    let prepared = prepare(args)?;
    let sys = prepared.model.system()?;
    let cfg = prepared.config.tolerances_for(sys.time_domain())?;
    let xi = prepared.config.initial_state(sys.dim())?;
    let (report, trajectory) = simulate_recorded(&sys, &xi, &cfg, &prepared.step)?;

    let mut csv = Vec::new();
    trajectory.write_csv(&mut csv)?;
    let csv_path = write_output(&args.out, "trajectory.csv", &String::from_utf8(csv)?)?;
    let report_path = write_output(
        &args.out,
        "convergence_report.json",
        &to_pretty_json(&report)?,
    )?;
    println!(
        "{}: outcome {:?} after {} (trajectory: {}, report: {})",
        sys.label(),
        report.outcome,
        report.iterations_or_time,
        csv_path.display(),
        report_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_consensus(args: &RunArgs) -> Result<ExitCode> {
    let prepared = prepare(args)?;
    let mas = prepared.model.mas()?;
    let n = mas.graph().n();
    let cfg = prepared.config.tolerances_for(mas.time_domain())?;
    let plan = prepared.config.sample_plan(n, args.seed)?;
    let xi = prepared.config.initial_state(n)?;
    let report = consensus_report(mas, &xi, &plan, &cfg, &prepared.step)?;
    let path = write_output(&args.out, "consensus_report.json", &to_pretty_json(&report)?)?;
    println!(
        "{}: conditions {} | outcome {:?} (report: {})",
        mas.label(),
        if report.conditions.all_pass {
            "pass"
        } else {
            "fail"
        },
        report.run.outcome,
        path.display()
    );
    let success =
        report.conditions.all_pass && report.run.outcome == ConsensusOutcome::Consensus;
    Ok(if success {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

/// One sweep run, serialized both into the aggregate CSV and the JSON
/// summary.
#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    axis: String,
    value: f64,
    outcome: String,
    iterations_or_time: f64,
    final_width: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    consensus_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    smoothing_gap: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    axis: String,
    seed: u64,
    rows: Vec<SweepRow>,
}

fn consensus_row(axis: SweepAxis, value: f64, run: &ConsensusRun) -> SweepRow {
    SweepRow {
        axis: axis.to_string(),
        value,
        outcome: run.outcome.to_string(),
        iterations_or_time: run.convergence.iterations_or_time,
        final_width: run.final_width,
        consensus_value: run.consensus_value,
        smoothing_gap: None,
    }
}

fn simulate_row(
    axis: SweepAxis,
    value: f64,
    sys: &SystemDefinition,
    exact: Option<&SystemDefinition>,
    xi: &StateVector,
    cfg: &ToleranceConfig,
    step: &StepConfig,
) -> Result<SweepRow> {
    let (report, trajectory) = simulate_recorded(sys, xi, cfg, step)?;
    let final_state = trajectory.last().expect("at least the initial sample").1;
    let smoothing_gap = match exact {
        Some(exact_sys) => Some(
            sys.evaluate(final_state)?
                .sup_metric(&exact_sys.evaluate(final_state)?)?,
        ),
        None => None,
    };
    Ok(SweepRow {
        axis: axis.to_string(),
        value,
        outcome: report.outcome.to_string(),
        iterations_or_time: report.iterations_or_time,
        final_width: final_state.width(),
        consensus_value: None,
        smoothing_gap,
    })
}

fn sweep_rows_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "axis,value,outcome,iterations_or_time,final_width,consensus_value,smoothing_gap\n",
    );
    for row in rows {
        let consensus = row
            .consensus_value
            .map(fmt_g17)
            .unwrap_or_default();
        let gap = row.smoothing_gap.map(fmt_g17).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.axis,
            row.value,
            row.outcome,
            fmt_g17(row.iterations_or_time),
            fmt_g17(row.final_width),
            consensus,
            gap
        ));
    }
    out
}

fn cmd_sweep(args: &RunArgs) -> Result<ExitCode> {
    let prepared = prepare(args)?;
    let sweep = prepared
        .config
        .sweep
        .as_ref()
        .ok_or_else(|| anyhow!("config key `sweep`: required for the sweep command"))?;
    let seed = args.seed.unwrap_or(prepared.config.plan.seed);
    let step = prepared.step;

    let run_one = |&value: &f64| -> Result<SweepRow> {
        match sweep.axis {
            SweepAxis::Epsilon => {
                let model = prepared
                    .config
                    .build_model_with_eps(&prepared.base_dir, value)?;
                let mas = model.mas()?;
                let cfg = prepared.config.tolerances_for(mas.time_domain())?;
                let xi = prepared.config.initial_state(mas.graph().n())?;
                let run = run_consensus(mas, &xi, &cfg, &step)?;
                Ok(consensus_row(sweep.axis, value, &run))
            }
            SweepAxis::Alpha => {
                let (smooth, exact) = prepared
                    .config
                    .build_model_with_alpha(&prepared.base_dir, value)?;
                let cfg = prepared.config.tolerances_for(smooth.time_domain())?;
                let xi = prepared.config.initial_state(smooth.dim())?;
                simulate_row(sweep.axis, value, &smooth, Some(&exact), &xi, &cfg, &step)
            }
            SweepAxis::Seed => {
                if value < 0.0 || value.fract() != 0.0 {
                    bail!("sweep axis `seed`: value {value} is not a nonnegative integer");
                }
                match &prepared.model {
                    BuiltModel::Mas(mas) => {
                        let n = mas.graph().n();
                        let cfg = prepared.config.tolerances_for(mas.time_domain())?;
                        let xi = seeded_initial(&prepared.config, n, value as u64)?;
                        let run = run_consensus(mas, &xi, &cfg, &step)?;
                        Ok(consensus_row(sweep.axis, value, &run))
                    }
                    BuiltModel::System(sys) => {
                        let cfg = prepared.config.tolerances_for(sys.time_domain())?;
                        let xi = seeded_initial(&prepared.config, sys.dim(), value as u64)?;
                        simulate_row(sweep.axis, value, sys, None, &xi, &cfg, &step)
                    }
                }
            }
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .context("building the sweep thread pool")?;
    // par_iter + ordered collect keeps row order deterministic regardless
    // of completion order.
    let rows: Vec<SweepRow> =
        pool.install(|| sweep.values.par_iter().map(run_one).collect::<Result<_>>())?;

    let summary = SweepSummary {
        axis: sweep.axis.to_string(),
        seed,
        rows,
    };
    let csv_path = write_output(&args.out, "sweep.csv", &sweep_rows_csv(&summary.rows))?;
    let json_path = write_output(&args.out, "sweep_report.json", &to_pretty_json(&summary)?)?;
    println!(
        "sweep over {} ({} runs): {} , {}",
        summary.axis,
        summary.rows.len(),
        csv_path.display(),
        json_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Draws a run's initial state from the plan box, all randomness flowing
/// from the given seed.
fn seeded_initial(config: &RunConfig, dim: usize, seed: u64) -> Result<StateVector> {
    let plan = config.sample_plan(dim, Some(seed))?;
    let single = SamplePlan::new(plan.sample_box.clone(), 1, 1, seed)?;
    Ok(single
        .sample_points()
        .into_iter()
        .next()
        .expect("one point requested"))
}
