//! Command-line front end for the sweeps and the bound-verification suite.
//!
//! Exit codes: 0 success, 1 invalid config or failed run, 2 bound violation
//! from `verify-bounds`, 3 i/o error.

mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use lqr_lab::sweep::{
    self, BoundSuiteConfig, LinearSweepConfig, PendulumSweepConfig, QuadrotorSweepConfig,
    SuiteOutcome, SweepRow,
};
use lqr_lab::Error;

#[derive(Parser)]
#[command(
    name = "lqr-lab",
    about = "Controller sweeps and bound verification for LQR under model mismatch",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Modeling-error sweep on the two-state linear system.
    LinearSweep(CommonArgs),
    /// Mass-misspecification sweep on the torque-limited pendulum.
    PendulumSweep(CommonArgs),
    /// Wind-magnitude sweep on the planar quadrotor.
    QuadrotorSweep(CommonArgs),
    /// Run every bound check over seeded random systems and fixed instances.
    VerifyBounds(VerifyArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML experiment config; defaults reproduce the reference experiments.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV (and SVG with --plot).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweep points and trials; 0 = library default.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Also emit an SVG plot of the sweep.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Corrupt every bound's right-hand side by 0.5x and require the harness
    /// to flag violations; exit 0 only if it does.
    #[arg(long)]
    self_test: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) => ExitCode::from(3),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::LinearSweep(args) => {
            let mut cfg: LinearSweepConfig = load_config(&args)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let rows = with_pool(args.jobs, || sweep::run_linear_sweep(&cfg))?;
            emit_rows(
                &rows,
                &args,
                "linear_sweep",
                plot::Axes::LogLog,
                "modeling error eps",
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::PendulumSweep(args) => {
            let mut cfg: PendulumSweepConfig = load_config(&args)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let output = with_pool(args.jobs, || sweep::run_pendulum_sweep(&cfg))?;
            for diag in &output.diagnostics {
                println!(
                    "diag: dm={} mm_feedback_cost={}",
                    diag.param, diag.mm_feedback_cost
                );
            }
            emit_rows(
                &output.rows,
                &args,
                "pendulum_sweep",
                plot::Axes::Linear,
                "mass error dm",
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::QuadrotorSweep(args) => {
            let mut cfg: QuadrotorSweepConfig = load_config(&args)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let rows = with_pool(args.jobs, || sweep::run_quadrotor_sweep(&cfg))?;
            emit_rows(
                &rows,
                &args,
                "quadrotor_sweep",
                plot::Axes::Linear,
                "wind magnitude eta",
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyBounds(args) => {
            let mut cfg: BoundSuiteConfig = load_config(&args.common)?;
            if let Some(seed) = args.common.seed {
                cfg.seed = seed;
            }
            if args.self_test {
                cfg.self_test = true;
            }
            let outcome = with_pool(args.common.jobs, || sweep::run_bound_suite(&cfg))?;
            emit_bounds(&outcome, &args.common)?;
            if outcome.passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
    }
}

fn load_config<T: DeserializeOwned + Default>(args: &CommonArgs) -> Result<T, Error> {
    match &args.config {
        None => Ok(T::default()),
        Some(path) => {
            let text = fs::read_to_string(path)?;
            toml::from_str(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
        }
    }
}

fn with_pool<T: Send>(
    jobs: usize,
    f: impl FnOnce() -> Result<T, Error> + Send,
) -> Result<T, Error> {
    if jobs == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build a {jobs}-thread pool: {e}")))?;
    pool.install(f)
}

fn emit_rows(
    rows: &[SweepRow],
    args: &CommonArgs,
    stem: &str,
    axes: plot::Axes,
    x_label: &str,
) -> Result<(), Error> {
    fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join(format!("{stem}.csv"));
    let mut buf = Vec::new();
    sweep::write_sweep_csv(rows, &mut buf)?;
    fs::write(&csv_path, &buf)?;
    println!("wrote {} ({} rows)", csv_path.display(), rows.len());

    if args.plot {
        let svg_path = args.out.join(format!("{stem}.svg"));
        fs::write(&svg_path, plot::sweep_svg(rows, axes, x_label))?;
        println!("wrote {}", svg_path.display());
    }
    summarize(rows);
    Ok(())
}

fn summarize(rows: &[SweepRow]) {
    let flagged = rows
        .iter()
        .filter(|r| r.flag_mm != sweep::RowFlag::Ok || r.flag_ilc != sweep::RowFlag::Ok)
        .count();
    if flagged > 0 {
        println!("{flagged} of {} rows carry a non-ok flag", rows.len());
    }
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        println!(
            "gap_mm: {} .. {}  gap_ilc: {} .. {}",
            first.gap_mm, last.gap_mm, first.gap_ilc, last.gap_ilc
        );
    }
}

fn emit_bounds(outcome: &SuiteOutcome, args: &CommonArgs) -> Result<(), Error> {
    fs::create_dir_all(&args.out)?;
    let path: &Path = &args.out.join("bounds_report.csv");
    let mut buf = Vec::new();
    sweep::write_bounds_csv(outcome, &mut buf)?;
    fs::write(path, &buf)?;

    for agg in &outcome.aggregates {
        println!(
            "{:<28} entries={:<5} met={:<5} violations={:<3} worst_ratio={:.3e}",
            agg.name, agg.entries, agg.entries_met, agg.violations, agg.worst_ratio
        );
    }
    println!(
        "systems={} ilc_refusals={} entries={} met={} violations={}",
        outcome.systems_evaluated,
        outcome.ilc_refusals,
        outcome.total_entries,
        outcome.total_met,
        outcome.total_violations
    );
    if outcome.self_test {
        println!(
            "self-test: corruption {}",
            if outcome.total_violations > 0 {
                "detected"
            } else {
                "NOT detected"
            }
        );
    }
    println!("wrote {}", path.display());
    println!(
        "verify-bounds: {}",
        if outcome.passed() { "PASS" } else { "FAIL" }
    );
    Ok(())
}
