//! Command-line driver: simulation, verification studies and inspection
//! tables.
//!
//! Exit codes: 0 success / verdict PASS, 1 verdict FAIL or runtime error,
//! 2 usage or configuration error.

// `!(a > b)` guards also reject NaN arguments from the command line
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use phaseseg_core::harness::{
    continuous_dependence_study, pointwise_estimate_check, run_pair, self_convergence_study,
    ConvergenceVerdict, PairExperiment, Perturbation,
};
use phaseseg_core::kirchhoff::KirchhoffTransform;
use phaseseg_core::model::validate_model;
use phaseseg_core::prox::{default_tolerance, resolve, ProxQuery};
use phaseseg_core::stepper::{init_state, step};

use config::{CliError, CliResult, KeySet, Parsed};

#[derive(Parser)]
#[command(
    name = "phaseseg",
    version,
    about = "Phase-segregation solver and verification harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation; emits snapshots and steps.csv under --out
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Continuous-dependence study over a decreasing list of perturbation
    /// sizes; emits study.csv
    CdepStudy {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cellwise stability-estimate audit on one perturbation pair; emits
    /// pointwise.csv
    PointwiseCheck {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Temporal self-convergence study; emits convergence.csv
    Converge {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check every structural model condition and print the table
    Validate { config: PathBuf },
    /// Print a CSV table of the resolvent (r, x, xi)
    ProxTable {
        config: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        tau: f64,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        r_min: f64,
        #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
        r_max: f64,
        #[arg(long, default_value_t = 41)]
        count: usize,
    },
    /// Print a CSV table of (m, kappa(m), K(m))
    KirchhoffTable {
        config: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        m_max: f64,
        #[arg(long, default_value_t = 51)]
        count: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn read_config(path: &Path, set: KeySet) -> CliResult<Parsed> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    config::parse_text(&text, set)
}

/// Run a closure inside a rayon pool sized for a study: capped by
/// PHASESEG_THREADS when set, otherwise by the number of experiments.
#[cfg(feature = "parallel")]
fn with_study_pool<T: Send>(experiments: usize, f: impl FnOnce() -> T + Send) -> T {
    let cap = std::env::var("PHASESEG_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(experiments)
        .max(1);
    let threads = cap.min(experiments.max(1));
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_study_pool<T>(_experiments: usize, f: impl FnOnce() -> T) -> T {
    f()
}

fn dispatch(command: Command) -> CliResult<ExitCode> {
    match command {
        Command::Simulate { config, out } => simulate(&config, &out),
        Command::CdepStudy { config, out } => cdep_study(&config, &out),
        Command::PointwiseCheck { config, out } => pointwise_check(&config, &out),
        Command::Converge { config, out } => converge(&config, &out),
        Command::Validate { config } => validate(&config),
        Command::ProxTable {
            config,
            tau,
            r_min,
            r_max,
            count,
        } => prox_table(&config, tau, r_min, r_max, count),
        Command::KirchhoffTable {
            config,
            m_max,
            count,
        } => kirchhoff_table(&config, m_max, count),
    }
}

fn snapshot_row(dir: &Path, step: usize, state: &phaseseg_core::stepper::State) -> CliResult<()> {
    output::write_snapshot_files(
        dir,
        step,
        state.time,
        &[
            ("mu", &state.mu),
            ("rho", &state.rho),
            ("xi", &state.xi),
            ("u", &state.u),
        ],
    )
}

fn simulate(config_path: &Path, out: &Path) -> CliResult<ExitCode> {
    let parsed = read_config(config_path, KeySet::Run)?;
    let cfg = config::run_config(&parsed)?;
    let state0 = init_state(&cfg).map_err(|e| CliError::Config(e.to_string()))?;

    output::prepare_out_dir(out)?;
    output::write_manifest(out, "simulate", &parsed.hash)?;
    let mut csv = output::StepCsv::create(out)?;
    snapshot_row(out, 0, &state0)?;

    let steps = cfg.step_count();
    let mut current = state0;
    for n in 1..=steps {
        match step(&current, &cfg.model, &cfg) {
            Ok((next, mut report)) => {
                report.step = n;
                csv.row(&report)?;
                current = next;
                if n % cfg.output_every == 0 || n == steps {
                    snapshot_row(out, n, &current)?;
                }
            }
            Err(e) => {
                // keep what we have under the .partial suffix
                csv.abandon();
                return Err(CliError::Run(format!("step {n} failed: {e}")));
            }
        }
    }
    csv.finish()?;
    println!(
        "simulate: {} steps on {} cells, final time {}",
        steps,
        cfg.grid.cell_count(),
        current.time
    );
    Ok(ExitCode::SUCCESS)
}

fn cdep_study(config_path: &Path, out: &Path) -> CliResult<ExitCode> {
    let parsed = read_config(config_path, KeySet::Study)?;
    let cfg = config::run_config(&parsed)?;
    let spec = config::study_spec(&parsed)?;
    let perturbation = Perturbation {
        target: spec.target,
        mode_x: spec.mode_x,
        mode_y: spec.mode_y,
        amplitude: 0.0,
    };

    let report = with_study_pool(spec.epsilons.len(), || {
        continuous_dependence_study(&cfg, &perturbation, &spec.epsilons)
    })?;

    output::prepare_out_dir(out)?;
    output::write_manifest(out, "cdep-study", &parsed.hash)?;
    output::write_study_csv(out, &report)?;

    for row in &report.rows {
        match row.ratio {
            Some(r) => println!("eps {:9.3e}: ratio {r:.6}", row.epsilon),
            None => println!("eps {:9.3e}: identical-data", row.epsilon),
        }
    }
    if let Some(spread) = report.spread {
        println!("ratio spread: {spread:.6}");
    }
    if report.pass {
        println!("verdict: PASS");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("verdict: FAIL");
        Ok(ExitCode::from(1))
    }
}

fn pointwise_check(config_path: &Path, out: &Path) -> CliResult<ExitCode> {
    let parsed = read_config(config_path, KeySet::Study)?;
    let cfg = config::run_config(&parsed)?;
    let spec = config::study_spec(&parsed)?;
    let experiment = PairExperiment {
        base: cfg.clone(),
        perturbation: Perturbation {
            target: spec.target,
            mode_x: spec.mode_x,
            mode_y: spec.mode_y,
            amplitude: spec.epsilon,
        },
    };
    let pair = run_pair(&experiment)?;
    let report = pointwise_estimate_check(
        &pair.first,
        &pair.second,
        &cfg.model,
        cfg.tau,
        cfg.prox_tolerance,
    )?;

    output::prepare_out_dir(out)?;
    output::write_manifest(out, "pointwise-check", &parsed.hash)?;
    output::write_pointwise_csv(out, &report)?;

    println!(
        "worst cellwise ratio {:.6} (cell {}, t = {:.6}) against C_struct {:.6}",
        report.worst_ratio, report.worst_cell, report.worst_time, report.c_struct
    );
    println!(
        "per-step contraction: {}",
        if report.one_step_ok {
            "holds"
        } else {
            "violated"
        }
    );
    if report.pass {
        println!("verdict: PASS");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("verdict: FAIL");
        Ok(ExitCode::from(1))
    }
}

fn converge(config_path: &Path, out: &Path) -> CliResult<ExitCode> {
    let parsed = read_config(config_path, KeySet::Converge)?;
    let cfg = config::run_config(&parsed)?;
    let levels = config::converge_levels(&parsed)?;

    let report = with_study_pool(levels, || self_convergence_study(&cfg, levels))?;

    output::prepare_out_dir(out)?;
    output::write_manifest(out, "converge", &parsed.hash)?;
    output::write_convergence_csv(out, &report)?;

    for row in &report.rows {
        println!(
            "level {} (tau {:.3e}): distance {:.6e}{}",
            row.level,
            row.tau,
            row.distance.unwrap_or(f64::NAN),
            row.observed_order
                .map(|p| format!(", observed order {p:.3}"))
                .unwrap_or_default()
        );
    }
    match report.verdict {
        ConvergenceVerdict::Pass => {
            println!("verdict: PASS");
            Ok(ExitCode::SUCCESS)
        }
        ConvergenceVerdict::DegenerateExact => {
            println!("verdict: degenerate-exact (all distances at the numerical floor)");
            Ok(ExitCode::SUCCESS)
        }
        ConvergenceVerdict::Fail => {
            println!("verdict: FAIL");
            Ok(ExitCode::from(1))
        }
    }
}

fn validate(config_path: &Path) -> CliResult<ExitCode> {
    let parsed = read_config(config_path, KeySet::Any)?;
    let model = config::model_only(&parsed)?;
    let report = validate_model(&model, 256).map_err(|e| CliError::Config(e.to_string()))?;
    print!("{report}");
    if report.all_passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn prox_table(
    config_path: &Path,
    tau: f64,
    r_min: f64,
    r_max: f64,
    count: usize,
) -> CliResult<ExitCode> {
    if count < 2 || !(r_max > r_min) {
        return Err(CliError::Config(
            "prox-table needs count >= 2 and r_max > r_min".into(),
        ));
    }
    let parsed = read_config(config_path, KeySet::Any)?;
    let model = config::model_only(&parsed)?;
    println!("r,x,xi");
    for i in 0..count {
        let r = r_min + (r_max - r_min) * i as f64 / (count - 1) as f64;
        let q = ProxQuery::new(&model.potential, tau, r)?;
        let res = resolve(&q, default_tolerance(r))?;
        println!(
            "{},{},{}",
            output::fmt_f64(r),
            output::fmt_f64(res.x),
            output::fmt_f64(res.xi)
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn kirchhoff_table(config_path: &Path, m_max: f64, count: usize) -> CliResult<ExitCode> {
    if count < 2 || !(m_max > 0.0) {
        return Err(CliError::Config(
            "kirchhoff-table needs count >= 2 and m_max > 0".into(),
        ));
    }
    let parsed = read_config(config_path, KeySet::Any)?;
    let model = config::model_only(&parsed)?;
    let transform = KirchhoffTransform::new(&model.mobility);
    println!("m,kappa,K");
    for i in 0..count {
        let m = m_max * i as f64 / (count - 1) as f64;
        println!(
            "{},{},{}",
            output::fmt_f64(m),
            output::fmt_f64(model.mobility.kappa(m)),
            output::fmt_f64(transform.evaluate(m)?)
        );
    }
    Ok(ExitCode::SUCCESS)
}
