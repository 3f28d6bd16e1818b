//! All file emission: manifest, step reports, snapshots and study tables.
//! CSV columns are fixed-order with `.` decimals; floats are written with 17
//! significant digits so files round-trip bit-exactly.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use phaseseg_core::grid::{write_snapshot, ScalarField};
use phaseseg_core::harness::{ConvergenceReport, PointwiseReport, StudyReport};
use phaseseg_core::stepper::StepReport;

use crate::config::{CliError, CliResult};

fn io_err(e: std::io::Error) -> CliError {
    CliError::Run(format!("io error: {e}"))
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn prepare_out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io_err)
}

pub fn write_manifest(dir: &Path, command: &str, config_hash: &str) -> CliResult<()> {
    let text = format!(
        "tool = phaseseg {}\ncommand = {command}\nconfig_sha256 = {config_hash}\n",
        env!("CARGO_PKG_VERSION")
    );
    fs::write(dir.join("manifest.txt"), text).map_err(io_err)
}

/// Streaming writer for steps.csv. Rows land in `steps.csv.partial`; `finish`
/// renames to the final name, `abandon` flushes and keeps the partial file
/// for post-mortem inspection.
pub struct StepCsv {
    writer: BufWriter<File>,
    partial: PathBuf,
    final_path: PathBuf,
}

impl StepCsv {
    pub fn create(dir: &Path) -> CliResult<StepCsv> {
        let partial = dir.join("steps.csv.partial");
        let final_path = dir.join("steps.csv");
        let mut writer = BufWriter::new(File::create(&partial).map_err(io_err)?);
        writeln!(
            writer,
            "step,time,balance_residual,min_mu,rho_min,rho_max,xi_min,xi_max,\
             cg_iterations,prox_max_iterations,safeguard_margin"
        )
        .map_err(io_err)?;
        Ok(StepCsv {
            writer,
            partial,
            final_path,
        })
    }

    pub fn row(&mut self, r: &StepReport) -> CliResult<()> {
        writeln!(
            self.writer,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            fmt_f64(r.time),
            fmt_f64(r.balance_residual),
            fmt_f64(r.min_mu),
            fmt_f64(r.rho_range.0),
            fmt_f64(r.rho_range.1),
            fmt_f64(r.xi_range.0),
            fmt_f64(r.xi_range.1),
            r.cg_iterations,
            r.prox_max_iterations,
            fmt_f64(r.safeguard_margin)
        )
        .map_err(io_err)
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.writer.flush().map_err(io_err)?;
        fs::rename(&self.partial, &self.final_path).map_err(io_err)
    }

    pub fn abandon(mut self) {
        let _ = self.writer.flush();
    }
}

pub fn write_snapshot_files(
    dir: &Path,
    step: usize,
    time: f64,
    fields: &[(&str, &ScalarField)],
) -> CliResult<()> {
    for (name, field) in fields {
        let path = dir.join(format!("{name}_{step:06}.txt"));
        fs::write(path, write_snapshot(field, time)).map_err(io_err)?;
    }
    Ok(())
}

pub fn write_study_csv(dir: &Path, report: &StudyReport) -> CliResult<()> {
    let mut out = String::from("epsilon,lhs,rhs,ratio\n");
    for row in &report.rows {
        let ratio = match row.ratio {
            Some(r) => fmt_f64(r),
            None => "identical-data".to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{ratio}\n",
            fmt_f64(row.epsilon),
            fmt_f64(row.lhs),
            fmt_f64(row.rhs)
        ));
    }
    fs::write(dir.join("study.csv"), out).map_err(io_err)
}

pub fn write_pointwise_csv(dir: &Path, report: &PointwiseReport) -> CliResult<()> {
    let mut out = String::from("time,worst_cell,L,R,ratio\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(row.time),
            row.worst_cell,
            fmt_f64(row.l),
            fmt_f64(row.r),
            fmt_f64(row.ratio)
        ));
    }
    fs::write(dir.join("pointwise.csv"), out).map_err(io_err)
}

pub fn write_convergence_csv(dir: &Path, report: &ConvergenceReport) -> CliResult<()> {
    let mut out = String::from("level,tau,distance,observed_order\n");
    for row in &report.rows {
        let distance = row.distance.map(fmt_f64).unwrap_or_default();
        let order = row.observed_order.map(fmt_f64).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{distance},{order}\n",
            row.level,
            fmt_f64(row.tau)
        ));
    }
    fs::write(dir.join("convergence.csv"), out).map_err(io_err)
}
