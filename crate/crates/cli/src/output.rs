//! Artifact writers. Every file is staged in the output directory and renamed
//! into place, so a failed run never leaves a half-written artifact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use kmreg::evaluation::{CellSummary, RegistrationReport};
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::CliError;

/// Artifacts of one run, held in memory until everything has succeeded.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(&'static str, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &'static str, bytes: Vec<u8>) {
        self.files.push((name, bytes));
    }

    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            written.push(write_atomic(dir, name, &bytes)?);
        }
        Ok(written)
    }
}

pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let target = dir.join(name);
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(&target)
        .map_err(|e| CliError::io(&target, e.error))?;
    Ok(target)
}

fn to_csv<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("rows serialize to memory");
    }
    w.into_inner().expect("in-memory writer flushes")
}

/// One line of `metrics.csv` for a single registration. Timings are left out
/// so that the file depends only on the inputs and the seed.
#[derive(Serialize)]
struct RunRow<'a> {
    dataset: &'a str,
    clusters: usize,
    eliminate: bool,
    amplitude: f64,
    seed: u64,
    e_r: f64,
    e_t: f64,
    initial_e_r: f64,
    initial_e_t: f64,
    iterations: usize,
    converged: bool,
    objective: Option<f64>,
}

pub fn run_metrics(report: &RegistrationReport) -> Vec<u8> {
    to_csv([RunRow {
        dataset: report.dataset.as_deref().unwrap_or(""),
        clusters: report.config.clusters,
        eliminate: report.config.eliminate_invalid,
        amplitude: report.amplitude,
        seed: report.seed,
        e_r: report.e_r,
        e_t: report.e_t,
        initial_e_r: report.initial_e_r,
        initial_e_t: report.initial_e_t,
        iterations: report.iterations,
        converged: report.converged,
        objective: report.objective.last().copied(),
    }])
}

/// Sweep tables: each cell contributes an `aggregate` row followed by one
/// `trial` row per Monte Carlo run.
#[derive(Serialize)]
struct SweepRow<'a> {
    row: &'static str,
    clusters: usize,
    eliminate: bool,
    amplitude: f64,
    trial: Option<usize>,
    seed: Option<u64>,
    trials: Option<usize>,
    failures: Option<usize>,
    e_r: f64,
    e_t: f64,
    e_r_std: Option<f64>,
    e_t_std: Option<f64>,
    e_r_median: Option<f64>,
    e_t_median: Option<f64>,
    iterations: Option<usize>,
    converged: Option<bool>,
    error: Option<&'a str>,
}

pub fn sweep_metrics(cells: &[CellSummary]) -> Vec<u8> {
    let mut rows = Vec::new();
    for c in cells {
        rows.push(SweepRow {
            row: "aggregate",
            clusters: c.clusters,
            eliminate: c.eliminate,
            amplitude: c.amplitude,
            trial: None,
            seed: None,
            trials: Some(c.trials),
            failures: Some(c.failures),
            e_r: c.e_r.mean,
            e_t: c.e_t.mean,
            e_r_std: Some(c.e_r.std),
            e_t_std: Some(c.e_t.std),
            e_r_median: Some(c.e_r.median),
            e_t_median: Some(c.e_t.median),
            iterations: None,
            converged: None,
            error: None,
        });
        for t in &c.results {
            rows.push(SweepRow {
                row: "trial",
                clusters: t.clusters,
                eliminate: t.eliminate,
                amplitude: t.amplitude,
                trial: Some(t.trial),
                seed: Some(t.seed),
                trials: None,
                failures: None,
                e_r: t.e_r,
                e_t: t.e_t,
                e_r_std: None,
                e_t_std: None,
                e_r_median: None,
                e_t_median: None,
                iterations: Some(t.iterations),
                converged: Some(t.converged),
                error: t.error.as_deref(),
            });
        }
    }
    to_csv(rows)
}

#[derive(Serialize)]
struct SliceRow {
    view: usize,
    x: f64,
    y: f64,
    z: f64,
}

pub fn slice_csv(points: &[(usize, kmreg::Point3)]) -> Vec<u8> {
    to_csv(points.iter().map(|&(view, p)| SliceRow {
        view,
        x: p.x,
        y: p.y,
        z: p.z,
    }))
}

pub fn summary_table(cells: &[CellSummary]) -> String {
    let mut s = format!(
        "{:>6} {:>5} {:>9} {:>7} {:>12} {:>12} {:>12} {:>12} {:>10}\n",
        "K", "elim", "amplitude", "trials", "mean E_R", "std E_R", "mean E_t", "std E_t", "mean s"
    );
    for c in cells {
        s.push_str(&format!(
            "{:>6} {:>5} {:>9} {:>7} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.3}\n",
            c.clusters,
            c.eliminate,
            c.amplitude,
            c.trials - c.failures,
            c.e_r.mean,
            c.e_r.std,
            c.e_t.mean,
            c.e_t.std,
            c.seconds.mean
        ));
    }
    s
}
