//! Sweeps over an [`ExperimentConfig`] grid.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use dpmean_core::est1d::estimate_mean_1d;
use dpmean_core::esthd_approx::{estimate_single_round, estimate_two_round};
use dpmean_core::esthd_pure::estimate_pure_full;
use dpmean_core::synth::sample_dataset;
use dpmean_core::types::fnv1a;
use dpmean_core::{DpError, EstimateReport, PersonDataset, PrivacyBudget, ProblemParams, Result, Seed};

use crate::config::{EstimatorKind, ExperimentConfig, GridPoint};

pub const SCHEMA_VERSION: u32 = 1;

/// One CSV row. Trial rows leave the summary columns empty and vice versa.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRow {
    pub schema_version: u32,
    pub row_type: &'static str,
    pub estimator: &'static str,
    pub family: &'static str,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub k: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub trial: Option<usize>,
    pub seed: Option<u64>,
    /// Coordinates joined with ';'.
    pub estimate: Option<String>,
    pub l2_error: Option<f64>,
    pub success: Option<bool>,
    pub rho: Option<f64>,
    pub rho1: Option<f64>,
    pub rho2: Option<f64>,
    pub mu_coarse: Option<String>,
    pub error: Option<String>,
    pub median_error: Option<f64>,
    pub success_rate: Option<f64>,
    pub failures: Option<usize>,
    /// Not covered by the determinism guarantee.
    pub wall_time_ms: f64,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

pub fn run_estimator(
    kind: EstimatorKind,
    data: &PersonDataset,
    budget: &PrivacyBudget,
    params: &ProblemParams,
    seed: Seed,
) -> Result<EstimateReport> {
    kind.check(data.d(), budget.delta)?;
    match kind {
        EstimatorKind::Est1d => estimate_mean_1d(data, budget, params, seed),
        EstimatorKind::HdSingle => estimate_single_round(data, budget, params, seed),
        EstimatorKind::HdTwoRound => estimate_two_round(data, budget, params, seed),
        EstimatorKind::PureDp => estimate_pure_full(data, params, budget.epsilon, seed),
    }
}

/// Seed of one trial: a function of the base seed, the grid point and the
/// trial index only, so grid order and thread count do not matter.
pub fn trial_seed(base: Seed, point: &GridPoint, trial: usize) -> Seed {
    base.derive(fnv1a(point.key().as_bytes())).derive(trial as u64)
}

fn point_rows(cfg: &ExperimentConfig, p: &GridPoint) -> Result<Vec<TrialRow>> {
    let spec = cfg.spec.with_dimension(p.d).with_k(p.k);
    let mu = spec.true_mean()?;
    let budget = PrivacyBudget::new(p.epsilon, p.delta)?;
    let params = cfg.params(p)?;
    let blank = TrialRow {
        schema_version: SCHEMA_VERSION,
        row_type: "trial",
        estimator: cfg.estimator.name(),
        family: spec.family.name(),
        n: p.n,
        m: p.m,
        d: p.d,
        k: p.k,
        epsilon: p.epsilon,
        delta: p.delta,
        alpha: p.alpha,
        trial: None,
        seed: None,
        estimate: None,
        l2_error: None,
        success: None,
        rho: None,
        rho1: None,
        rho2: None,
        mu_coarse: None,
        error: None,
        median_error: None,
        success_rate: None,
        failures: None,
        wall_time_ms: 0.0,
    };
    let trials: Vec<TrialRow> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<TrialRow> {
            let seed = trial_seed(cfg.seed, p, t);
            let mut row = TrialRow { trial: Some(t), seed: Some(seed.0), ..blank.clone() };
            let data = sample_dataset(&spec, p.n, p.m, seed.child("data"))?;
            match run_estimator(cfg.estimator, &data, &budget, &params, seed.child("estimator")) {
                Ok(r) => {
                    let err = r.estimate.iter().zip(&mu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    row.estimate = Some(join(&r.estimate));
                    row.l2_error = Some(err);
                    row.success = Some(err <= p.alpha);
                    row.rho = r.rho;
                    row.rho1 = r.rho1;
                    row.rho2 = r.rho2;
                    row.mu_coarse = r.mu_coarse.as_deref().map(join);
                    row.wall_time_ms = r.wall_time_ms;
                }
                Err(e) if e.is_validation() => return Err(e),
                Err(e) => {
                    row.success = Some(false);
                    row.error = Some(e.to_string());
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut errs: Vec<f64> = trials.iter().map(|r| r.l2_error.unwrap_or(f64::INFINITY)).collect();
    errs.sort_by(f64::total_cmp);
    let median = if errs.len() % 2 == 1 { errs[errs.len() / 2] } else { 0.5 * (errs[errs.len() / 2 - 1] + errs[errs.len() / 2]) };
    let successes = trials.iter().filter(|r| r.success == Some(true)).count();
    let summary = TrialRow {
        row_type: "summary",
        median_error: Some(median),
        success_rate: Some(successes as f64 / trials.len() as f64),
        failures: Some(trials.iter().filter(|r| r.error.is_some()).count()),
        wall_time_ms: trials.iter().map(|r| r.wall_time_ms).sum(),
        ..blank
    };
    let mut rows = trials;
    rows.push(summary);
    Ok(rows)
}

/// Runs every grid point and trial. Rows are grouped by grid point in grid
/// order, trial rows first, then the point's summary row.
pub fn experiment_rows(cfg: &ExperimentConfig) -> Result<Vec<TrialRow>> {
    cfg.validate()?;
    let points = cfg.points();
    let per_point: Vec<Vec<TrialRow>> = points.par_iter().map(|p| point_rows(cfg, p)).collect::<Result<_>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

pub fn write_rows<W: Write, T: Serialize>(rows: &[T], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Runs the experiment and writes the CSV to `out` (or the config's
/// `output_path`). Returns the rows written.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<TrialRow>> {
    let path = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_path.clone())
        .ok_or_else(|| DpError::Config("no output path given (use --out or output_path)".into()))?;
    let rows = experiment_rows(cfg)?;
    let file = create_output(&path)?;
    write_rows(&rows, std::io::BufWriter::new(file))?;
    Ok(rows)
}

/// Creates `path`, making missing parent directories first.
pub fn create_output(path: &Path) -> Result<std::fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(std::fs::File::create(path)?)
}
