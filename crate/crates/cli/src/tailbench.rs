//! Tail-bound domination tables.

use std::path::Path;

use serde::Serialize;

use dpmean_core::tailbounds::{domination_rows_on, frozen_constant, geometric_grid, BoundKind, DominationRow};
use dpmean_core::types::fnv1a;
use dpmean_core::{DpError, Result};

use crate::config::TailbenchConfig;
use crate::experiment::{write_rows, SCHEMA_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailRow {
    pub schema_version: u32,
    pub family: &'static str,
    pub m: usize,
    pub k: f64,
    pub d: usize,
    pub t: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub bound_name: String,
    pub bound_value: f64,
    #[serde(rename = "C_cal")]
    pub c_cal: f64,
    pub pass: bool,
    pub valid_domain: bool,
}

impl From<DominationRow> for TailRow {
    fn from(r: DominationRow) -> Self {
        TailRow {
            schema_version: SCHEMA_VERSION,
            family: r.family.name(),
            m: r.m,
            k: r.k,
            d: r.d,
            t: r.t,
            empirical: r.empirical,
            stderr: r.stderr,
            bound_name: r.bound_name,
            bound_value: r.bound_value,
            c_cal: r.c_cal,
            pass: r.pass,
            valid_domain: r.valid_domain,
        }
    }
}

pub fn tailbench_rows(cfg: &TailbenchConfig) -> Result<Vec<TailRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for base in &cfg.families {
        for &k in &cfg.ks {
            let spec = base.with_k(k);
            for &m in &cfg.ms {
                for &bound in &cfg.bounds {
                    let ds: Vec<usize> = if bound == BoundKind::HighD { cfg.ds.clone() } else { vec![1] };
                    for d in ds {
                        let grid = match &cfg.t_grid {
                            Some(ts) => ts.clone(),
                            None => {
                                let lo = bound.grid_start(m, k, d);
                                geometric_grid(lo, cfg.span * lo, cfg.t_points)
                            }
                        };
                        let c = cfg.constant.unwrap_or_else(|| frozen_constant(spec.family, bound));
                        let key = format!("{}:{k:?}:{m}:{}:{d}", spec.family.name(), bound.name());
                        let seed = cfg.seed.derive(fnv1a(key.as_bytes()));
                        let cell = domination_rows_on(&spec, m, d, bound, c, &grid, cfg.trials, seed)?;
                        rows.extend(cell.into_iter().map(TailRow::from));
                    }
                }
            }
        }
    }
    Ok(rows)
}

pub fn run_tailbench(cfg: &TailbenchConfig, out: Option<&Path>) -> Result<Vec<TailRow>> {
    let path = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_path.clone())
        .ok_or_else(|| DpError::Config("no output path given (use --out or output_path)".into()))?;
    let rows = tailbench_rows(cfg)?;
    let file = crate::experiment::create_output(&path)?;
    write_rows(&rows, std::io::BufWriter::new(file))?;
    Ok(rows)
}
