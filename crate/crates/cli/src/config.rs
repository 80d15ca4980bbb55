//! JSON configuration files. The schema is described in `docs/config.md`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dpmean_core::synth::SyntheticSpec;
use dpmean_core::tailbounds::BoundKind;
use dpmean_core::{DpError, PrivacyBudget, ProblemParams, Result, Seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Est1d,
    HdSingle,
    HdTwoRound,
    PureDp,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Est1d => "est1d",
            EstimatorKind::HdSingle => "hd_single",
            EstimatorKind::HdTwoRound => "hd_two_round",
            EstimatorKind::PureDp => "pure_dp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| DpError::Config(format!("unknown estimator {s:?} (expected est1d, hd_single, hd_two_round or pure_dp)")))
    }

    /// Rejects budgets and dimensions the estimator cannot run with.
    pub fn check(&self, d: usize, delta: f64) -> Result<()> {
        match self {
            EstimatorKind::Est1d if d != 1 => Err(DpError::Config(format!("est1d needs d = 1, got d = {d}"))),
            EstimatorKind::HdSingle | EstimatorKind::HdTwoRound if delta <= 0.0 => {
                Err(DpError::Config(format!("{} needs delta > 0", self.name())))
            }
            EstimatorKind::PureDp if delta != 0.0 => Err(DpError::Config(format!("pure_dp needs delta = 0, got {delta}"))),
            _ => Ok(()),
        }
    }
}

fn default_beta() -> f64 {
    0.1
}

fn default_range() -> f64 {
    2.0
}

/// Lists of values; the experiment runs their full cross product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    #[serde(default)]
    pub d: Vec<usize>,
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub delta: Vec<f64>,
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub k: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub k: f64,
}

impl GridPoint {
    /// Stable text key used to derive the point's seed.
    pub fn key(&self) -> String {
        format!(
            "n={};m={};d={};eps={:?};delta={:?};alpha={:?};k={:?}",
            self.n, self.m, self.d, self.epsilon, self.delta, self.alpha, self.k
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub estimator: EstimatorKind,
    pub spec: SyntheticSpec,
    pub grid: Grid,
    pub trials: usize,
    pub seed: Seed,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_range", rename = "range_R", alias = "range_r")]
    pub range_r: f64,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Grid points in a fixed order: n, m, d, ε, δ, α, k (last varies fastest).
    /// Empty `d`, `delta` and `k` lists default to the synthetic spec's
    /// dimension, 0 and its k.
    pub fn points(&self) -> Vec<GridPoint> {
        let g = &self.grid;
        let ds = if g.d.is_empty() { vec![self.spec.dim()] } else { g.d.clone() };
        let deltas = if g.delta.is_empty() { vec![0.0] } else { g.delta.clone() };
        let ks = if g.k.is_empty() { vec![self.spec.k] } else { g.k.clone() };
        let mut out = Vec::new();
        for &n in &g.n {
            for &m in &g.m {
                for &d in &ds {
                    for &epsilon in &g.epsilon {
                        for &delta in &deltas {
                            for &alpha in &g.alpha {
                                for &k in &ks {
                                    out.push(GridPoint { n, m, d, epsilon, delta, alpha, k });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(DpError::Config("trials must be >= 1".into()));
        }
        let g = &self.grid;
        if g.n.is_empty() || g.m.is_empty() || g.epsilon.is_empty() || g.alpha.is_empty() {
            return Err(DpError::Config("grid lists n, m, epsilon and alpha must be non-empty".into()));
        }
        for p in self.points() {
            if p.n == 0 || p.m == 0 || p.d == 0 {
                return Err(DpError::Config(format!("grid point {} has a zero size", p.key())));
            }
            PrivacyBudget::new(p.epsilon, p.delta)?;
            self.params(&p)?;
            self.estimator.check(p.d, p.delta)?;
            self.spec.with_dimension(p.d).with_k(p.k).validate()?;
        }
        Ok(())
    }

    pub fn params(&self, p: &GridPoint) -> Result<ProblemParams> {
        ProblemParams::new(p.k, p.alpha, self.beta, self.range_r)
    }
}

fn default_points() -> usize {
    dpmean_core::tailbounds::GRID_POINTS
}

fn default_span() -> f64 {
    dpmean_core::tailbounds::GRID_SPAN
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailbenchConfig {
    /// Base specs; k is taken from `ks`, dimension from the bound.
    pub families: Vec<SyntheticSpec>,
    pub ks: Vec<f64>,
    pub ms: Vec<usize>,
    /// Dimensions for the high-dimensional bound.
    #[serde(default)]
    pub ds: Vec<usize>,
    pub bounds: Vec<BoundKind>,
    pub trials: usize,
    pub seed: Seed,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    /// Explicit t values; when absent each cell uses a geometric grid from
    /// the bound's threshold to `span` times it.
    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default = "default_points")]
    pub t_points: usize,
    #[serde(default = "default_span")]
    pub span: f64,
    /// Overrides the frozen constants.
    #[serde(default)]
    pub constant: Option<f64>,
}

impl TailbenchConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() || self.ks.is_empty() || self.ms.is_empty() || self.bounds.is_empty() {
            return Err(DpError::Config("families, ks, ms and bounds must be non-empty".into()));
        }
        if self.bounds.contains(&BoundKind::HighD) && self.ds.is_empty() {
            return Err(DpError::Config("the highd bound needs a non-empty ds list".into()));
        }
        if self.trials < 100_000 {
            return Err(DpError::Config(format!("tailbench needs >= 10^5 trials, got {}", self.trials)));
        }
        if let Some(ts) = &self.t_grid {
            if ts.is_empty() || ts.iter().any(|t| t.is_nan() || *t <= 0.0) {
                return Err(DpError::Config("t_grid values must be > 0".into()));
            }
        } else if self.t_points == 0 || self.span.is_nan() || self.span < 1.0 {
            return Err(DpError::Config("t_points must be >= 1 and span >= 1".into()));
        }
        for f in &self.families {
            for &k in &self.ks {
                f.with_k(k).validate()?;
            }
        }
        Ok(())
    }
}

/// Inputs to `dpmean estimate` not carried by the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub estimator: EstimatorKind,
    pub epsilon: f64,
    #[serde(default)]
    pub delta: f64,
    pub k: f64,
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_range", rename = "range_R", alias = "range_r")]
    pub range_r: f64,
    #[serde(default)]
    pub seed: Seed,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| DpError::Config(format!("{}: {e}", path.display())))
}
