//! Univariate estimator: private-histogram range estimation followed by
//! truncation around the coarse centre and Laplace noise.

use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::clipping::bias_threshold;
use crate::error::{invalid, DpError, Result};
use crate::mechanisms::{private_histogram, sample_laplace, BudgetLedger, HistogramSpec};
use crate::report::EstimateReport;
use crate::types::{PersonDataset, PrivacyBudget, ProblemParams, Seed};

/// Default constant in [`choose_rho_1d`].
pub const DEFAULT_RHO_CONSTANT: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseResult {
    pub mu_coarse: f64,
    pub bucket: (f64, f64),
    /// Claimed accuracy 2r.
    pub accuracy_claim: f64,
    /// Averages outside the histogram cover.
    pub dropped: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FineNoise {
    #[default]
    Laplace,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FineConfig {
    pub rho: f64,
    pub u_err: f64,
    #[serde(default)]
    pub noise: FineNoise,
}

/// Smallest admissible histogram width: r must exceed 16^{1/k}/√m and satisfy
/// √m·r ≥ 2.
pub fn min_bucket_width(k: f64, m: usize) -> f64 {
    16f64.powf(1.0 / k).max(2.0) / (m as f64).sqrt()
}

pub(crate) fn check_bucket_width(r: f64, range_r: f64, k: f64, m: usize) -> Result<()> {
    let sm = (m as f64).sqrt();
    let lower = 16f64.powf(1.0 / k) / sm;
    if !(r > lower) {
        return Err(invalid(format!("bucket width r = {r} must exceed 16^(1/k)/sqrt(m) = {lower}")));
    }
    if sm * r < 2.0 {
        return Err(invalid(format!("bucket width r = {r} needs sqrt(m)*r >= 2 (m = {m})")));
    }
    if !(r < range_r) {
        return Err(invalid(format!("bucket width r = {r} must be below the range bound R = {range_r}")));
    }
    Ok(())
}

fn require_univariate(data: &PersonDataset) -> Result<()> {
    if data.d() != 1 {
        return Err(invalid(format!("univariate estimator got d = {}", data.d())));
    }
    Ok(())
}

/// Coarse location of the mean of the per-person averages: the midpoint of
/// the private histogram's largest (released) bucket over [−R−2r, R+2r).
pub fn range_estimator(data: &PersonDataset, budget: &PrivacyBudget, r: f64, range_r: f64, k: f64, seed: Seed) -> Result<CoarseResult> {
    require_univariate(data)?;
    check_bucket_width(r, range_r, k, data.m())?;
    coarse_from_means(&data.person_means(), budget, r, range_r, seed)
}

pub(crate) fn coarse_from_means(means: &[f64], budget: &PrivacyBudget, r: f64, range_r: f64, seed: Seed) -> Result<CoarseResult> {
    let spec = HistogramSpec::new(r, range_r)?;
    let hist = private_histogram(means, &spec, budget, seed);
    let best = hist.argmax_released().ok_or_else(|| DpError::EstimationFailed("every histogram bucket was suppressed".into()))?;
    let bucket = spec.bucket(best);
    Ok(CoarseResult { mu_coarse: 0.5 * (bucket.0 + bucket.1), bucket, accuracy_claim: 2.0 * r, dropped: hist.dropped })
}

/// Mean of the per-person averages after truncation to [c − ρ, c + ρ].
pub fn truncated_mean_1d(means: &[f64], center: f64, rho: f64) -> f64 {
    let (lo, hi) = (center - rho, center + rho);
    means.iter().map(|s| s.clamp(lo, hi)).sum::<f64>() / means.len() as f64
}

/// Truncated mean of the per-person averages plus Laplace(2ρ/(nε)).
pub fn fine_estimate_1d(
    data: &PersonDataset,
    budget: &PrivacyBudget,
    coarse: &CoarseResult,
    cfg: &FineConfig,
    seed: Seed,
) -> Result<EstimateReport> {
    require_univariate(data)?;
    if !budget.is_pure() {
        return Err(DpError::MechanismInapplicable("fine stage uses the Laplace mechanism and a pure budget".into()));
    }
    if !(cfg.rho > cfg.u_err) {
        return Err(invalid(format!("rho = {} must exceed the coarse error u = {}", cfg.rho, cfg.u_err)));
    }
    let n = data.n() as f64;
    let scale = if budget.epsilon.is_infinite() { 0.0 } else { 2.0 * cfg.rho / (n * budget.epsilon) };
    if !scale.is_finite() {
        return Err(invalid("noise scale 2rho/(n eps) is not finite"));
    }
    let pre = truncated_mean_1d(&data.person_means(), coarse.mu_coarse, cfg.rho);
    let noise_seed = seed.child("fine-noise");
    let estimate = pre + sample_laplace(&mut noise_seed.rng(), scale);
    let mut ledger = BudgetLedger::basic();
    ledger.push("fine", *budget);
    let mut report = EstimateReport::new("fine_1d", vec![estimate], ledger, seed.0)?;
    report.rho = Some(cfg.rho);
    report.mu_coarse = Some(vec![coarse.mu_coarse]);
    report.note("u_err", cfg.u_err);
    report.note("noise_scale", scale);
    report.note("noise_seed", noise_seed.0);
    Ok(report)
}

/// ρ = c·(√((k−1)·ln m/m) + (n·ε/ln(1/β))^{1/k} / m^{1−1/k}).
pub fn choose_rho_1d(n: usize, m: usize, epsilon: f64, beta: f64, k: f64, constant_c: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    constant_c * (((k - 1.0) * m.ln() / m).sqrt() + (n * epsilon / (1.0 / beta).ln()).powf(1.0 / k) / m.powf(1.0 - 1.0 / k))
}

/// Full univariate estimator with budget split ε/2 (coarse) + ε/2 (fine).
///
/// δ, if positive, goes to the coarse histogram (stability variant). The fine
/// radius is the formula value of [`choose_rho_1d`], floored at
/// u + √((k−1)·ln m/m) with u = 2r so that truncation bias stays controlled
/// even when the formula value is smaller than the coarse error allowance.
pub fn estimate_mean_1d(data: &PersonDataset, budget: &PrivacyBudget, params: &ProblemParams, seed: Seed) -> Result<EstimateReport> {
    estimate_mean_1d_with(data, budget, params, DEFAULT_RHO_CONSTANT, seed)
}

pub fn estimate_mean_1d_with(
    data: &PersonDataset,
    budget: &PrivacyBudget,
    params: &ProblemParams,
    constant_c: f64,
    seed: Seed,
) -> Result<EstimateReport> {
    let start = Instant::now();
    require_univariate(data)?;
    params.validate()?;
    if !(constant_c > 0.0) {
        return Err(invalid(format!("rho constant must be > 0, got {constant_c}")));
    }
    let (n, m, k) = (data.n(), data.m(), params.k);
    let r = 16f64.powf(1.0 / k).max(16.0) / (m as f64).sqrt();
    let coarse_budget = PrivacyBudget::new(budget.epsilon / 2.0, budget.delta)?;
    let fine_budget = PrivacyBudget::pure(budget.epsilon / 2.0)?;
    let coarse = range_estimator(data, &coarse_budget, r, params.range_r, k, seed.child("coarse"))?;

    let u_err = coarse.accuracy_claim;
    let rho_formula = choose_rho_1d(n, m, fine_budget.epsilon, params.beta, k, constant_c);
    let rho_floor = u_err + bias_threshold(k, m);
    let rho = rho_formula.max(rho_floor);
    let cfg = FineConfig { rho, u_err, noise: FineNoise::Laplace };
    let fine = fine_estimate_1d(data, &fine_budget, &coarse, &cfg, seed.child("fine"))?;

    let mut ledger = BudgetLedger::basic();
    ledger.push("coarse", coarse_budget);
    ledger.push("fine", fine_budget);
    let mut report = EstimateReport::new("est1d", fine.estimate.clone(), ledger, seed.0)?;
    report.rho = Some(rho);
    report.mu_coarse = Some(vec![coarse.mu_coarse]);
    report.note("bucket_width", r);
    report.note("u_err", u_err);
    report.note("rho_formula", rho_formula);
    report.note("rho_floor", rho_floor);
    report.note("constant_c", constant_c);
    report.note("coarse_dropped", coarse.dropped);
    report.note("noise_scale", fine.diagnostics.get("noise_scale").cloned());
    report.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}
