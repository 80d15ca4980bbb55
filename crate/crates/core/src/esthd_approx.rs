//! Approximate-DP estimators in d dimensions: coordinate-wise coarse
//! estimation, clip-and-noise, and the single- and two-round estimators.

use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::clipping::clip_ball_in_place;
use crate::error::{invalid, DpError, Result};
use crate::est1d::{check_bucket_width, coarse_from_means};
use crate::mechanisms::{add_gaussian, ledger_total, BudgetLedger, CompositionMode};
use crate::report::EstimateReport;
use crate::types::{ClipBall, PersonDataset, PrivacyBudget, ProblemParams, Seed};

/// How the coarse budget is spread over the d coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseMode {
    /// (ε/d, δ/d) per coordinate.
    Basic,
    /// ε₀ = ε/√(6·d·ln(1/δ₀)) per coordinate with δ₀ = δ/2 and δ/(2d) each,
    /// so that advanced composition totals exactly (ε, δ).
    Advanced,
    /// Whichever of the two gives the lower histogram release threshold.
    #[default]
    Auto,
}

/// Noise calibration of clip-and-noise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipCalibration {
    /// Sensitivity proxy 2√d·ρ.
    #[default]
    Printed,
    /// ℓ2 sensitivity 2ρ of the sum of clipped averages.
    Tight,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HdOptions {
    pub coarse_mode: CoarseMode,
    pub calibration: ClipCalibration,
    /// c₀ of the single-round radius.
    pub c0: f64,
}

impl Default for HdOptions {
    fn default() -> Self {
        Self { coarse_mode: CoarseMode::Auto, calibration: ClipCalibration::Printed, c0: 4.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseHd {
    pub center: Vec<f64>,
    pub mode: CoarseMode,
    /// Budget used by each coordinate.
    pub per_coordinate: PrivacyBudget,
    pub ledger: BudgetLedger,
}

fn per_coordinate_budget(budget: &PrivacyBudget, d: usize, mode: CoarseMode) -> Result<(PrivacyBudget, CoarseMode, BudgetLedger)> {
    let df = d as f64;
    let basic = PrivacyBudget::new(budget.epsilon / df, budget.delta / df)?;
    let delta0 = budget.delta / 2.0;
    let adv_eps = budget.epsilon / (6.0 * df * (1.0 / delta0).ln()).sqrt();
    let advanced = PrivacyBudget::new(adv_eps, budget.delta / (2.0 * df))?;
    let threshold = |b: &PrivacyBudget| (2.0 / b.delta).ln() / b.epsilon;
    let chosen = match mode {
        CoarseMode::Basic => CoarseMode::Basic,
        CoarseMode::Advanced => CoarseMode::Advanced,
        CoarseMode::Auto => {
            if d > 1 && adv_eps <= 1.0 && threshold(&advanced) < threshold(&basic) {
                CoarseMode::Advanced
            } else {
                CoarseMode::Basic
            }
        }
    };
    let (b, ledger_mode) = match chosen {
        CoarseMode::Advanced => {
            if adv_eps > 1.0 {
                return Err(DpError::Mode(format!("advanced coarse split needs epsilon0 <= 1, got {adv_eps}")));
            }
            (advanced, CompositionMode::Advanced { delta0 })
        }
        _ => (basic, CompositionMode::Basic),
    };
    let mut ledger = BudgetLedger::new(ledger_mode);
    for c in 0..d {
        ledger.push(format!("coarse[{c}]"), b);
    }
    Ok((b, chosen, ledger))
}

/// Coordinate-wise range estimation with bucket width r/√d per coordinate.
pub fn coarse_estimate_hd(
    data: &PersonDataset,
    budget: &PrivacyBudget,
    r: f64,
    params: &ProblemParams,
    mode: CoarseMode,
    seed: Seed,
) -> Result<CoarseHd> {
    if budget.is_pure() {
        return Err(DpError::MechanismInapplicable("high-dimensional coarse estimation needs delta > 0".into()));
    }
    let (d, m) = (data.d(), data.m());
    let lower = 16f64.powf(1.0 / params.k) * (d as f64 / m as f64).sqrt();
    if !(r > lower) {
        return Err(invalid(format!("coarse radius r = {r} must exceed 16^(1/k)*sqrt(d/m) = {lower}")));
    }
    let r_coord = r / (d as f64).sqrt();
    check_bucket_width(r_coord, params.range_r, params.k, m)?;
    let (per, mode, ledger) = per_coordinate_budget(budget, d, mode)?;
    let means = data.person_means();
    let mut center = Vec::with_capacity(d);
    for c in 0..d {
        let coord: Vec<f64> = means.iter().skip(c).step_by(d).copied().collect();
        let res = coarse_from_means(&coord, &per, r_coord, params.range_r, seed.derive(c as u64)).map_err(|e| match e {
            DpError::EstimationFailed(msg) => DpError::EstimationFailed(format!("coordinate {c}: {msg}")),
            other => other,
        })?;
        center.push(res.mu_coarse);
    }
    Ok(CoarseHd { center, mode, per_coordinate: per, ledger })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipNoiseOutput {
    pub estimate: Vec<f64>,
    /// Mean of clipped averages before noise.
    pub pre_noise: Vec<f64>,
    pub sigma: f64,
}

/// Mean of the per-person averages after clipping each to `ball`.
pub fn clipped_mean(means: &[f64], d: usize, ball: &ClipBall) -> Vec<f64> {
    let mut acc = vec![0.0; d];
    let mut buf = vec![0.0; d];
    let n = means.len() / d;
    for s in means.chunks_exact(d) {
        buf.copy_from_slice(s);
        clip_ball_in_place(&mut buf, ball);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b;
        }
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    acc
}

/// Per-coordinate noise stddev: sens·√(2 ln(4/δ))/(nε), sens = 2√d·ρ or 2ρ.
pub fn clip_noise_sigma(n: usize, d: usize, rho: f64, budget: &PrivacyBudget, calibration: ClipCalibration) -> f64 {
    if budget.epsilon.is_infinite() || rho == 0.0 {
        return 0.0;
    }
    let sens = match calibration {
        ClipCalibration::Printed => 2.0 * (d as f64).sqrt() * rho,
        ClipCalibration::Tight => 2.0 * rho,
    };
    sens * (2.0 * (4.0 / budget.delta).ln()).sqrt() / (n as f64 * budget.epsilon)
}

/// Clip the per-person averages to `ball`, average, add Gaussian noise.
pub fn clip_and_noise(
    data: &PersonDataset,
    budget: &PrivacyBudget,
    ball: &ClipBall,
    calibration: ClipCalibration,
    seed: Seed,
) -> Result<ClipNoiseOutput> {
    if budget.is_pure() {
        return Err(DpError::MechanismInapplicable("clip-and-noise needs delta > 0".into()));
    }
    if ball.dim() != data.d() {
        return Err(invalid("clip ball dimension does not match the data"));
    }
    let pre_noise = clipped_mean(&data.person_means(), data.d(), ball);
    let sigma = clip_noise_sigma(data.n(), data.d(), ball.radius, budget, calibration);
    if !sigma.is_finite() {
        return Err(invalid("clip-and-noise stddev is not finite"));
    }
    let estimate = add_gaussian(&pre_noise, sigma, &mut seed.rng());
    Ok(ClipNoiseOutput { estimate, pre_noise, sigma })
}

/// ρ = c₀(√(d ln m/m) + √d^{(k−1)/k}·ε^{1/k}·n^{1/k}/(m^{1−1/k}·√(ln(1/δ))^{1/k})).
pub fn single_round_rho(n: usize, m: usize, d: usize, epsilon: f64, delta: f64, k: f64, c0: f64) -> f64 {
    let (n, m, d) = (n as f64, m as f64, d as f64);
    c0 * ((d * m.ln() / m).sqrt()
        + d.sqrt().powf((k - 1.0) / k) * epsilon.powf(1.0 / k) * n.powf(1.0 / k)
            / (m.powf(1.0 - 1.0 / k) * (1.0 / delta).ln().sqrt().powf(1.0 / k)))
}

/// (ρ₁, ρ₂) of the two-round estimator for n people per round.
pub fn two_round_radii(n: usize, m: usize, d: usize, epsilon: f64, delta: f64, k: f64) -> (f64, f64) {
    let (n, m, d) = (n as f64, m as f64, d as f64);
    let floor = (d / m).sqrt();
    let common = n.powf(1.0 / k) * epsilon.powf(1.0 / k) / ((1.0 / delta).ln().powf(1.0 / (2.0 * k)) * m.powf(1.0 - 1.0 / k));
    let rho1 = floor.max(common * d.powf(0.5 - 1.0 / (2.0 * k)));
    let rho2 = floor.max(common * d.powf(0.5 - 1.0 / k));
    (rho1, rho2)
}

/// 16·√(d/m), the coarse accuracy target.
pub fn coarse_target(d: usize, m: usize) -> f64 {
    16.0 * (d as f64 / m as f64).sqrt()
}

fn require_approx(budget: &PrivacyBudget) -> Result<()> {
    if budget.is_pure() {
        return Err(DpError::MechanismInapplicable("this estimator needs delta > 0".into()));
    }
    Ok(())
}

/// Coarse estimate (ε/2, δ/2) then one clip-and-noise (ε/2, δ/2) on all people.
pub fn estimate_single_round(data: &PersonDataset, budget: &PrivacyBudget, params: &ProblemParams, seed: Seed) -> Result<EstimateReport> {
    estimate_single_round_with(data, budget, params, &HdOptions::default(), seed)
}

pub fn estimate_single_round_with(
    data: &PersonDataset,
    budget: &PrivacyBudget,
    params: &ProblemParams,
    opts: &HdOptions,
    seed: Seed,
) -> Result<EstimateReport> {
    let start = Instant::now();
    require_approx(budget)?;
    params.validate()?;
    let (n, m, d) = (data.n(), data.m(), data.d());
    let half = budget.scaled(0.5);
    let coarse = coarse_estimate_hd(data, &half, coarse_target(d, m), params, opts.coarse_mode, seed.child("coarse"))?;
    let rho = single_round_rho(n, m, d, budget.epsilon, budget.delta, params.k, opts.c0);
    let ball = ClipBall::new(coarse.center.clone(), rho)?;
    let out = clip_and_noise(data, &half, &ball, opts.calibration, seed.child("clip"))?;

    let mut ledger = BudgetLedger::basic();
    ledger.push("coarse", half);
    ledger.push("clip_and_noise", half);
    let mut report = EstimateReport::new("hd_single", out.estimate, ledger, seed.0)?;
    report.rho = Some(rho);
    report.mu_coarse = Some(coarse.center.clone());
    report.u1 = Some(coarse.center);
    report.note("c0", opts.c0);
    report.note("sigma", out.sigma);
    report.note("coarse_mode", coarse.mode);
    report.note("coarse_ledger_total", ledger_total(&coarse.ledger)?);
    report.note("calibration", opts.calibration);
    report.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

/// Two-round estimator on disjoint thirds Y, Z, V of the people:
/// u₁ = coarse(Y), u₂ = clip_and_noise(Z; ρ₁, u₁), μ̂ = clip_and_noise(V; ρ₂, u₂).
pub fn estimate_two_round(data: &PersonDataset, budget: &PrivacyBudget, params: &ProblemParams, seed: Seed) -> Result<EstimateReport> {
    estimate_two_round_with(data, budget, params, &HdOptions::default(), seed)
}

pub fn estimate_two_round_with(
    data: &PersonDataset,
    budget: &PrivacyBudget,
    params: &ProblemParams,
    opts: &HdOptions,
    seed: Seed,
) -> Result<EstimateReport> {
    let start = Instant::now();
    require_approx(budget)?;
    params.validate()?;
    let (m, d) = (data.m(), data.d());
    let third = data.n() / 3;
    if third == 0 {
        return Err(invalid(format!("two-round estimator needs at least 3 people, got {}", data.n())));
    }
    let dropped = data.n() - 3 * third;
    let y = data.people(0, third)?;
    let z = data.people(third, 2 * third)?;
    let v = data.people(2 * third, 3 * third)?;

    let (rho1, rho2) = two_round_radii(third, m, d, budget.epsilon, budget.delta, params.k);
    let coarse_budget = budget.scaled(0.5);
    let round_budget = budget.scaled(0.25);

    let coarse = coarse_estimate_hd(&y, &coarse_budget, coarse_target(d, m), params, opts.coarse_mode, seed.child("coarse"))?;
    let u1 = coarse.center.clone();
    let r1 = clip_and_noise(&z, &round_budget, &ClipBall::new(u1.clone(), rho1)?, opts.calibration, seed.child("round1"))?;
    let u2 = r1.estimate.clone();
    let r2 = clip_and_noise(&v, &round_budget, &ClipBall::new(u2.clone(), rho2)?, opts.calibration, seed.child("round2"))?;

    let mut ledger = BudgetLedger::basic();
    ledger.push("coarse", coarse_budget);
    ledger.push("round1", round_budget);
    ledger.push("round2", round_budget);
    let mut report = EstimateReport::new("hd_two_round", r2.estimate, ledger, seed.0)?;
    report.rho = Some(rho2);
    report.rho1 = Some(rho1);
    report.rho2 = Some(rho2);
    report.mu_coarse = Some(u1.clone());
    report.u1 = Some(u1);
    report.u2 = Some(u2);
    report.note("people_per_round", third);
    report.note("dropped_people", dropped);
    report.note("sigma1", r1.sigma);
    report.note("sigma2", r2.sigma);
    report.note("coarse_mode", coarse.mode);
    report.note("coarse_ledger_total", ledger_total(&coarse.ledger)?);
    report.note("calibration", opts.calibration);
    report.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}
