//! Pure-DP estimation in small dimension: truncated median-of-means
//! comparisons between candidate points, a score counting how many batches
//! must change before a candidate loses a comparison, and exponential-
//! mechanism selection over a cover of [−α, α]^d.
//!
//! Comparisons are computed in fixed point. Each projected, truncated average
//! is mapped to u ∈ [0, 1] (its position inside [x₀−ρ, x₀+ρ]) and stored as
//! an integer in [0, 2^32]. Replacing one person's batch moves a subsample sum
//! by at most 2^32, so the batch-count costs below change by at most one
//! under a neighbouring dataset, exactly and without rounding effects.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

use crate::error::{invalid, DpError, Result};
use crate::est1d::estimate_mean_1d;
use crate::mechanisms::{exponential_mechanism, BudgetLedger, CompositionMode};
use crate::report::EstimateReport;
use crate::types::{l2_norm, PersonDataset, PrivacyBudget, ProblemParams, Seed};

const SCALE: f64 = 4_294_967_296.0;
const SCALE_U: u64 = 1 << 32;

/// Default c_ρ in [`mom_radius`].
pub const DEFAULT_C_RHO: f64 = 8.0;

/// Largest dimension accepted by [`fine_est_pure`].
pub const MAX_PURE_DIM: usize = 4;

/// ρ = c_ρ·(√((k−1)·ln m/m) + 1/(m·α^{1/(k−1)})).
pub fn mom_radius(k: f64, m: usize, alpha: f64, c_rho: f64) -> f64 {
    let mf = m as f64;
    c_rho * (((k - 1.0) * mf.ln() / mf).sqrt() + 1.0 / (mf * alpha.powf(1.0 / (k - 1.0))))
}

/// ⌈10·ln(1/β)⌉, at least one.
pub fn num_subsamples(beta: f64) -> usize {
    ((10.0 * (1.0 / beta).ln()).ceil() as usize).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoMConfig {
    pub num_subsamples: usize,
    pub rho: f64,
    /// Projected truncation centre x₀.
    pub center: f64,
}

impl MoMConfig {
    pub fn new(params: &ProblemParams, m: usize, c_rho: f64, center: f64) -> Self {
        Self { num_subsamples: num_subsamples(params.beta), rho: mom_radius(params.k, m, params.alpha, c_rho), center }
    }

    /// Whether n people meet n/K ≥ 10/(m·α²).
    pub fn sample_size_ok(&self, n: usize, m: usize, alpha: f64) -> bool {
        n as f64 / self.num_subsamples as f64 >= 10.0 / (m as f64 * alpha * alpha)
    }
}

/// Median (lower median for even K) of the means of K contiguous blocks of
/// `values` truncated to [center−ρ, center+ρ]. Trailing values that do not
/// fill a block are ignored.
pub fn truncated_median_of_means(values: &[f64], center: f64, rho: f64, k_mom: usize) -> Result<f64> {
    if k_mom == 0 || values.len() < k_mom {
        return Err(DpError::Config(format!("need at least {k_mom} values for {k_mom} subsamples, got {}", values.len())));
    }
    let s = values.len() / k_mom;
    let mut means: Vec<f64> = values[..s * k_mom]
        .chunks_exact(s)
        .map(|b| b.iter().map(|v| v.clamp(center - rho, center + rho)).sum::<f64>() / s as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Ok(means[(k_mom - 1) / 2])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationRegime {
    /// ρ/2 < |x₀−μ| ≤ 17ρ/16: E[Z] within ρ/8 of μ.
    Near,
    /// |x₀−μ| > 17ρ/16: E[Z] within ρ/16 of the clip edge nearest μ.
    Far,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationCase {
    pub regime: TruncationRegime,
    pub mean_z: f64,
    pub stderr: f64,
    pub interval: (f64, f64),
    /// mean_z lies in the interval up to 3 standard errors.
    pub passed: bool,
}

/// Monte Carlo E[Z] for Z the m-sample average clamped to [x₀−ρ, x₀+ρ],
/// compared with the interval the truncation lemma assigns to the regime of
/// x₀. Univariate specs; |x₀−μ| must exceed ρ/2.
pub fn truncation_case_check(
    spec: &crate::synth::SyntheticSpec,
    m: usize,
    x0: f64,
    rho: f64,
    trials: usize,
    seed: Seed,
) -> Result<TruncationCase> {
    if spec.dim() != 1 {
        return Err(DpError::InvalidParameter("truncation cases are univariate".into()));
    }
    if !(rho > 0.0) || m == 0 || trials < 2 {
        return Err(invalid("need rho > 0, m >= 1 and trials >= 2"));
    }
    let mu = spec.true_mean()?[0];
    let gap = x0 - mu;
    if gap.abs() <= rho / 2.0 {
        return Err(invalid(format!("|x0 - mu| = {} is not above rho/2", gap.abs())));
    }
    let (regime, interval) = if gap.abs() <= 17.0 * rho / 16.0 {
        (TruncationRegime::Near, (mu - rho / 8.0, mu + rho / 8.0))
    } else if gap > 0.0 {
        (TruncationRegime::Far, (x0 - rho, x0 - 15.0 * rho / 16.0))
    } else {
        (TruncationRegime::Far, (x0 + 15.0 * rho / 16.0, x0 + rho))
    };
    let g = spec.generator()?;
    let mut rng = seed.rng();
    let mut x = [0.0];
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..trials {
        g.sample_mean_into(&mut rng, m, &mut x);
        // centred on x0 to keep the sums well conditioned
        let z = x[0].clamp(x0 - rho, x0 + rho) - x0;
        s += z;
        s2 += z * z;
    }
    let n = trials as f64;
    let mean = s / n;
    let stderr = ((s2 / n - mean * mean).max(0.0) / n).sqrt();
    let mean_z = x0 + mean;
    let passed = mean_z >= interval.0 - 3.0 * stderr && mean_z <= interval.1 + 3.0 * stderr;
    Ok(TruncationCase { regime, mean_z, stderr, interval, passed })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    P,
    Q,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub winner: Winner,
    /// Batches that must be replaced to flip the outcome (∞ if impossible).
    pub margin_batches: f64,
    /// Batches that must be replaced for p to lose (0 if it already loses).
    pub cost_to_lose: f64,
    /// Median of subsample means, projected.
    pub median: f64,
    /// (p₀+q₀)/2.
    pub threshold: f64,
    pub mom: MoMConfig,
    /// People ignored so that K divides the rest.
    pub dropped: usize,
}

/// Per-person averages prepared for repeated comparisons.
struct Prepared<'a> {
    means: &'a [f64],
    d: usize,
    k_mom: usize,
    s: usize,
}

impl<'a> Prepared<'a> {
    fn new(means: &'a [f64], d: usize, k_mom: usize) -> Result<Self> {
        let n = means.len() / d;
        if n < k_mom {
            return Err(DpError::Config(format!("{n} people cannot form {k_mom} subsamples")));
        }
        let s = n / k_mom;
        Ok(Self { means: &means[..s * k_mom * d], d, k_mom, s })
    }

    fn dropped(&self, n: usize) -> usize {
        n - self.s * self.k_mom
    }

    /// Fixed-point subsample sums of u = (clamp(⟨e, S−p⟩, −ρ, ρ) + ρ)/(2ρ).
    fn subsample_sums(&self, p: &[f64], e: &[f64], rho: f64, out: &mut Vec<u64>) {
        out.clear();
        let inv = SCALE / (2.0 * rho);
        for block in self.means.chunks_exact(self.s * self.d) {
            let mut acc = 0u64;
            for sj in block.chunks_exact(self.d) {
                let mut proj = 0.0;
                for c in 0..self.d {
                    proj += (sj[c] - p[c]) * e[c];
                }
                let u = ((proj.clamp(-rho, rho) + rho) * inv).round();
                acc += (u as u64).min(SCALE_U);
            }
            out.push(acc);
        }
    }
}

struct RawComparison {
    past: usize,
    need: usize,
    cost_to_lose: u64,
    cost_to_win: u64,
}

const INF_COST: u64 = u64::MAX;

fn sum_smallest(costs: &mut [u64], count: usize) -> u64 {
    if count == 0 {
        return 0;
    }
    costs.sort_unstable();
    costs[..count].iter().fold(0u64, |a, &c| a.saturating_add(c))
}

/// p loses a subsample when its sum exceeds τ; p loses the comparison when at
/// least `need` = K − ⌊(K−1)/2⌋ subsamples are past τ.
fn raw_compare(sums: &[u64], s: usize, gap: f64, rho: f64, scratch: &mut Vec<u64>) -> RawComparison {
    let k_mom = sums.len();
    let need = k_mom - (k_mom - 1) / 2;
    let tau_real = (gap / 2.0 + rho) / (2.0 * rho) * s as f64;
    let tau = (tau_real * SCALE).floor().min(u64::MAX as f64) as u64;
    let reachable = tau < s as u64 * SCALE_U;
    let past = sums.iter().filter(|&&u| u > tau).count();

    scratch.clear();
    scratch.extend(sums.iter().map(|&u| {
        if u > tau {
            0
        } else if !reachable {
            INF_COST
        } else {
            (tau - u) / SCALE_U + 1
        }
    }));
    let cost_to_lose = sum_smallest(scratch, need);

    // p wins again once at most need − 1 subsamples are past τ
    let cost_to_win = if past < need {
        0
    } else {
        scratch.clear();
        scratch.extend(sums.iter().filter(|&&u| u > tau).map(|&u| (u - tau).div_ceil(SCALE_U)));
        sum_smallest(scratch, past - (need - 1))
    };
    RawComparison { past, need, cost_to_lose, cost_to_win }
}

fn as_real(c: u64) -> f64 {
    if c == INF_COST {
        f64::INFINITY
    } else {
        c as f64
    }
}

fn unit_direction(p: &[f64], q: &[f64]) -> Result<(Vec<f64>, f64)> {
    let diff: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    let gap = l2_norm(&diff);
    if !(gap > 0.0) {
        return Err(invalid("binary mean comparison needs p != q"));
    }
    Ok((diff.iter().map(|x| x / gap).collect(), gap))
}

/// Compares candidates p and q through the truncated median of means of the
/// per-person averages projected on (q−p)/‖q−p‖₂, truncated at p₀ ± ρ.
pub fn bin_mean_comp(data: &PersonDataset, p: &[f64], q: &[f64], params: &ProblemParams, c_rho: f64) -> Result<Comparison> {
    let d = data.d();
    if p.len() != d || q.len() != d {
        return Err(invalid("candidate dimension does not match the data"));
    }
    let (e, gap) = unit_direction(p, q)?;
    let p0: f64 = p.iter().zip(&e).map(|(a, b)| a * b).sum();
    let mom = MoMConfig::new(params, data.m(), c_rho, p0);
    let means = data.person_means();
    let prep = Prepared::new(&means, d, mom.num_subsamples)?;
    let mut sums = Vec::with_capacity(mom.num_subsamples);
    prep.subsample_sums(p, &e, mom.rho, &mut sums);
    let mut scratch = Vec::new();
    let raw = raw_compare(&sums, prep.s, gap, mom.rho, &mut scratch);

    let mut sorted = sums.clone();
    sorted.sort_unstable();
    let med = sorted[(sorted.len() - 1) / 2] as f64 / SCALE;
    let median = p0 - mom.rho + 2.0 * mom.rho * med / prep.s as f64;
    let winner = if raw.past >= raw.need { Winner::Q } else { Winner::P };
    let margin = match winner {
        Winner::P => raw.cost_to_lose,
        Winner::Q => raw.cost_to_win,
    };
    Ok(Comparison {
        winner,
        margin_batches: as_real(margin),
        cost_to_lose: as_real(raw.cost_to_lose),
        median,
        threshold: p0 + gap / 2.0,
        mom,
        dropped: prep.dropped(data.n()),
    })
}

/// Points of a cover grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverGrid {
    pub points: Vec<Vec<f64>>,
    /// Spacing between neighbouring grid values along a coordinate.
    pub granularity: f64,
    pub origin: Vec<f64>,
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

fn even_points(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
}

/// Cover of [−α, α]^d with ⌈√d⌉+1 evenly spaced values per coordinate, so the
/// spacing is at most 2α/√d.
pub fn global_cover(d: usize, alpha: f64) -> CoverGrid {
    let count = ((d as f64).sqrt().ceil() as usize) + 1;
    let axis = even_points(-alpha, alpha, count);
    CoverGrid { points: cartesian(&vec![axis; d]), granularity: 2.0 * alpha / (count - 1) as f64, origin: vec![0.0; d] }
}

/// Challengers of p: grid over p ± 2α with spacing at most α/(4√d), minus the
/// closed ℓ2 ball of radius α around p.
pub fn local_cover(p: &[f64], alpha: f64) -> CoverGrid {
    let d = p.len();
    let count = ((16.0 * (d as f64).sqrt()).ceil() as usize) + 1;
    let offsets = even_points(-2.0 * alpha, 2.0 * alpha, count);
    let points = cartesian(&vec![offsets; d])
        .into_iter()
        .filter(|off| l2_norm(off) > alpha)
        .map(|off| off.iter().zip(p).map(|(o, c)| o + c).collect())
        .collect();
    CoverGrid { points, granularity: 4.0 * alpha / (count - 1) as f64, origin: p.to_vec() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub candidate: Vec<f64>,
    pub score: f64,
    pub cap: f64,
}

fn score_prepared(prep: &Prepared, n: usize, m: usize, p: &[f64], params: &ProblemParams, c_rho: f64) -> Result<ScoreRecord> {
    let rho = mom_radius(params.k, m, params.alpha, c_rho);
    let cap = n as f64 * params.alpha;
    let cover = local_cover(p, params.alpha);
    assert!(!cover.points.is_empty(), "local cover is never empty");
    let mut best = INF_COST;
    let mut sums = Vec::with_capacity(prep.k_mom);
    let mut scratch = Vec::with_capacity(prep.k_mom);
    for q in &cover.points {
        let (e, gap) = unit_direction(p, q)?;
        prep.subsample_sums(p, &e, rho, &mut sums);
        let raw = raw_compare(&sums, prep.s, gap, rho, &mut scratch);
        best = best.min(raw.cost_to_lose);
        if best == 0 {
            break;
        }
    }
    Ok(ScoreRecord { candidate: p.to_vec(), score: as_real(best).min(cap), cap })
}

/// Score of p: the fewest batch replacements that make p lose a comparison
/// against some challenger in its local cover, capped at n·α.
pub fn score_candidate(data: &PersonDataset, p: &[f64], params: &ProblemParams, c_rho: f64) -> Result<ScoreRecord> {
    if p.len() != data.d() {
        return Err(invalid("candidate dimension does not match the data"));
    }
    let means = data.person_means();
    let prep = Prepared::new(&means, data.d(), num_subsamples(params.beta))?;
    score_prepared(&prep, data.n(), data.m(), p, params, c_rho)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FineEstimate {
    pub estimate: Vec<f64>,
    pub chosen: usize,
    pub scores: Vec<ScoreRecord>,
    /// Parameters handed to the candidate tests.
    pub test_alpha: f64,
    pub test_beta: f64,
}

/// Writes `c1..cd,score,cap` rows.
pub fn write_scores_csv<W: Write>(scores: &[ScoreRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if let Some(first) = scores.first() {
        let mut header: Vec<String> = (1..=first.candidate.len()).map(|i| format!("c{i}")).collect();
        header.push("score".into());
        header.push("cap".into());
        wtr.write_record(&header)?;
    }
    for s in scores {
        let mut row: Vec<String> = s.candidate.iter().map(|v| v.to_string()).collect();
        row.push(s.score.to_string());
        row.push(s.cap.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Exponential mechanism (Δ = 1) over precomputed scores.
pub fn select_from_scores(scores: &[ScoreRecord], epsilon: f64, seed: Seed) -> Result<usize> {
    exponential_mechanism(scores.iter().enumerate().map(|(i, s)| (i, s.score)), 1.0, epsilon, seed)
}

/// Scores every point of the global cover (tests run at 8α/9 and
/// β/(2·|cover|)) and samples one with the exponential mechanism.
/// Assumes the data were recentred so that ‖μ‖∞ ≤ α.
pub fn fine_est_pure(data: &PersonDataset, params: &ProblemParams, epsilon: f64, c_rho: f64, seed: Seed) -> Result<FineEstimate> {
    let d = data.d();
    if d > MAX_PURE_DIM {
        return Err(DpError::Scale(format!(
            "pure-DP fine estimation enumerates a cover of size about (sqrt(d)+1)^d with (sqrt(d))^d growth; d = {d} exceeds {MAX_PURE_DIM}"
        )));
    }
    params.validate()?;
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be > 0, got {epsilon}")));
    }
    let cover = global_cover(d, params.alpha);
    let test_alpha = 8.0 * params.alpha / 9.0;
    let test_beta = params.beta / (2.0 * cover.points.len() as f64);
    let test_params = ProblemParams { alpha: test_alpha, beta: test_beta, ..*params };
    let means = data.person_means();
    let prep = Prepared::new(&means, d, num_subsamples(test_beta))?;
    let scores =
        cover.points.par_iter().map(|p| score_prepared(&prep, data.n(), data.m(), p, &test_params, c_rho)).collect::<Result<Vec<_>>>()?;
    let chosen = select_from_scores(&scores, epsilon, seed.child("select"))?;
    Ok(FineEstimate { estimate: scores[chosen].candidate.clone(), chosen, scores, test_alpha, test_beta })
}

/// Pure-DP estimator on 2n people: the first n give a coordinate-wise coarse
/// estimate (univariate estimator at ε/d and β/(2d) per coordinate), the
/// other n, recentred, go through [`fine_est_pure`]. The phases touch
/// disjoint people, so the total is (ε, 0) by parallel composition.
pub fn estimate_pure_full(data: &PersonDataset, params: &ProblemParams, epsilon: f64, seed: Seed) -> Result<EstimateReport> {
    estimate_pure_full_with(data, params, epsilon, DEFAULT_C_RHO, seed)
}

pub fn estimate_pure_full_with(
    data: &PersonDataset,
    params: &ProblemParams,
    epsilon: f64,
    c_rho: f64,
    seed: Seed,
) -> Result<EstimateReport> {
    let start = Instant::now();
    params.validate()?;
    let d = data.d();
    if d > MAX_PURE_DIM {
        return Err(DpError::Scale(format!("pure-DP estimator supports d <= {MAX_PURE_DIM}, got {d}")));
    }
    let half = data.n() / 2;
    if half == 0 {
        return Err(invalid("pure-DP estimator needs at least two people"));
    }
    let first = data.people(0, half)?;
    let second = data.people(half, 2 * half)?;

    let coord_budget = PrivacyBudget::pure(epsilon / d as f64)?;
    let coord_params = ProblemParams { beta: params.beta / (2.0 * d as f64), ..*params };
    let mut mu_coarse = Vec::with_capacity(d);
    let mut coarse_ledger = BudgetLedger::basic();
    for c in 0..d {
        let rep = estimate_mean_1d(&first.coordinate(c), &coord_budget, &coord_params, seed.child("coarse").derive(c as u64))?;
        mu_coarse.push(rep.estimate[0]);
        coarse_ledger.push(format!("coarse[{c}]"), coord_budget);
    }
    let centred = second.recentered(&mu_coarse)?;
    let fine = fine_est_pure(&centred, params, epsilon, c_rho, seed.child("fine"))?;
    let estimate: Vec<f64> = fine.estimate.iter().zip(&mu_coarse).map(|(a, b)| a + b).collect();

    let mut ledger = BudgetLedger::new(CompositionMode::Parallel);
    ledger.push("coarse (first half)", PrivacyBudget::pure(epsilon)?);
    ledger.push("fine (second half)", PrivacyBudget::pure(epsilon)?);
    let mut report = EstimateReport::new("pure_dp", estimate, ledger, seed.0)?;
    report.rho = Some(mom_radius(params.k, data.m(), fine.test_alpha, c_rho));
    report.mu_coarse = Some(mu_coarse);
    report.note("composition", "parallel over disjoint people");
    report.note("coarse_ledger", &coarse_ledger);
    report.note("c_rho", c_rho);
    report.note("chosen_cover_point", &fine.estimate);
    report.note("cover_size", fine.scores.len());
    report.note("test_alpha", fine.test_alpha);
    report.note("test_beta", fine.test_beta);
    report.note("dropped_people", data.n() - 2 * half);
    report.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}
