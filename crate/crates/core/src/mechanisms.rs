//! Additive noise mechanisms, private histograms, the exponential mechanism
//! and a composition ledger.

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{invalid, DpError, Result};
use crate::types::{PrivacyBudget, Seed};

/// One Laplace(b) draw by inverse CDF from a single open-interval uniform.
/// `b = 0` returns 0 (used for the ε = ∞ limit).
pub fn sample_laplace<R: Rng + ?Sized>(rng: &mut R, b: f64) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// One draw from Laplace(b).
pub fn laplace_noise(b: f64, seed: Seed) -> Result<f64> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(invalid(format!("Laplace scale must be > 0, got {b}")));
    }
    Ok(sample_laplace(&mut seed.rng(), b))
}

/// Per-coordinate stddev of the Gaussian mechanism: Δ·√(2 ln(2/δ))/ε.
pub fn gaussian_sigma(l2_sensitivity: f64, budget: &PrivacyBudget) -> Result<f64> {
    if budget.is_pure() {
        return Err(DpError::MechanismInapplicable("the Gaussian mechanism needs delta > 0".into()));
    }
    if !(l2_sensitivity >= 0.0) {
        return Err(invalid(format!("sensitivity must be >= 0, got {l2_sensitivity}")));
    }
    Ok(l2_sensitivity * (2.0 * (2.0 / budget.delta).ln()).sqrt() / budget.epsilon)
}

/// `value` plus isotropic Gaussian noise calibrated to ℓ2 sensitivity Δ.
pub fn gaussian_mechanism(value: &[f64], l2_sensitivity: f64, budget: &PrivacyBudget, seed: Seed) -> Result<Vec<f64>> {
    let sigma = gaussian_sigma(l2_sensitivity, budget)?;
    Ok(add_gaussian(value, sigma, &mut seed.rng()))
}

pub(crate) fn add_gaussian<R: Rng + ?Sized>(value: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    value
        .iter()
        .map(|v| {
            if sigma == 0.0 {
                *v
            } else {
                let z: f64 = StandardNormal.sample(rng);
                v + sigma * z
            }
        })
        .collect()
}

/// Buckets of width r covering [−R−2r, R+2r). The bucket count is
/// ⌈(2R+4r)/r⌉; when (2R+4r)/r is not an integer the last bucket reaches past
/// R+2r and the cover is [−R−2r, −R−2r + K·r).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bucket_width: f64,
    pub half_range: f64,
    pub left: f64,
    pub num_buckets: usize,
}

impl HistogramSpec {
    pub fn new(bucket_width: f64, half_range: f64) -> Result<Self> {
        if !(bucket_width > 0.0) || !bucket_width.is_finite() {
            return Err(invalid(format!("bucket width must be > 0, got {bucket_width}")));
        }
        if !(half_range > 0.0) || !half_range.is_finite() {
            return Err(invalid(format!("half range must be > 0, got {half_range}")));
        }
        let span = 2.0 * half_range + 4.0 * bucket_width;
        let ratio = span / bucket_width;
        // tolerate rounding when the ratio is an integer in exact arithmetic
        let num_buckets = if (ratio - ratio.round()).abs() < 1e-9 { ratio.round() } else { ratio.ceil() } as usize;
        Ok(Self { bucket_width, half_range, left: -half_range - 2.0 * bucket_width, num_buckets })
    }

    pub fn bucket(&self, i: usize) -> (f64, f64) {
        (self.left + i as f64 * self.bucket_width, self.left + (i + 1) as f64 * self.bucket_width)
    }

    pub fn right(&self) -> f64 {
        self.bucket(self.num_buckets - 1).1
    }

    pub fn buckets(&self) -> Vec<(f64, f64)> {
        (0..self.num_buckets).map(|i| self.bucket(i)).collect()
    }

    /// Index of the bucket [a, b) containing x, or None outside the cover.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        if !(x >= self.left) || x >= self.right() {
            return None;
        }
        let mut i = (((x - self.left) / self.bucket_width).floor() as usize).min(self.num_buckets - 1);
        if x < self.bucket(i).0 {
            i -= 1;
        } else if i + 1 < self.num_buckets && x >= self.bucket(i + 1).0 {
            i += 1;
        }
        Some(i)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyHistogram {
    pub counts: Vec<f64>,
    pub released: Vec<bool>,
    pub spec: HistogramSpec,
    /// Points that fell outside the bucket cover.
    pub dropped: usize,
    /// Release threshold of the stability variant (None in pure mode).
    pub threshold: Option<f64>,
}

impl NoisyHistogram {
    /// Index of the released bucket with the largest noisy count, ties toward
    /// the smaller left endpoint.
    pub fn argmax_released(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for i in 0..self.counts.len() {
            if self.released[i] && best.is_none_or(|b| self.counts[i] > self.counts[b]) {
                best = Some(i);
            }
        }
        best
    }

    /// CSV with columns bucket_left, bucket_right, noisy_count, released.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["bucket_left", "bucket_right", "noisy_count", "released"])?;
        for (i, (c, r)) in self.counts.iter().zip(&self.released).enumerate() {
            let (a, b) = self.spec.bucket(i);
            wtr.write_record([a.to_string(), b.to_string(), c.to_string(), r.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Release threshold of the stability histogram: 1 + 2 ln(2/δ)/ε.
pub fn stability_threshold(budget: &PrivacyBudget) -> f64 {
    1.0 + 2.0 * (2.0 / budget.delta).ln() / budget.epsilon
}

/// Private histogram. Pure mode adds Laplace(2/ε) to every bucket; approximate
/// mode adds it to non-empty buckets only and suppresses buckets whose noisy
/// count is below [`stability_threshold`].
pub fn private_histogram(points: &[f64], spec: &HistogramSpec, budget: &PrivacyBudget, seed: Seed) -> NoisyHistogram {
    let mut true_counts = vec![0usize; spec.num_buckets];
    let mut dropped = 0;
    for &x in points {
        match spec.index_of(x) {
            Some(i) => true_counts[i] += 1,
            None => dropped += 1,
        }
    }
    let b = 2.0 / budget.epsilon;
    let mut rng = seed.rng();
    let (counts, released, threshold) = if budget.is_pure() {
        let counts = true_counts.iter().map(|&c| c as f64 + sample_laplace(&mut rng, b)).collect();
        (counts, vec![true; spec.num_buckets], None)
    } else {
        let thr = stability_threshold(budget);
        let mut counts = Vec::with_capacity(spec.num_buckets);
        let mut released = Vec::with_capacity(spec.num_buckets);
        for &c in &true_counts {
            if c == 0 {
                counts.push(0.0);
                released.push(false);
            } else {
                let noisy = c as f64 + sample_laplace(&mut rng, b);
                counts.push(noisy);
                released.push(noisy >= thr);
            }
        }
        (counts, released, Some(thr))
    };
    NoisyHistogram { counts, released, spec: spec.clone(), dropped, threshold }
}

/// Exponential mechanism over a stream of (candidate, score) pairs by
/// Gumbel-argmax: returns argmax of ε·s/(2Δ) + G with G standard Gumbel.
/// One pass, nothing normalised. Ties go to the earliest candidate.
pub fn exponential_mechanism<C, I>(scores: I, sensitivity: f64, epsilon: f64, seed: Seed) -> Result<C>
where
    I: IntoIterator<Item = (C, f64)>,
{
    if !(sensitivity > 0.0) {
        return Err(invalid(format!("sensitivity must be > 0, got {sensitivity}")));
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(invalid(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let mut rng = seed.rng();
    let mut best: Option<(C, f64)> = None;
    for (cand, score) in scores {
        let key = if epsilon.is_infinite() {
            score
        } else {
            let u: f64 = rng.sample(Open01);
            epsilon * score / (2.0 * sensitivity) - (-u.ln()).ln()
        };
        if best.as_ref().is_none_or(|(_, b)| key > *b) {
            best = Some((cand, key));
        }
    }
    best.map(|(c, _)| c).ok_or_else(|| DpError::EmptyInput("exponential mechanism got no candidates".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    pub epsilon: f64,
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CompositionMode {
    Basic,
    Advanced {
        delta0: f64,
    },
    /// Mechanisms applied to disjoint sets of people: (max ε, max δ).
    Parallel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub entries: Vec<LedgerEntry>,
    pub mode: CompositionMode,
}

impl BudgetLedger {
    pub fn new(mode: CompositionMode) -> Self {
        Self { entries: Vec::new(), mode }
    }

    pub fn basic() -> Self {
        Self::new(CompositionMode::Basic)
    }

    pub fn push(&mut self, label: impl Into<String>, budget: PrivacyBudget) {
        self.entries.push(LedgerEntry { label: label.into(), epsilon: budget.epsilon, delta: budget.delta });
    }

    pub fn from_pairs(pairs: &[(f64, f64)], mode: CompositionMode) -> Self {
        let entries =
            pairs.iter().enumerate().map(|(i, &(epsilon, delta))| LedgerEntry { label: format!("step{i}"), epsilon, delta }).collect();
        Self { entries, mode }
    }
}

/// Composed (ε, δ). Entries are summed in sorted order so the result does not
/// depend on their order. An empty ledger composes to (0, 0), which is not a
/// valid [`PrivacyBudget`], so the result is returned as a plain pair.
pub fn ledger_total(ledger: &BudgetLedger) -> Result<(f64, f64)> {
    let mut eps: Vec<f64> = ledger.entries.iter().map(|e| e.epsilon).collect();
    let mut dels: Vec<f64> = ledger.entries.iter().map(|e| e.delta).collect();
    eps.sort_by(f64::total_cmp);
    dels.sort_by(f64::total_cmp);
    match ledger.mode {
        CompositionMode::Basic => Ok((eps.iter().sum(), dels.iter().sum())),
        CompositionMode::Parallel => Ok((eps.last().copied().unwrap_or(0.0), dels.last().copied().unwrap_or(0.0))),
        CompositionMode::Advanced { delta0 } => {
            if eps.is_empty() {
                return Ok((0.0, 0.0));
            }
            if !(delta0 > 0.0 && delta0 < 1.0) {
                return Err(DpError::Mode(format!("advanced composition needs 0 < delta0 < 1, got {delta0}")));
            }
            let e0 = eps[0];
            if eps.iter().any(|e| *e != e0) {
                return Err(DpError::Mode("advanced composition needs a common epsilon".into()));
            }
            if e0 > 1.0 {
                return Err(DpError::Mode(format!("advanced composition needs epsilon0 <= 1, got {e0}")));
            }
            let t = eps.len() as f64;
            Ok((advanced_epsilon(e0, t, delta0), delta0 + dels.iter().sum::<f64>()))
        }
    }
}

/// ε₀·√(6·t·ln(1/δ₀)).
pub fn advanced_epsilon(epsilon0: f64, t: f64, delta0: f64) -> f64 {
    epsilon0 * (6.0 * t * (1.0 / delta0).ln()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_rejects_bad_scale() {
        assert!(laplace_noise(0.0, Seed(1)).is_err());
        assert!(laplace_noise(-1.0, Seed(1)).is_err());
        assert_eq!(laplace_noise(1.0, Seed(1)).unwrap(), laplace_noise(1.0, Seed(1)).unwrap());
    }

    #[test]
    fn laplace_moments() {
        let mut rng = Seed(5).rng();
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_laplace(&mut rng, 1.0)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() <= 0.01, "{mean}");
        for t in [1.0f64, 2.0, 3.0, 4.0] {
            let p = xs.iter().filter(|x| x.abs() >= t).count() as f64 / n as f64;
            assert!(p <= 1.1 * (-t).exp(), "t={t} p={p}");
        }
        let mut rng = Seed(6).rng();
        let ys: Vec<f64> = (0..n).map(|_| sample_laplace(&mut rng, 2.0)).collect();
        let m = ys.iter().sum::<f64>() / n as f64;
        let sd = (ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((sd / (2.0 * 2f64.sqrt()) - 1.0).abs() < 0.02, "{sd}");
    }

    #[test]
    fn gaussian_mechanism_examples() {
        let b = PrivacyBudget::new(1.0, 0.01).unwrap();
        assert!((gaussian_sigma(1.0, &b).unwrap() - 3.255_247_261_437_458_6).abs() < 1e-12);
        assert_eq!(gaussian_mechanism(&[1.0, 2.0], 0.0, &b, Seed(1)).unwrap(), vec![1.0, 2.0]);
        let out = gaussian_mechanism(&[1.0, 2.0, 3.0], 1.0, &b, Seed(1)).unwrap();
        assert_eq!(out.len(), 3);
        let pure = PrivacyBudget::pure(1.0).unwrap();
        assert!(matches!(gaussian_mechanism(&[0.0], 1.0, &pure, Seed(1)), Err(DpError::MechanismInapplicable(_))));
    }

    #[test]
    fn gaussian_stddev_matches_calibration() {
        let b = PrivacyBudget::new(1.0, 0.01).unwrap();
        let sigma = gaussian_sigma(1.0, &b).unwrap();
        let mut rng = Seed(9).rng();
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| add_gaussian(&[0.0], sigma, &mut rng)[0]).collect();
        let sd = (xs.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
        assert!((sd / sigma - 1.0).abs() < 0.01);
    }

    #[test]
    fn histogram_grid_layout() {
        let spec = HistogramSpec::new(1.0, 1.0).unwrap();
        assert_eq!(spec.num_buckets, 6);
        assert_eq!(spec.bucket(0), (-3.0, -2.0));
        assert_eq!(spec.right(), 3.0);
        assert_eq!(spec.index_of(0.0), Some(3));
        assert_eq!(spec.index_of(-3.0), Some(0));
        assert_eq!(spec.index_of(3.0), None);
        assert_eq!(spec.index_of(-3.1), None);
        let odd = HistogramSpec::new(1.6, 2.0).unwrap();
        assert_eq!(odd.num_buckets, 7);
        assert_eq!(odd.index_of(0.3), Some(3));
    }

    #[test]
    fn histogram_noiseless_limit() {
        let spec = HistogramSpec::new(1.0, 1.0).unwrap();
        let b = PrivacyBudget::pure(f64::INFINITY).unwrap();
        let h = private_histogram(&[0.1, 0.2, 1.5], &spec, &b, Seed(1));
        assert_eq!(h.counts, vec![0.0, 0.0, 0.0, 2.0, 1.0, 0.0]);
        assert_eq!(h.dropped, 0);
        let h = private_histogram(&[0.1, 10.0, -10.0], &spec, &b, Seed(1));
        assert_eq!(h.dropped, 2);
    }

    #[test]
    fn stability_threshold_value() {
        let b = PrivacyBudget::new(1.0, 1e-6).unwrap();
        assert!((stability_threshold(&b) - 30.017_315_477_048_438).abs() < 1e-9);
    }

    #[test]
    fn empty_buckets_never_released() {
        let spec = HistogramSpec::new(1.0, 1.0).unwrap();
        let b = PrivacyBudget::new(1.0, 1e-6).unwrap();
        let points = vec![0.5; 5];
        for s in 0..100_000u64 {
            let h = private_histogram(&points, &spec, &b, Seed(s));
            for (i, r) in h.released.iter().enumerate() {
                assert!(!*r || i == 3);
            }
        }
    }

    #[test]
    fn histogram_csv_has_header() {
        let spec = HistogramSpec::new(1.0, 1.0).unwrap();
        let h = private_histogram(&[0.1], &spec, &PrivacyBudget::pure(1.0).unwrap(), Seed(1));
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("bucket_left,bucket_right,noisy_count,released\n"));
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn exponential_mechanism_uniform_when_scores_equal() {
        let mut freq = [0usize; 4];
        let draws = 100_000u64;
        for s in 0..draws {
            let c = exponential_mechanism((0..4).map(|i| (i, 1.0)), 1.0, 1.0, Seed(s)).unwrap();
            freq[c] += 1;
        }
        for f in freq {
            assert!((f as f64 / draws as f64 - 0.25).abs() < 0.01);
        }
        let mut freq = [0usize; 3];
        for s in 0..30_000u64 {
            let c = exponential_mechanism([(0, 0.0), (1, 100.0), (2, -50.0)], 1.0, 0.0, Seed(s)).unwrap();
            freq[c] += 1;
        }
        for f in freq {
            assert!((f as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.015);
        }
    }

    #[test]
    fn exponential_mechanism_ratio() {
        let mut high = 0usize;
        let draws = 1_000_000u64;
        let base = Seed(77);
        for s in 0..draws {
            if exponential_mechanism([(0, 0.0), (1, 2.0)], 1.0, 1.0, base.derive(s)).unwrap() == 1 {
                high += 1;
            }
        }
        let ratio = high as f64 / (draws as usize - high) as f64;
        assert!((ratio / std::f64::consts::E - 1.0).abs() < 0.03, "{ratio}");
    }

    #[test]
    fn exponential_mechanism_errors_and_ties() {
        let empty: Vec<(usize, f64)> = vec![];
        assert!(matches!(exponential_mechanism(empty, 1.0, 1.0, Seed(1)), Err(DpError::EmptyInput(_))));
        assert!(exponential_mechanism([(0, 1.0)], 0.0, 1.0, Seed(1)).is_err());
        let c = exponential_mechanism([(0, 5.0), (1, 5.0)], 1.0, f64::INFINITY, Seed(1)).unwrap();
        assert_eq!(c, 0);
    }

    #[test]
    fn ledger_examples() {
        let basic = BudgetLedger::from_pairs(&[(0.5, 0.0), (0.5, 0.0)], CompositionMode::Basic);
        assert_eq!(ledger_total(&basic).unwrap(), (1.0, 0.0));
        let adv = BudgetLedger::from_pairs(&vec![(0.1, 0.0); 100], CompositionMode::Advanced { delta0: 1e-6 });
        let (e, d) = ledger_total(&adv).unwrap();
        assert!((e - 9.104_562_776_310_878).abs() < 1e-9, "{e}");
        assert_eq!(d, 1e-6);
        assert_eq!(ledger_total(&BudgetLedger::basic()).unwrap(), (0.0, 0.0));
        let mixed = BudgetLedger::from_pairs(&[(0.1, 0.0), (0.2, 0.0)], CompositionMode::Advanced { delta0: 1e-6 });
        assert!(matches!(ledger_total(&mixed), Err(DpError::Mode(_))));
        let par = BudgetLedger::from_pairs(&[(1.0, 0.0), (0.5, 1e-6)], CompositionMode::Parallel);
        assert_eq!(ledger_total(&par).unwrap(), (1.0, 1e-6));
    }
}
