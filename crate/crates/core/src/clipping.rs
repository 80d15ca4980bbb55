//! Truncation to an interval, projection onto a ball, and Monte Carlo oracles
//! for the bias and variance effects of truncation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, DpError, Result};
use crate::synth::SyntheticSpec;
use crate::types::{ClipBall, Seed};

/// min(max(x, lo), hi).
pub fn trunc_1d(x: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(lo <= hi) {
        return Err(invalid(format!("trunc needs lo <= hi, got [{lo}, {hi}]")));
    }
    Ok(x.clamp(lo, hi))
}

/// Projection of `x` onto `ball`. Points inside or on the surface are
/// returned unchanged.
pub fn clip_ball(x: &[f64], ball: &ClipBall) -> Vec<f64> {
    let mut out = x.to_vec();
    clip_ball_in_place(&mut out, ball);
    out
}

pub fn clip_ball_in_place(x: &mut [f64], ball: &ClipBall) {
    debug_assert_eq!(x.len(), ball.center.len());
    let dist = crate::types::l2_dist(x, &ball.center);
    if dist <= ball.radius {
        return;
    }
    if ball.radius == 0.0 {
        x.copy_from_slice(&ball.center);
        return;
    }
    let orig = x.to_vec();
    let mut f = ball.radius / dist;
    // rounding can land a few ulps outside; shrink until it does not
    loop {
        for ((xi, oi), ci) in x.iter_mut().zip(&orig).zip(&ball.center) {
            *xi = ci + f * (oi - ci);
        }
        if crate::types::l2_dist(x, &ball.center) <= ball.radius {
            return;
        }
        f *= 1.0 - 2.0 * f64::EPSILON;
    }
}

/// √((k−1)·ln m / m): smallest ρ − u for which the truncation-bias bound holds.
pub fn bias_threshold(k: f64, m: usize) -> f64 {
    let m = m as f64;
    ((k - 1.0) * m.ln() / m).sqrt()
}

/// m^{−k+1}·(ρ−u)^{−k+1}/(k−1), or None when ρ − u is below [`bias_threshold`].
pub fn truncation_bias_bound(k: f64, m: usize, rho: f64, u_err: f64) -> Option<f64> {
    let gap = rho - u_err;
    if gap <= 0.0 || gap < bias_threshold(k, m) {
        return None;
    }
    Some((m as f64).powf(1.0 - k) * gap.powf(1.0 - k) / (k - 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasEstimate {
    /// Monte Carlo |E[trunc(S̄_m)] − μ|.
    pub bias: f64,
    pub stderr: f64,
    /// |center − μ|.
    pub u_err: f64,
    /// Analytic bound, None when its precondition fails.
    pub bound: Option<f64>,
}

/// Monte Carlo truncation bias of the m-sample average (univariate specs).
///
/// Uses E[trunc(S̄)] − μ = E[trunc(S̄) − S̄], whose summand vanishes unless S̄
/// leaves the interval, so the estimate has far less variance than averaging
/// trunc(S̄) directly.
pub fn bias_oracle_1d(spec: &SyntheticSpec, m: usize, ball: &ClipBall, trials: usize, seed: Seed) -> Result<BiasEstimate> {
    if trials < 100_000 {
        return Err(invalid(format!("bias oracle needs >= 10^5 trials, got {trials}")));
    }
    if spec.dim() != 1 || ball.dim() != 1 {
        return Err(DpError::InvalidParameter("bias oracle is univariate".into()));
    }
    if m == 0 {
        return Err(invalid("m must be >= 1"));
    }
    let generator = spec.generator()?;
    let mu = spec.true_mean()?[0];
    let (lo, hi) = (ball.center[0] - ball.radius, ball.center[0] + ball.radius);
    let mut rng = seed.rng();
    let mut x = [0.0];
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..trials {
        generator.sample_mean_into(&mut rng, m, &mut x);
        let diff = x[0].clamp(lo, hi) - x[0];
        s += diff;
        s2 += diff * diff;
    }
    let n = trials as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0);
    let u_err = (ball.center[0] - mu).abs();
    Ok(BiasEstimate { bias: mean.abs(), stderr: (var / n).sqrt(), u_err, bound: truncation_bias_bound(spec.k, m, ball.radius, u_err) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceContraction {
    pub var_x: f64,
    pub var_trunc: f64,
    /// Standard error of var_x − var_trunc.
    pub stderr: f64,
}

/// Var(X) and Var(trunc(X)) for single draws of a univariate spec.
pub fn variance_contraction_check(spec: &SyntheticSpec, ball: &ClipBall, trials: usize, seed: Seed) -> Result<VarianceContraction> {
    if trials < 100_000 {
        return Err(invalid(format!("variance check needs >= 10^5 trials, got {trials}")));
    }
    if spec.dim() != 1 || ball.dim() != 1 {
        return Err(DpError::InvalidParameter("variance check is univariate".into()));
    }
    let generator = spec.generator()?;
    let (lo, hi) = (ball.center[0] - ball.radius, ball.center[0] + ball.radius);
    let mut rng = seed.rng();
    let mut x = [0.0];
    let mut xs = Vec::with_capacity(trials);
    let mut zs = Vec::with_capacity(trials);
    for _ in 0..trials {
        generator.sample_into(&mut rng, &mut x);
        xs.push(x[0]);
        zs.push(x[0].clamp(lo, hi));
    }
    // shift by the first draw so constant samples give exactly zero variance
    let (x0, z0) = (xs[0], zs[0]);
    xs.iter_mut().for_each(|x| *x -= x0);
    zs.iter_mut().for_each(|z| *z -= z0);
    let n = trials as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let mz = zs.iter().sum::<f64>() / n;
    let diffs: Vec<f64> = xs.iter().zip(&zs).map(|(x, z)| (x - mx).powi(2) - (z - mz).powi(2)).collect();
    let var_x = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n;
    let var_trunc = zs.iter().map(|z| (z - mz).powi(2)).sum::<f64>() / n;
    let md = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|v| (v - md).powi(2)).sum::<f64>() / n).sqrt();
    Ok(VarianceContraction { var_x, var_trunc, stderr: sd / n.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trunc_examples() {
        assert_eq!(trunc_1d(0.5, -1.0, 1.0).unwrap(), 0.5);
        assert_eq!(trunc_1d(2.0, -1.0, 1.0).unwrap(), 1.0);
        assert_eq!(trunc_1d(-5.0, 0.0, 2.0).unwrap(), 0.0);
        assert!(trunc_1d(0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn clip_examples() {
        let unit = ClipBall::new(vec![0.0, 0.0], 1.0).unwrap();
        let out = clip_ball(&[3.0, 4.0], &unit);
        assert!((out[0] - 0.6).abs() < 1e-15 && (out[1] - 0.8).abs() < 1e-15);
        assert_eq!(clip_ball(&[0.3, -0.2], &unit), vec![0.3, -0.2]);
        let point = ClipBall::new(vec![1.0, 1.0], 0.0).unwrap();
        assert_eq!(clip_ball(&[7.0, -3.0], &point), vec![1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn clip_lands_inside_and_is_idempotent(
            x in prop::collection::vec(-1e3f64..1e3, 3),
            c in prop::collection::vec(-10f64..10.0, 3),
            r in 0f64..50.0,
        ) {
            let ball = ClipBall::new(c.clone(), r).unwrap();
            let once = clip_ball(&x, &ball);
            prop_assert!(crate::types::l2_dist(&once, &c) <= r);
            prop_assert_eq!(clip_ball(&once, &ball), once);
        }

        #[test]
        fn clip_is_one_lipschitz(
            x in prop::collection::vec(-100f64..100.0, 4),
            y in prop::collection::vec(-100f64..100.0, 4),
            r in 0.01f64..20.0,
        ) {
            let ball = ClipBall::new(vec![0.5; 4], r).unwrap();
            let (cx, cy) = (clip_ball(&x, &ball), clip_ball(&y, &ball));
            prop_assert!(crate::types::l2_dist(&cx, &cy) <= crate::types::l2_dist(&x, &y) * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn trunc_is_monotone(a in -10f64..10.0, b in -10f64..10.0, lo in -5f64..0.0, w in 0f64..5.0) {
            let (x, y) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(trunc_1d(x, lo, lo + w).unwrap() <= trunc_1d(y, lo, lo + w).unwrap());
        }
    }

    #[test]
    fn bias_bound_formula() {
        let b = truncation_bias_bound(4.0, 100, 0.5, 0.0).unwrap();
        assert!((b - 1e-6 * 8.0 / 3.0).abs() < 1e-15);
        assert!(truncation_bias_bound(4.0, 100, 0.3, 0.0).is_none());
    }

    #[test]
    fn bias_oracle_examples() {
        let spec = SyntheticSpec::scaled_gaussian(vec![0.0], 4.0);
        let huge = ClipBall::interval(0.0, 1e9).unwrap();
        let est = bias_oracle_1d(&spec, 100, &huge, 100_000, Seed(1)).unwrap();
        assert_eq!(est.bias, 0.0);

        let tight = ClipBall::interval(0.0, 0.05).unwrap();
        let est = bias_oracle_1d(&spec, 100, &tight, 200_000, Seed(2)).unwrap();
        assert!(est.bias <= 3.0 * est.stderr + 1e-12, "{est:?}");

        let half = ClipBall::interval(0.0, 0.5).unwrap();
        let est = bias_oracle_1d(&spec, 100, &half, 1_000_000, Seed(3)).unwrap();
        assert!(est.bias - 3.0 * est.stderr <= est.bound.unwrap(), "{est:?}");
    }

    #[test]
    fn bias_below_bound_on_grid() {
        let specs = [
            SyntheticSpec::scaled_gaussian(vec![0.0], 3.0),
            SyntheticSpec::scaled_gaussian(vec![0.0], 4.0),
            SyntheticSpec::point_mass(vec![0.0], 3.0, 0.02, None),
            SyntheticSpec::point_mass(vec![0.0], 4.0, 0.02, None),
        ];
        let mut checked = 0;
        for (si, spec) in specs.iter().enumerate() {
            let mu = spec.true_mean().unwrap()[0];
            for m in [16usize, 64, 100] {
                let thr = bias_threshold(spec.k, m);
                for gap_mult in [1.01, 1.5, 3.0] {
                    for u in [0.0f64, 0.25, -0.5] {
                        let rho = thr * gap_mult + u.abs();
                        let ball = ClipBall::interval(mu + u, rho).unwrap();
                        let seed = Seed(100 + si as u64).derive(m as u64).derive((gap_mult * 10.0) as u64);
                        let est = bias_oracle_1d(spec, m, &ball, 100_000, seed).unwrap();
                        let bound = est.bound.expect("precondition holds by construction");
                        assert!(est.bias - 3.0 * est.stderr <= bound, "{spec:?} m={m} rho={rho} {est:?}");
                        checked += 1;
                    }
                }
            }
        }
        assert_eq!(checked, 4 * 3 * 3 * 3);
    }

    #[test]
    fn variance_contraction_examples() {
        let spec = SyntheticSpec::scaled_gaussian(vec![0.0], 3.0);
        let huge = ClipBall::interval(0.0, 1e9).unwrap();
        let v = variance_contraction_check(&spec, &huge, 100_000, Seed(1)).unwrap();
        assert_eq!(v.var_x, v.var_trunc);
        let zero = ClipBall::interval(0.3, 0.0).unwrap();
        let v = variance_contraction_check(&spec, &zero, 100_000, Seed(1)).unwrap();
        assert_eq!(v.var_trunc, 0.0);
        let unit = ClipBall::interval(0.0, 1.0).unwrap();
        let v = variance_contraction_check(&spec, &unit, 100_000, Seed(2)).unwrap();
        assert!(v.var_trunc < v.var_x);
        let shifted = ClipBall::interval(0.7, 0.4).unwrap();
        let v = variance_contraction_check(&SyntheticSpec::student_t(vec![0.0], 3.0, 5.0), &shifted, 100_000, Seed(3)).unwrap();
        assert!(v.var_trunc <= v.var_x + 3.0 * v.stderr);
    }
}
