//! Synthetic heavy-tailed generators and empirical moment checks.
//!
//! Three families, all normalised so that every one-dimensional projection of
//! the centred distribution has k-th absolute moment at most one:
//!
//! * `scaled_gaussian`: N(mean, I/σ_k²) with σ_k = E|Z|^k^{1/k}.
//! * `point_mass_mixture`: `mean` with probability 1−λ, `mean + a·v` with
//!   probability λ, where λ = 25·α^{k/(k−1)} and a = 1/(6·α^{1/(k−1)}).
//!   Here `mean` is the location of the zero atom; see [`SyntheticSpec::true_mean`].
//! * `student_t`: elliptical multivariate t with `dof` degrees of freedom,
//!   rescaled so that projections have unit k-th moment.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{DpError, Result};
use crate::types::{PersonDataset, Seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ScaledGaussian,
    PointMassMixture,
    StudentT,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::ScaledGaussian => "scaled_gaussian",
            Family::PointMassMixture => "point_mass_mixture",
            Family::StudentT => "student_t",
        }
    }
}

/// Family-specific parameters (`extra` in JSON).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    /// Point mass: accuracy parameter α; λ and the atom are derived from it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Point mass: mixing weight λ, an alternative to `alpha`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Point mass: direction v (normalised internally). Defaults to e_1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    /// Student t: degrees of freedom, must exceed k.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dof: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub family: Family,
    pub mean: Vec<f64>,
    pub k: f64,
    #[serde(default)]
    pub extra: FamilyParams,
}

/// E|Z|^k for standard normal Z.
pub fn gaussian_abs_moment(k: f64) -> f64 {
    (0.5 * k * 2f64.ln() + ln_gamma((k + 1.0) / 2.0) - 0.5 * PI.ln()).exp()
}

/// σ_k = (E|Z|^k)^{1/k}.
pub fn sigma_k(k: f64) -> f64 {
    gaussian_abs_moment(k).powf(1.0 / k)
}

/// E|T|^k for a Student t variable with ν > k degrees of freedom.
pub fn student_abs_moment(k: f64, nu: f64) -> f64 {
    (0.5 * k * nu.ln() + ln_gamma((k + 1.0) / 2.0) + ln_gamma((nu - k) / 2.0) - 0.5 * PI.ln() - ln_gamma(nu / 2.0)).exp()
}

/// λ = 25·α^{k/(k−1)}.
pub fn point_mass_lambda(alpha: f64, k: f64) -> f64 {
    25.0 * alpha.powf(k / (k - 1.0))
}

/// a = 1/(6·α^{1/(k−1)}).
pub fn point_mass_atom(alpha: f64, k: f64) -> f64 {
    1.0 / (6.0 * alpha.powf(1.0 / (k - 1.0)))
}

/// Resolved sampling parameters, cheap to copy into hot loops.
#[derive(Clone, Debug)]
enum Sampler {
    Gaussian { scale: f64 },
    PointMass { lambda: f64, atom: f64, dir: Vec<f64> },
    StudentT { scale: f64, chi: ChiSquared<f64>, nu: f64 },
}

impl SyntheticSpec {
    pub fn scaled_gaussian(mean: Vec<f64>, k: f64) -> Self {
        Self { family: Family::ScaledGaussian, mean, k, extra: FamilyParams::default() }
    }

    pub fn point_mass(location: Vec<f64>, k: f64, alpha: f64, direction: Option<Vec<f64>>) -> Self {
        Self {
            family: Family::PointMassMixture,
            mean: location,
            k,
            extra: FamilyParams { alpha: Some(alpha), direction, ..Default::default() },
        }
    }

    pub fn student_t(mean: Vec<f64>, k: f64, dof: f64) -> Self {
        Self { family: Family::StudentT, mean, k, extra: FamilyParams { dof: Some(dof), ..Default::default() } }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Same family with the mean (and point-mass direction) truncated or
    /// zero-padded to `d` coordinates.
    pub fn with_dimension(&self, d: usize) -> Self {
        let resize = |v: &[f64]| {
            let mut out = v.to_vec();
            out.resize(d, 0.0);
            out
        };
        let mut spec = self.clone();
        spec.mean = resize(&self.mean);
        if let Some(dir) = &self.extra.direction {
            let mut dir = resize(dir);
            if dir.iter().all(|x| *x == 0.0) {
                dir[0] = 1.0;
            }
            spec.extra.direction = Some(dir);
        }
        spec
    }

    pub fn with_k(&self, k: f64) -> Self {
        let mut spec = self.clone();
        spec.k = k;
        spec
    }

    fn point_mass_params(&self) -> Result<(f64, f64)> {
        let k = self.k;
        match (self.extra.alpha, self.extra.lambda) {
            (Some(a), _) => {
                if !(a >= 0.0) || !a.is_finite() {
                    return Err(DpError::Config(format!("point mass alpha must be >= 0, got {a}")));
                }
                let lambda = point_mass_lambda(a, k);
                let atom = if a == 0.0 { 0.0 } else { point_mass_atom(a, k) };
                Ok((lambda, atom))
            }
            (None, Some(l)) => {
                if !(l >= 0.0) {
                    return Err(DpError::Config(format!("point mass lambda must be >= 0, got {l}")));
                }
                let a = (l / 25.0).powf((k - 1.0) / k);
                let atom = if a == 0.0 { 0.0 } else { point_mass_atom(a, k) };
                Ok((l, atom))
            }
            (None, None) => Err(DpError::Config("point_mass_mixture needs extra.alpha or extra.lambda".into())),
        }
    }

    /// λ and atom length for the point-mass family.
    pub fn lambda_and_atom(&self) -> Result<(f64, f64)> {
        if self.family != Family::PointMassMixture {
            return Err(DpError::Config("lambda is only defined for point_mass_mixture".into()));
        }
        self.point_mass_params()
    }

    fn unit_direction(&self) -> Result<Vec<f64>> {
        let d = self.dim();
        let dir = match &self.extra.direction {
            Some(v) => v.clone(),
            None => {
                let mut v = vec![0.0; d];
                v[0] = 1.0;
                v
            }
        };
        if dir.len() != d {
            return Err(DpError::Config(format!("point mass direction has length {}, mean has length {d}", dir.len())));
        }
        let norm = crate::types::l2_norm(&dir);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(DpError::Config("point mass direction must be a non-zero finite vector".into()));
        }
        Ok(dir.iter().map(|x| x / norm).collect())
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler().map(|_| ())
    }

    fn sampler(&self) -> Result<Sampler> {
        if self.mean.is_empty() || self.mean.iter().any(|x| !x.is_finite()) {
            return Err(DpError::Config("mean must be a non-empty finite vector".into()));
        }
        if !(self.k > 2.0) || !self.k.is_finite() {
            return Err(DpError::Config(format!("moment order k must be > 2, got {}", self.k)));
        }
        match self.family {
            Family::ScaledGaussian => Ok(Sampler::Gaussian { scale: 1.0 / sigma_k(self.k) }),
            Family::PointMassMixture => {
                let (lambda, atom) = self.point_mass_params()?;
                if lambda > 1.0 {
                    return Err(DpError::Config(format!(
                        "point mass weight lambda = {lambda:.4} exceeds 1; alpha is too large for k = {}",
                        self.k
                    )));
                }
                Ok(Sampler::PointMass { lambda, atom, dir: self.unit_direction()? })
            }
            Family::StudentT => {
                let nu = self.extra.dof.ok_or_else(|| DpError::Config("student_t needs extra.dof".into()))?;
                if !(nu > self.k) || !nu.is_finite() {
                    return Err(DpError::Config(format!("student_t degrees of freedom must exceed k = {}, got {nu}", self.k)));
                }
                let scale = student_abs_moment(self.k, nu).powf(-1.0 / self.k);
                let chi = ChiSquared::new(nu).map_err(|e| DpError::Config(e.to_string()))?;
                Ok(Sampler::StudentT { scale, chi, nu })
            }
        }
    }

    /// The mean of the distribution. Differs from `mean` only for the point
    /// mass, where it is `mean + λ·a·v`.
    pub fn true_mean(&self) -> Result<Vec<f64>> {
        match self.sampler()? {
            Sampler::PointMass { lambda, atom, dir } => Ok(self.mean.iter().zip(&dir).map(|(m, v)| m + lambda * atom * v).collect()),
            _ => Ok(self.mean.clone()),
        }
    }

    /// A reusable sampler for hot loops.
    pub fn generator(&self) -> Result<Generator> {
        Ok(Generator { mean: self.mean.clone(), sampler: self.sampler()? })
    }
}

/// Validated sampler for a [`SyntheticSpec`].
#[derive(Clone, Debug)]
pub struct Generator {
    mean: Vec<f64>,
    sampler: Sampler,
}

impl Generator {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// One draw written into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.sampler {
            Sampler::Gaussian { scale } => {
                for (o, mu) in out.iter_mut().zip(&self.mean) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = mu + scale * z;
                }
            }
            Sampler::PointMass { lambda, atom, dir } => {
                let hit = rng.random::<f64>() < *lambda;
                for ((o, mu), v) in out.iter_mut().zip(&self.mean).zip(dir) {
                    *o = if hit { mu + atom * v } else { *mu };
                }
            }
            Sampler::StudentT { scale, chi, nu } => {
                let w: f64 = chi.sample(rng);
                let f = scale * (nu / w).sqrt();
                for (o, mu) in out.iter_mut().zip(&self.mean) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = mu + f * z;
                }
            }
        }
    }

    /// The average of `m` i.i.d. draws, by direct summation.
    pub fn sample_mean_by_sum<R: Rng + ?Sized>(&self, rng: &mut R, m: usize, out: &mut [f64]) {
        let mut buf = vec![0.0; self.dim()];
        out.iter_mut().for_each(|o| *o = 0.0);
        for _ in 0..m {
            self.sample_into(rng, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b;
            }
        }
        out.iter_mut().for_each(|o| *o /= m as f64);
    }

    /// The average of `m` i.i.d. draws. Exact in distribution; uses the
    /// closed-form law of the average where one exists (Gaussian: N(μ, s²/m);
    /// point mass: Binomial(m, λ) atom count) and direct summation otherwise.
    pub fn sample_mean_into<R: Rng + ?Sized>(&self, rng: &mut R, m: usize, out: &mut [f64]) {
        match &self.sampler {
            Sampler::Gaussian { scale } => {
                let s = scale / (m as f64).sqrt();
                for (o, mu) in out.iter_mut().zip(&self.mean) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = mu + s * z;
                }
            }
            Sampler::PointMass { lambda, atom, dir } => {
                let count = Binomial::new(m as u64, *lambda).expect("lambda validated").sample(rng);
                let frac = count as f64 / m as f64;
                for ((o, mu), v) in out.iter_mut().zip(&self.mean).zip(dir) {
                    *o = mu + atom * v * frac;
                }
            }
            Sampler::StudentT { .. } => self.sample_mean_by_sum(rng, m, out),
        }
    }
}

/// n×m×d dataset of i.i.d. draws. Person `i` draws from
/// `seed.child("dataset").stream(i)`.
pub fn sample_dataset(spec: &SyntheticSpec, n: usize, m: usize, seed: Seed) -> Result<PersonDataset> {
    if n == 0 || m == 0 {
        return Err(DpError::InvalidParameter(format!("n and m must be >= 1, got n={n} m={m}")));
    }
    let generator = spec.generator()?;
    let d = generator.dim();
    let base = seed.child("dataset");
    let mut values = vec![0.0; n * m * d];
    values.par_chunks_mut(m * d).enumerate().for_each(|(i, block)| {
        let mut rng = base.stream(i as u64);
        for s in block.chunks_exact_mut(d) {
            generator.sample_into(&mut rng, s);
        }
    });
    PersonDataset::new(n, m, d, values)
}

/// Fixed direction grid for moment checks: one direction for d = 1, otherwise
/// the coordinate axes plus 64 quasi-uniform unit vectors (half circle for
/// d = 2, Fibonacci sphere for d = 3, seeded Gaussian directions above).
pub fn direction_grid(d: usize) -> Vec<Vec<f64>> {
    if d == 1 {
        return vec![vec![1.0]];
    }
    let mut dirs: Vec<Vec<f64>> = (0..d)
        .map(|c| {
            let mut v = vec![0.0; d];
            v[c] = 1.0;
            v
        })
        .collect();
    const N: usize = 64;
    match d {
        2 => {
            for j in 0..N {
                let th = PI * (j as f64 + 0.5) / N as f64;
                dirs.push(vec![th.cos(), th.sin()]);
            }
        }
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            for j in 0..N {
                let y = 1.0 - 2.0 * (j as f64 + 0.5) / N as f64;
                let r = (1.0 - y * y).sqrt();
                let th = golden * j as f64;
                dirs.push(vec![r * th.cos(), y, r * th.sin()]);
            }
        }
        _ => {
            let mut rng = Seed(0x5EED_D1EC).rng();
            for _ in 0..N {
                let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = crate::types::l2_norm(&v);
                dirs.push(v.iter().map(|x| x / norm).collect());
            }
        }
    }
    dirs
}

fn projected_moment(draw: &mut dyn FnMut(&mut ChaCha8Rng, &mut [f64]), center: &[f64], k: f64, trials: usize, seed: Seed) -> f64 {
    let d = center.len();
    let dirs = direction_grid(d);
    let mut acc = vec![0.0; dirs.len()];
    let mut rng = seed.rng();
    let mut x = vec![0.0; d];
    for _ in 0..trials {
        draw(&mut rng, &mut x);
        for (a, v) in acc.iter_mut().zip(&dirs) {
            let p: f64 = x.iter().zip(center).zip(v).map(|((xi, ci), vi)| (xi - ci) * vi).sum();
            *a += p.abs().powf(k);
        }
    }
    acc.iter().map(|a| (a / trials as f64).powf(1.0 / k)).fold(0.0, f64::max)
}

/// Monte Carlo estimate of max over the direction grid of E[|⟨X−μ,v⟩|^k]^{1/k}.
pub fn check_moment(spec: &SyntheticSpec, k: f64, trials: usize, seed: Seed) -> Result<f64> {
    if trials < 10_000 {
        return Err(DpError::InvalidParameter(format!("check_moment needs >= 10^4 trials, got {trials}")));
    }
    let generator = spec.generator()?;
    let mu = spec.true_mean()?;
    let mut draw = |rng: &mut ChaCha8Rng, x: &mut [f64]| generator.sample_into(rng, x);
    Ok(projected_moment(&mut draw, &mu, k, trials, seed))
}

/// Same as [`check_moment`] for the average of `m` draws (computed by summation).
pub fn check_moment_of_average(spec: &SyntheticSpec, k: f64, m: usize, trials: usize, seed: Seed) -> Result<f64> {
    let generator = spec.generator()?;
    let mu = spec.true_mean()?;
    let mut draw = |rng: &mut ChaCha8Rng, x: &mut [f64]| generator.sample_mean_by_sum(rng, m, x);
    Ok(projected_moment(&mut draw, &mu, k, trials, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_k_matches_known_values() {
        assert!((sigma_k(2.0) - 1.0).abs() < 1e-12);
        // E|Z|^4 = 3
        assert!((gaussian_abs_moment(4.0) - 3.0).abs() < 1e-10);
        // E|Z|^3 = 2·sqrt(2/π)
        assert!((gaussian_abs_moment(3.0) - 2.0 * (2.0 / PI).sqrt()).abs() < 1e-10);
        // t with ν=5: E T^4 = 3ν²/((ν−2)(ν−4)) = 25
        assert!((student_abs_moment(4.0, 5.0) - 25.0).abs() < 1e-9);
    }

    #[test]
    fn point_mass_closed_forms() {
        let spec = SyntheticSpec::point_mass(vec![0.0], 3.0, 0.02, None);
        let (lambda, atom) = spec.lambda_and_atom().unwrap();
        assert!((lambda - 0.070_710_678_118_654_75).abs() < 1e-12);
        assert!((atom - 1.178_511_301_977_579_3).abs() < 1e-12);
        assert!((spec.true_mean().unwrap()[0] - 0.083_333_333_333_333_33).abs() < 1e-12);
    }

    #[test]
    fn point_mass_rejects_lambda_above_one() {
        let spec = SyntheticSpec::point_mass(vec![0.0], 3.0, 0.2, None);
        let err = sample_dataset(&spec, 2, 2, Seed(1)).unwrap_err();
        assert!(matches!(err, DpError::Config(_)), "{err}");
    }

    #[test]
    fn student_t_requires_dof_above_k() {
        let spec = SyntheticSpec::student_t(vec![0.0], 4.0, 4.0);
        assert!(matches!(sample_dataset(&spec, 1, 1, Seed(1)), Err(DpError::Config(_))));
        let spec = SyntheticSpec::student_t(vec![0.0], 4.0, 6.0);
        assert!(sample_dataset(&spec, 1, 1, Seed(1)).is_ok());
    }

    #[test]
    fn dataset_is_deterministic() {
        let spec = SyntheticSpec::scaled_gaussian(vec![0.0], 4.0);
        let a = sample_dataset(&spec, 2, 3, Seed(7)).unwrap();
        let b = sample_dataset(&spec, 2, 3, Seed(7)).unwrap();
        let c = sample_dataset(&spec, 2, 3, Seed(8)).unwrap();
        assert_eq!((a.n(), a.m(), a.d()), (2, 3, 1));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn person_streams_do_not_depend_on_n() {
        let spec = SyntheticSpec::scaled_gaussian(vec![0.0, 1.0], 3.0);
        let small = sample_dataset(&spec, 3, 4, Seed(11)).unwrap();
        let big = sample_dataset(&spec, 10, 4, Seed(11)).unwrap();
        assert_eq!(small.values(), &big.values()[..small.values().len()]);
    }

    #[test]
    fn point_mass_monte_carlo_mean() {
        let spec = SyntheticSpec::point_mass(vec![0.0], 3.0, 0.02, None);
        let g = spec.generator().unwrap();
        let mut rng = Seed(3).rng();
        let trials = 1_000_000;
        let mut x = [0.0];
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..trials {
            g.sample_into(&mut rng, &mut x);
            assert!(x[0] == 0.0 || (x[0] - 1.178_511_301_977_579_3).abs() < 1e-12);
            sum += x[0];
            sum2 += x[0] * x[0];
        }
        let mean = sum / trials as f64;
        let se = ((sum2 / trials as f64 - mean * mean) / trials as f64).sqrt();
        assert!((mean - 0.083_333_333).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn check_moment_examples() {
        let g2 = SyntheticSpec { k: 2.000_000_1, ..SyntheticSpec::scaled_gaussian(vec![0.0], 3.0) };
        let v = check_moment(&g2, 2.0, 200_000, Seed(1)).unwrap();
        assert!((v - 1.0).abs() < 0.01, "{v}");

        let pm = SyntheticSpec::point_mass(vec![0.0], 3.0, 0.02, None);
        assert!(check_moment(&pm, 3.0, 100_000, Seed(2)).unwrap() <= 1.0);

        let degenerate = SyntheticSpec::point_mass(vec![0.5, -0.5], 3.0, 0.0, None);
        assert_eq!(check_moment(&degenerate, 3.0, 10_000, Seed(3)).unwrap(), 0.0);

        assert!(check_moment(&pm, 3.0, 100, Seed(2)).is_err());
    }

    #[test]
    fn direction_grid_is_unit() {
        for d in 1..6 {
            let g = direction_grid(d);
            assert_eq!(g.len(), if d == 1 { 1 } else { d + 64 });
            for v in g {
                assert!((crate::types::l2_norm(&v) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let text = r#"{"family":"point_mass_mixture","mean":[0.0],"k":3,"extra":{"alpha":0.02,"direction":[1.0]}}"#;
        let spec: SyntheticSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.family, Family::PointMassMixture);
        let back: SyntheticSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(spec, back);
        let g: SyntheticSpec = serde_json::from_str(r#"{"family":"scaled_gaussian","mean":[0.3],"k":4}"#).unwrap();
        assert!(g.validate().is_ok());
    }

    #[test]
    fn lambda_parameterisation_agrees_with_alpha() {
        let by_alpha = SyntheticSpec::point_mass(vec![0.0], 4.0, 0.02, None);
        let (l, a) = by_alpha.lambda_and_atom().unwrap();
        let mut by_lambda = by_alpha.clone();
        by_lambda.extra.alpha = None;
        by_lambda.extra.lambda = Some(l);
        let (l2, a2) = by_lambda.lambda_and_atom().unwrap();
        assert!((l - l2).abs() < 1e-12 && (a - a2).abs() < 1e-9);
    }
}
