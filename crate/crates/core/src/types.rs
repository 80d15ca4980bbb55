//! Domain types shared by every estimator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// 64-bit seed. All randomness in the crate is derived from one of these.
///
/// Derivation: `derive(tag)` mixes the tag into the seed with SplitMix64,
/// `child(label)` does the same with the FNV-1a hash of a label. A seed is
/// turned into a generator with [`Seed::rng`] (ChaCha8, stream 0) or
/// [`Seed::stream`] (ChaCha8, stream `i`). Synthetic datasets use
/// `seed.child("dataset").stream(person)` and draw the samples of that person
/// in order, so sample `j` of person `i` only depends on `(seed, i, j)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over raw bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Seed {
    pub fn derive(self, tag: u64) -> Seed {
        Seed(splitmix64(splitmix64(self.0) ^ splitmix64(tag.rotate_left(29) ^ 0x5DEE_CE66)))
    }

    pub fn child(self, label: &str) -> Seed {
        self.derive(fnv1a(label.as_bytes()))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    pub fn stream(self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(stream);
        rng
    }
}

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}

/// n people, each holding m samples in R^d. Stored person-major:
/// `values[(i * m + j) * d + c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PersonDataset {
    n: usize,
    m: usize,
    d: usize,
    values: Vec<f64>,
}

impl PersonDataset {
    pub fn new(n: usize, m: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 || d == 0 {
            return Err(invalid(format!("dataset shape must be positive, got n={n} m={m} d={d}")));
        }
        if values.len() != n * m * d {
            return Err(invalid(format!("dataset has {} values, expected n*m*d = {}", values.len(), n * m * d)));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at flat index {pos}")));
        }
        Ok(Self { n, m, d, values })
    }

    /// Every sample of every person equals `point`.
    pub fn constant(n: usize, m: usize, point: &[f64]) -> Result<Self> {
        let values = point.iter().copied().cycle().take(n * m * point.len()).collect();
        Self::new(n, m, point.len(), values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The m×d block of person `i`.
    pub fn person(&self, i: usize) -> &[f64] {
        let w = self.m * self.d;
        &self.values[i * w..(i + 1) * w]
    }

    pub fn sample(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.m + j) * self.d;
        &self.values[start..start + self.d]
    }

    /// Per-person averages S_i = (1/m) Σ_j X_j^(i), flattened n×d.
    pub fn person_means(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.d];
        let inv = 1.0 / self.m as f64;
        for (i, row) in out.chunks_exact_mut(self.d).enumerate() {
            for s in self.person(i).chunks_exact(self.d) {
                for (acc, v) in row.iter_mut().zip(s) {
                    *acc += v;
                }
            }
            row.iter_mut().for_each(|v| *v *= inv);
        }
        out
    }

    /// Mean over all n·m samples.
    pub fn grand_mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for s in self.values.chunks_exact(self.d) {
            for (acc, v) in out.iter_mut().zip(s) {
                *acc += v;
            }
        }
        let total = (self.n * self.m) as f64;
        out.iter_mut().for_each(|v| *v /= total);
        out
    }

    /// Univariate dataset holding coordinate `c` only.
    pub fn coordinate(&self, c: usize) -> PersonDataset {
        assert!(c < self.d, "coordinate {c} out of range for d={}", self.d);
        let values = self.values.iter().skip(c).step_by(self.d).copied().collect();
        PersonDataset { n: self.n, m: self.m, d: 1, values }
    }

    /// People `start..end` as a new dataset.
    pub fn people(&self, start: usize, end: usize) -> Result<PersonDataset> {
        if start >= end || end > self.n {
            return Err(invalid(format!("bad person range {start}..{end} for n={}", self.n)));
        }
        let w = self.m * self.d;
        Ok(PersonDataset { n: end - start, m: self.m, d: self.d, values: self.values[start * w..end * w].to_vec() })
    }

    /// Dataset with every sample translated by `-offset`.
    pub fn recentered(&self, offset: &[f64]) -> Result<PersonDataset> {
        if offset.len() != self.d {
            return Err(invalid("offset dimension does not match dataset"));
        }
        let values = self.values.chunks_exact(self.d).flat_map(|s| s.iter().zip(offset).map(|(v, o)| v - o)).collect();
        PersonDataset::new(self.n, self.m, self.d, values)
    }

    /// Neighbouring dataset: person `i` replaced by `batch` (m×d values).
    pub fn with_person_replaced(&self, i: usize, batch: &[f64]) -> Result<PersonDataset> {
        let w = self.m * self.d;
        if i >= self.n || batch.len() != w {
            return Err(invalid("replacement batch has the wrong shape"));
        }
        if batch.iter().any(|v| !v.is_finite()) {
            return Err(invalid("replacement batch has non-finite values"));
        }
        let mut values = self.values.clone();
        values[i * w..(i + 1) * w].copy_from_slice(batch);
        Ok(PersonDataset { n: self.n, m: self.m, d: self.d, values })
    }
}

/// (ε, δ). ε = +∞ is accepted and means "no noise"; it is only useful in tests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(invalid(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(invalid(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }

    /// Both components multiplied by `f` (0 < f ≤ 1).
    pub fn scaled(&self, f: f64) -> PrivacyBudget {
        PrivacyBudget { epsilon: self.epsilon * f, delta: self.delta * f }
    }
}

/// Problem constants: moment order k, accuracy α, failure probability β and
/// the a-priori bound R on the mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "range_R", alias = "range_r")]
    pub range_r: f64,
}

impl ProblemParams {
    pub fn new(k: f64, alpha: f64, beta: f64, range_r: f64) -> Result<Self> {
        let p = Self { k, alpha, beta, range_r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 2.0) || !self.k.is_finite() {
            return Err(invalid(format!("moment order k must be > 2, got {}", self.k)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(invalid(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.range_r > 0.0) || !self.range_r.is_finite() {
            return Err(invalid(format!("range R must be > 0, got {}", self.range_r)));
        }
        Ok(())
    }
}

/// Ball of radius `radius` around `center`. In one dimension this is the
/// interval [center − radius, center + radius].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl ClipBall {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if radius.is_nan() || radius < 0.0 {
            return Err(invalid(format!("clip radius must be >= 0, got {radius}")));
        }
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("clip center must be a non-empty finite vector"));
        }
        Ok(Self { center, radius })
    }

    pub fn interval(center: f64, radius: f64) -> Result<Self> {
        Self::new(vec![center], radius)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
