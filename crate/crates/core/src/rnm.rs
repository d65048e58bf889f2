//! Report-Noisy-Max: win probabilities and entrywise leakage.
//!
//! For a histogram `v` and i.i.d. noise with density `g` and CDF `G`, class
//! `j` wins with probability
//!
//! ```text
//! P(j | v) = ∫ g(t) · Π_{l≠j} G(v_j − v_l + t) dt
//! ```
//!
//! and the leakage about the one unknown vote, given the known votes `v⁻`, is
//! `log Σ_j P(j | v⁻ + δ_j)`.

use std::collections::{BTreeMap, HashMap};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::noise::{NoiseModel, TAIL_MASS};
use crate::quadrature::{self, Integral};
use crate::{Error, Result};

/// Default absolute tolerance per win probability.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Smallest tolerance accepted; below this the truncated tails dominate.
pub const MIN_TOL: f64 = 1e-12;

/// Per-class vote counts for one query. Counts are nonnegative reals so that
/// relaxed (fractional) histograms can be analysed as well as integer ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct VoteHistogram(Vec<f64>);

impl VoteHistogram {
    pub fn new(counts: Vec<f64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidInput("histogram needs at least one class".into()));
        }
        if let Some(bad) = counts.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "histogram counts must be finite and nonnegative, got {bad}"
            )));
        }
        Ok(Self(counts))
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        Self::new(counts.iter().map(|&c| c as f64).collect())
    }

    pub fn counts(&self) -> &[f64] {
        &self.0
    }

    /// Number of classes `m`.
    pub fn classes(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `v + δ_j`: one extra vote for class `j`.
    pub fn with_vote(&self, j: usize) -> Result<Self> {
        self.check_class(j)?;
        let mut counts = self.0.clone();
        counts[j] += 1.0;
        Ok(Self(counts))
    }

    /// `v − δ_j`: removes one vote from class `j`.
    pub fn without_vote(&self, j: usize) -> Result<Self> {
        self.check_class(j)?;
        if self.0[j] < 1.0 {
            return Err(Error::InvalidInput(format!(
                "class {j} has {} votes, cannot remove one",
                self.0[j]
            )));
        }
        let mut counts = self.0.clone();
        counts[j] -= 1.0;
        Ok(Self(counts))
    }

    /// Reorders classes so that class `i` of the result is class `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let m = self.classes();
        let mut seen = vec![false; m];
        if perm.len() != m || perm.iter().any(|&p| p >= m || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidInput("not a permutation of the classes".into()));
        }
        Ok(Self(perm.iter().map(|&p| self.0[p]).collect()))
    }

    fn check_class(&self, j: usize) -> Result<()> {
        if j < self.classes() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "class index {j} out of range for {} classes",
                self.classes()
            )))
        }
    }
}

impl TryFrom<Vec<f64>> for VoteHistogram {
    type Error = Error;

    fn try_from(counts: Vec<f64>) -> Result<Self> {
        Self::new(counts)
    }
}

impl From<VoteHistogram> for Vec<f64> {
    fn from(v: VoteHistogram) -> Self {
        v.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakageMethod {
    Quadrature,
    ClosedForm,
    MonteCarlo,
    Bound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(u64),
    Real(f64),
    Text(String),
}

impl From<f64> for ParamValue {
    fn from(x: f64) -> Self {
        ParamValue::Real(x)
    }
}

impl From<u64> for ParamValue {
    fn from(x: u64) -> Self {
        ParamValue::Int(x)
    }
}

impl From<usize> for ParamValue {
    fn from(x: usize) -> Self {
        ParamValue::Int(x as u64)
    }
}

impl From<&str> for ParamValue {
    fn from(s: &str) -> Self {
        ParamValue::Text(s.to_owned())
    }
}

/// A leakage value in nats together with how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub value_nats: f64,
    pub method: LeakageMethod,
    /// `P(j | v⁻ + δ_j)` for each class `j`.
    pub per_class_win_probs: Vec<f64>,
    /// Absolute error bound on `Σ_j per_class_win_probs[j]`. Since that sum
    /// is at least one, it also bounds the error of `value_nats`.
    pub error_estimate: f64,
    pub parameters: BTreeMap<String, ParamValue>,
}

pub(crate) fn noise_parameters(noise: &NoiseModel) -> BTreeMap<String, ParamValue> {
    let mut p = BTreeMap::new();
    p.insert("noise".into(), ParamValue::Text(format!("{:?}", noise.kind()).to_lowercase()));
    match noise.gamma() {
        Some(g) => p.insert("gamma".into(), g.into()),
        None => p.insert("scale".into(), noise.scale().into()),
    };
    p
}

/// Probability that class `j` is the noisy argmax of `v`.
///
/// The integral is split at every point where the noise or one of the CDF
/// factors has a kink and truncated to the central `1 − 2·TAIL_MASS` of the
/// noise; the returned error includes the truncated mass.
pub fn win_probability(v: &VoteHistogram, j: usize, noise: &NoiseModel, tol: f64) -> Result<Integral> {
    v.check_class(j)?;
    check_tol(tol)?;

    // Factors G(d + t) grouped by distinct offset d = v_j − v_l.
    let mut offsets: Vec<f64> = v
        .counts()
        .iter()
        .enumerate()
        .filter(|&(l, _)| l != j)
        .map(|(_, &vl)| v.counts()[j] - vl)
        .collect();
    offsets.sort_by(f64::total_cmp);
    let mut factors: Vec<(f64, i32)> = Vec::new();
    for d in offsets {
        match factors.last_mut() {
            Some((prev, k)) if *prev == d => *k += 1,
            _ => factors.push((d, 1)),
        }
    }

    let mut breakpoints = Vec::with_capacity(noise.kinks().len() * (factors.len() + 1));
    for &k in noise.kinks() {
        breakpoints.push(k);
        breakpoints.extend(factors.iter().map(|&(d, _)| k - d));
    }

    let integrand = |t: f64| {
        let mut acc = noise.density(t);
        for &(d, k) in &factors {
            if acc == 0.0 {
                break;
            }
            acc *= noise.cumulative(d + t).powi(k);
        }
        acc
    };

    let (lo, hi) = noise.truncation();
    let quad_tol = tol - 2.0 * TAIL_MASS;
    let mut r = quadrature::integrate(integrand, lo, hi, &breakpoints, quad_tol)?;
    r.value = r.value.clamp(0.0, 1.0);
    r.error += 2.0 * TAIL_MASS;
    Ok(r)
}

fn check_tol(tol: f64) -> Result<()> {
    if tol.is_finite() && tol >= MIN_TOL {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "tolerance must be at least {MIN_TOL:e}, got {tol}"
        )))
    }
}

/// Entrywise leakage `log Σ_j P(j | v⁻ + δ_j)` in nats.
pub fn entrywise_leakage(v_minus: &VoteHistogram, noise: &NoiseModel, tol: f64) -> Result<LeakageReport> {
    check_tol(tol)?;
    let m = v_minus.classes();

    // Classes with identical known counts are exchangeable.
    let mut cache: HashMap<u64, Integral> = HashMap::new();
    let mut probs = Vec::with_capacity(m);
    let mut error = 0.0;
    for j in 0..m {
        let key = v_minus.counts()[j].to_bits();
        let r = match cache.get(&key) {
            Some(r) => *r,
            None => {
                let r = win_probability(&v_minus.with_vote(j)?, j, noise, tol)?;
                cache.insert(key, r);
                r
            }
        };
        probs.push(r.value);
        error += r.error;
    }

    let sum: f64 = probs.iter().sum();
    // The exact sum lies in [1, m]; rounding may push it slightly outside.
    let value = sum.clamp(1.0, m as f64).ln();

    let mut parameters = noise_parameters(noise);
    parameters.insert("m".into(), m.into());
    parameters.insert("tolerance".into(), tol.into());
    Ok(LeakageReport {
        value_nats: value,
        method: LeakageMethod::Quadrature,
        per_class_win_probs: probs,
        error_estimate: error,
        parameters,
    })
}

/// One draw of the mechanism using the supplied generator. Ties go to the
/// lowest class index.
pub fn noisy_argmax_with_rng<R: RngCore + ?Sized>(v: &VoteHistogram, noise: &NoiseModel, rng: &mut R) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (l, &c) in v.counts().iter().enumerate() {
        let x = c + noise.sample(rng);
        if x > best_value {
            best = l;
            best_value = x;
        }
    }
    best
}

/// One draw of the mechanism, deterministic in `seed`.
pub fn noisy_argmax_sample(v: &VoteHistogram, noise: &NoiseModel, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    noisy_argmax_with_rng(v, noise, &mut rng)
}
