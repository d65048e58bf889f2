//! Closed-form quantities for Laplace noise with rate `gamma`.
//!
//! With `q = 1 − ½e^{−γ}` the auxiliary series is
//!
//! ```text
//! H(0) = γ,   H(j) = H(j−1) + (2^{−j} − q^j) / j,
//! ```
//!
//! which is nonnegative, decreasing and tends to zero. The probability that a
//! class wins after receiving the extra vote on a uniform histogram is
//!
//! ```text
//! P_m = (1−m)/m · 2^{−m} e^{−γ} + e^{γ}(1 − q^m)/m + ½ q^{m−1} − (m−1)/4 · e^{−γ} H(m−2)
//! ```
//!
//! and the worst-case entrywise leakage for `m` classes is `log(m · P_m)`.
//! `k(m) = m · P_m` is concave in `m` with `Δ²k(m) = −½e^{−γ} H(m)` and tends
//! to `e^γ`, which gives the per-query bound `γ`.

use serde::{Deserialize, Serialize};

use crate::rnm::{noise_parameters, LeakageMethod, LeakageReport};
use crate::{Error, NoiseModel, Result};

/// Powers `q^k` with `k` above this are evaluated as `exp(k ln q)`.
const LOG_SPACE_POWER: u64 = 50;

/// Longest tail summation attempted before falling back to forward recursion.
const MAX_TAIL_TERMS: u64 = 5_000_000;

/// Largest series length used by the monotone evaluation of `k(m)`.
const MAX_STABLE_TERMS: u64 = 200_000;

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "gamma must be a positive finite real, got {gamma}"
        )))
    }
}

/// `ln q` with `q = 1 − ½e^{−γ}`.
fn ln_q(gamma: f64) -> f64 {
    (-0.5 * (-gamma).exp()).ln_1p()
}

/// `q^k`.
fn q_pow(gamma: f64, k: u64) -> f64 {
    if k <= LOG_SPACE_POWER {
        (1.0 - 0.5 * (-gamma).exp()).powi(k as i32)
    } else {
        (k as f64 * ln_q(gamma)).exp()
    }
}

/// `(q^k − 2^{−k}) / k`, computed as `q^k (1 − (2q)^{−k}) / k` to avoid
/// cancellation when `γ` is small.
fn series_term(gamma: f64, k: u64) -> f64 {
    let ln_2q = (-(-gamma).exp_m1()).ln_1p();
    q_pow(gamma, k) * -(-(k as f64) * ln_2q).exp_m1() / k as f64
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `Σ_{k>m} (q^k − 2^{−k})/k`, or `None` if it converges too slowly.
fn h_tail(m: u64, gamma: f64) -> Option<f64> {
    let one_minus_q = 0.5 * (-gamma).exp();
    // Geometric convergence at rate q needs roughly 40/(1−q) terms.
    if 40.0 / one_minus_q > MAX_TAIL_TERMS as f64 {
        return None;
    }
    let ratio = (1.0 - one_minus_q) / one_minus_q;
    let mut acc = Compensated::default();
    for k in m + 1..=m + MAX_TAIL_TERMS {
        let term = series_term(gamma, k);
        acc.add(term);
        // Remaining terms are bounded by term · q/(1−q).
        if term * ratio <= 1e-18 * acc.value() || term == 0.0 {
            return Some(acc.value());
        }
    }
    None
}

/// `H(0), …, H(m)`.
///
/// The recursion is run downwards from the tail sum `H(m) = Σ_{k>m} …`, so
/// every entry is a sum of positive terms and stays nonnegative even where
/// `H` is far below rounding level relative to `γ`. When the tail converges
/// too slowly (very large `γ`, where `H` stays of order `γ`) the recursion is
/// run forwards from `H(0) = γ` instead.
pub fn h_series(m: u64, gamma: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    let len = usize::try_from(m).map_err(|_| Error::InvalidParameter("m too large".into()))? + 1;
    let mut h = vec![0.0; len];

    match h_tail(m, gamma) {
        Some(tail) => {
            let mut acc = Compensated::default();
            acc.add(tail);
            h[len - 1] = tail;
            for j in (1..=m).rev() {
                acc.add(series_term(gamma, j));
                h[j as usize - 1] = acc.value();
            }
        }
        None => {
            let mut acc = Compensated::default();
            acc.add(gamma);
            h[0] = gamma;
            for j in 1..=m {
                acc.add(-series_term(gamma, j));
                h[j as usize] = acc.value();
            }
        }
    }
    h[0] = gamma;
    Ok(h)
}

/// Win probability of a class given the extra vote on a uniform known-votes
/// histogram, evaluated term by term from the closed form.
pub fn win_prob_uniform_closed(m: u64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let mf = m as f64;
    let e_neg = (-gamma).exp();
    let q_m = q_pow(gamma, m);
    let one_minus_q_m = if m <= LOG_SPACE_POWER {
        1.0 - q_m
    } else {
        -(mf * ln_q(gamma)).exp_m1()
    };

    let mut p = (1.0 - mf) / mf * (-mf * std::f64::consts::LN_2).exp() * e_neg
        + gamma.exp() * one_minus_q_m / mf
        + 0.5 * q_pow(gamma, m - 1);
    // The H(m−2) term carries the factor (m−1) and vanishes for m = 1.
    if m >= 2 {
        let h = h_series(m - 2, gamma)?;
        p -= (mf - 1.0) / 4.0 * e_neg * h[(m - 2) as usize];
    }
    Ok(p)
}

/// First difference `k(m+1) − k(m)` of `k(m) = m · P_m`, from its closed form
/// `q^m − ½e^{−γ}(2^{−(m−1)} + m H(m−1))`.
pub fn k_first_difference(m: u64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let h = h_series(m - 1, gamma)?;
    let mf = m as f64;
    Ok(q_pow(gamma, m)
        - 0.5 * (-gamma).exp() * ((-(mf - 1.0) * std::f64::consts::LN_2).exp() + mf * h[(m - 1) as usize]))
}

/// Number of series terms after which `Σ_{i>n} Σ_{j≥i} H(j)` is below 1e-18.
fn stable_terms(gamma: f64) -> Option<u64> {
    let one_minus_q = 0.5 * (-gamma).exp();
    let n = ((1e-18f64).ln() + 3.0 * one_minus_q.ln()) / ln_q(gamma);
    (n.is_finite() && n <= MAX_STABLE_TERMS as f64).then(|| (n.ceil() as u64).max(8))
}

/// Worst-case entrywise leakage `log(m · P_m)` over known-votes histograms
/// with `m` classes, attained at the uniform histogram.
///
/// Evaluated as `k(m) = 1 + ½e^{−γ} Σ_{i<m} Σ_{j≥i} H(j)`, a sum of
/// nonnegative terms, so the result is nondecreasing in `m` in floating point
/// as well. For very large `γ` this falls back to the direct closed form.
pub fn leakage_at_vmax(m: u64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let Some(n) = stable_terms(gamma) else {
        return Ok((m as f64 * win_prob_uniform_closed(m, gamma)?).ln());
    };

    let h = h_series(n, gamma)?;
    // suffix[i] = Σ_{j=i}^{n} H(j)
    let mut suffix = vec![0.0; h.len() + 1];
    let mut acc = Compensated::default();
    for i in (0..h.len()).rev() {
        acc.add(h[i]);
        suffix[i] = acc.value();
    }
    // Plain summation: adding a nonnegative term never decreases the total.
    let upto = (m - 1).min(n) as usize;
    let sum: f64 = suffix[1..=upto].iter().sum();
    Ok((0.5 * (-gamma).exp() * sum).ln_1p())
}

/// Per-query bound on the entrywise leakage under Laplace noise: `γ`.
pub fn per_query_bound(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(gamma)
}

/// Bound on the leakage accumulated over `k` answered queries: `kγ`.
pub fn total_bound(k: u64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(k as f64 * gamma)
}

/// Closed-form Laplace quantities for one `(m, γ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticLeakage {
    pub gamma: f64,
    pub m: u64,
    /// `H(0), …, H(m)`.
    pub h_values: Vec<f64>,
    pub win_prob_uniform: f64,
    pub leakage_nats: f64,
    /// `exp(leakage_nats)`.
    pub k_of_m: f64,
}

impl AnalyticLeakage {
    pub fn compute(m: u64, gamma: f64) -> Result<Self> {
        let h_values = h_series(m, gamma)?;
        let win_prob_uniform = win_prob_uniform_closed(m, gamma)?;
        let leakage_nats = leakage_at_vmax(m, gamma)?;
        Ok(Self {
            gamma,
            m,
            h_values,
            win_prob_uniform,
            leakage_nats,
            k_of_m: leakage_nats.exp(),
        })
    }

    pub fn report(&self) -> Result<LeakageReport> {
        let mut parameters = noise_parameters(&NoiseModel::laplace(self.gamma)?);
        parameters.insert("m".into(), self.m.into());
        Ok(LeakageReport {
            value_nats: self.leakage_nats,
            method: LeakageMethod::ClosedForm,
            per_class_win_probs: vec![self.win_prob_uniform; self.m as usize],
            error_estimate: 0.0,
            parameters,
        })
    }
}
