//! Majorization order on histograms and the extremal histograms for
//! Schur-concave leakage.
//!
//! `p ≻ q` when, after sorting both in descending order, every prefix sum of
//! `p` is at least the matching prefix sum of `q` and the totals agree.

use serde::{Deserialize, Serialize};

use crate::rnm::{entrywise_leakage, LeakageReport, VoteHistogram};
use crate::{Error, NoiseModel, Result};

/// Slack for prefix-sum and total comparisons.
pub const SLACK: f64 = 1e-9;

/// Default cap on the number of histograms [`enumerate_histograms`] will build.
pub const DEFAULT_ENUMERATION_CAP: u128 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    PMajorizesQ,
    QMajorizesP,
    Equal,
    Incomparable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorizationVerdict {
    pub relation: Relation,
    /// Prefix sums of `p` sorted descending.
    pub prefix_sums_p: Vec<f64>,
    pub prefix_sums_q: Vec<f64>,
}

impl MajorizationVerdict {
    /// `p ≻ q`, counting equality.
    pub fn p_majorizes_q(&self) -> bool {
        matches!(self.relation, Relation::PMajorizesQ | Relation::Equal)
    }

    pub fn q_majorizes_p(&self) -> bool {
        matches!(self.relation, Relation::QMajorizesP | Relation::Equal)
    }
}

fn sorted_desc(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn prefix_sums(x: &[f64]) -> Vec<f64> {
    x.iter()
        .scan(0.0, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Compares two vectors of equal length under majorization.
pub fn compare(p: &[f64], q: &[f64]) -> Result<MajorizationVerdict> {
    if p.len() != q.len() {
        return Err(Error::InvalidInput(format!(
            "cannot compare vectors of lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    if p.is_empty() {
        return Err(Error::InvalidInput("vectors must be nonempty".into()));
    }
    if p.iter().chain(q).any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("entries must be finite".into()));
    }

    let ps = sorted_desc(p);
    let qs = sorted_desc(q);
    let prefix_sums_p = prefix_sums(&ps);
    let prefix_sums_q = prefix_sums(&qs);
    let n = ps.len();

    let relation = if (prefix_sums_p[n - 1] - prefix_sums_q[n - 1]).abs() > SLACK {
        Relation::Incomparable
    } else if ps.iter().zip(&qs).all(|(a, b)| (a - b).abs() <= SLACK) {
        Relation::Equal
    } else {
        let p_over = prefix_sums_p
            .iter()
            .zip(&prefix_sums_q)
            .all(|(a, b)| *a >= *b - SLACK);
        let q_over = prefix_sums_p
            .iter()
            .zip(&prefix_sums_q)
            .all(|(a, b)| *b >= *a - SLACK);
        match (p_over, q_over) {
            (true, false) => Relation::PMajorizesQ,
            (false, true) => Relation::QMajorizesP,
            // Both hold only within slack of equality.
            (true, true) => Relation::Equal,
            (false, false) => Relation::Incomparable,
        }
    };

    Ok(MajorizationVerdict {
        relation,
        prefix_sums_p,
        prefix_sums_q,
    })
}

/// The uniform histogram (majorized by every histogram of the same total)
/// and the `m` concentrated histograms `total · δ_j` (which majorize all).
pub fn extremal_histograms(total: f64, m: usize) -> Result<(VoteHistogram, Vec<VoteHistogram>)> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    if !(total.is_finite() && total >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "total must be finite and nonnegative, got {total}"
        )));
    }
    let v_max = VoteHistogram::new(vec![total / m as f64; m])?;
    let v_min = (0..m)
        .map(|j| {
            let mut c = vec![0.0; m];
            c[j] = total;
            VoteHistogram::new(c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((v_max, v_min))
}

/// Integer histogram whose counts differ by at most one. Every integer
/// histogram with the same total and length majorizes it.
pub fn most_balanced(total: u64, m: usize) -> Result<VoteHistogram> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let base = total / m as u64;
    let extra = (total % m as u64) as usize;
    let counts: Vec<u64> = (0..m).map(|j| base + u64::from(j < extra)).collect();
    VoteHistogram::from_counts(&counts)
}

/// `binomial(total + m − 1, m − 1)`, saturating at `u128::MAX`.
pub fn composition_count(total: u64, m: usize) -> u128 {
    if m == 0 {
        return 0;
    }
    let k = (m - 1) as u128;
    let n = total as u128 + k;
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // c · (n − i) is divisible by (i + 1) after the multiplication.
        c = match c.checked_mul(n - i) {
            Some(x) => x / (i + 1),
            None => return u128::MAX,
        };
    }
    c
}

/// All compositions of `total` into `m` nonnegative integer parts, ordered
/// with the first part descending, then the second, and so on.
pub fn enumerate_histograms(total: u64, m: usize) -> Result<Vec<VoteHistogram>> {
    enumerate_histograms_capped(total, m, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_histograms_capped(total: u64, m: usize, cap: u128) -> Result<Vec<VoteHistogram>> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let count = composition_count(total, m);
    if count > cap {
        return Err(Error::Resource {
            what: "histogram enumeration",
            count,
            cap,
        });
    }

    fn fill(rest: u64, prefix: &mut Vec<u64>, m: usize, out: &mut Vec<VoteHistogram>) -> Result<()> {
        if prefix.len() == m - 1 {
            prefix.push(rest);
            out.push(VoteHistogram::from_counts(prefix)?);
            prefix.pop();
            return Ok(());
        }
        for c in (0..=rest).rev() {
            prefix.push(c);
            fill(rest - c, prefix, m, out)?;
            prefix.pop();
        }
        Ok(())
    }

    let mut out = Vec::with_capacity(count as usize);
    fill(total, &mut Vec::with_capacity(m), m, &mut out)?;
    Ok(out)
}

/// The integer known-votes histogram of the given total with the largest
/// entrywise leakage, found by enumeration.
///
/// The most balanced histogram is not used as a shortcut: when the noise is
/// small relative to the vote counts the ordering under majorization breaks
/// down and the maximizer can be a different composition.
pub fn max_leakage_histogram(
    total: u64,
    m: usize,
    noise: &NoiseModel,
    tol: f64,
) -> Result<(VoteHistogram, LeakageReport)> {
    let mut best: Option<(VoteHistogram, LeakageReport)> = None;
    for v in enumerate_histograms(total, m)? {
        let r = entrywise_leakage(&v, noise, tol)?;
        if best.as_ref().is_none_or(|(_, b)| r.value_nats > b.value_nats) {
            best = Some((v, r));
        }
    }
    Ok(best.expect("at least one composition exists"))
}
