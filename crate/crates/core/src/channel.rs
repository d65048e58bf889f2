//! Finite channels and their pointwise conditional maximal leakage.
//!
//! A [`ConditionalChannel`] holds `P(y | x, z)` for one fixed outcome `z` of
//! the side information, restricted to the inputs `x` with `P(x | z) > 0`.
//! Its leakage is `log Σ_y max_{x ∈ support} P(y | x, z)`.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on row normalization.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelJson", into = "ChannelJson")]
pub struct ConditionalChannel {
    x_support: Vec<String>,
    y_alphabet: Vec<String>,
    /// `rows[i][k] = P(y_alphabet[k] | x_support[i])`.
    rows: Vec<Vec<f64>>,
}

/// Wire form: `{"x_support":[…],"y_alphabet":[…],"rows":{"a":[…],…}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelJson {
    x_support: Vec<String>,
    y_alphabet: Vec<String>,
    rows: BTreeMap<String, Vec<f64>>,
}

impl TryFrom<ChannelJson> for ConditionalChannel {
    type Error = Error;

    fn try_from(mut raw: ChannelJson) -> Result<Self> {
        if raw.rows.len() != raw.x_support.len() {
            return Err(Error::InvalidInput(format!(
                "{} rows declared for {} supported inputs",
                raw.rows.len(),
                raw.x_support.len()
            )));
        }
        let rows = raw
            .x_support
            .iter()
            .map(|x| {
                raw.rows
                    .remove(x)
                    .ok_or_else(|| Error::InvalidInput(format!("no row for input {x:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        ConditionalChannel::new(raw.x_support, raw.y_alphabet, rows)
    }
}

impl From<ConditionalChannel> for ChannelJson {
    fn from(c: ConditionalChannel) -> Self {
        ChannelJson {
            rows: c.x_support.iter().cloned().zip(c.rows).collect(),
            x_support: c.x_support,
            y_alphabet: c.y_alphabet,
        }
    }
}

fn unique_labels(what: &str, labels: &[String]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::InvalidInput(format!("{what} is empty")));
    }
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(Error::InvalidInput(format!("duplicate label {l:?} in {what}")));
        }
    }
    Ok(())
}

fn check_distribution(what: &str, row: &[f64]) -> Result<()> {
    if row.iter().any(|p| !(p.is_finite() && (0.0..=1.0).contains(p))) {
        return Err(Error::InvalidInput(format!("{what} has entries outside [0, 1]")));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidInput(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

fn default_labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

impl ConditionalChannel {
    pub fn new(x_support: Vec<String>, y_alphabet: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        unique_labels("x_support", &x_support)?;
        unique_labels("y_alphabet", &y_alphabet)?;
        if rows.len() != x_support.len() {
            return Err(Error::InvalidInput(format!(
                "{} rows for {} supported inputs",
                rows.len(),
                x_support.len()
            )));
        }
        for (x, row) in x_support.iter().zip(&rows) {
            if row.len() != y_alphabet.len() {
                return Err(Error::InvalidInput(format!(
                    "row {x:?} has {} entries, alphabet has {}",
                    row.len(),
                    y_alphabet.len()
                )));
            }
            check_distribution(&format!("row {x:?}"), row)?;
        }
        Ok(Self {
            x_support,
            y_alphabet,
            rows,
        })
    }

    /// Channel with generated labels `x0, x1, …` and `y0, y1, …`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nx = rows.len();
        let ny = rows.first().map_or(0, Vec::len);
        Self::new(default_labels("x", nx), default_labels("y", ny), rows)
    }

    /// Deterministic channel sending input `i` to output `map[i]`.
    pub fn deterministic(map: &[usize], outputs: usize) -> Result<Self> {
        let rows = map
            .iter()
            .map(|&y| {
                if y >= outputs {
                    return Err(Error::InvalidInput(format!("output {y} out of range")));
                }
                let mut r = vec![0.0; outputs];
                r[y] = 1.0;
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(rows)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::deterministic(&(0..n).collect::<Vec<_>>(), n)
    }

    pub fn x_support(&self) -> &[String] {
        &self.x_support
    }

    pub fn y_alphabet(&self) -> &[String] {
        &self.y_alphabet
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Same `P(y | x)` table restricted to another support. With a Markov
    /// chain `Z − X − Y` each conditioning outcome only changes the support.
    pub fn with_support(&self, support: &[String]) -> Result<Self> {
        let index: HashMap<&String, usize> = self.x_support.iter().enumerate().map(|(i, x)| (x, i)).collect();
        let rows = support
            .iter()
            .map(|x| {
                index
                    .get(x)
                    .map(|&i| self.rows[i].clone())
                    .ok_or_else(|| Error::InvalidInput(format!("input {x:?} not in channel")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(support.to_vec(), self.y_alphabet.clone(), rows)
    }

    /// Outputs with positive probability under some supported input.
    pub fn reachable_outputs(&self) -> Vec<String> {
        self.y_alphabet
            .iter()
            .enumerate()
            .filter(|&(k, _)| self.rows.iter().any(|r| r[k] > 0.0))
            .map(|(_, y)| y.clone())
            .collect()
    }

    /// `Σ_y max_x P(y | x)`, the multiplicative gain.
    pub fn column_max_sum(&self) -> f64 {
        (0..self.y_alphabet.len())
            .map(|k| self.rows.iter().map(|r| r[k]).fold(0.0, f64::max))
            .sum()
    }

    fn row_index(&self) -> HashMap<&str, usize> {
        self.x_support.iter().enumerate().map(|(i, x)| (x.as_str(), i)).collect()
    }
}

/// Pointwise conditional maximal leakage in nats.
pub fn pcml(channel: &ConditionalChannel) -> f64 {
    channel.column_max_sum().ln()
}

/// Unconditional maximal leakage; the channel's support must hold every
/// input with positive marginal probability.
pub fn maximal_leakage(channel: &ConditionalChannel) -> f64 {
    pcml(channel)
}

/// Prior `P(x | z)` over a channel's support, in support order.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorOverInputs(Vec<f64>);

impl PriorOverInputs {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidInput("prior is empty".into()));
        }
        if probs.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidInput(
                "prior must be strictly positive on the support".into(),
            ));
        }
        check_distribution("prior", &probs)?;
        Ok(Self(probs))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

/// `P(u | x)` for a secret `U` that depends on the output only through `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct UConditional {
    labels: usize,
    rows: Vec<Vec<f64>>,
}

impl UConditional {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let labels = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || labels == 0 {
            return Err(Error::InvalidInput("U conditional is empty".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != labels {
                return Err(Error::InvalidInput(format!("U row {i} has the wrong length")));
            }
            check_distribution(&format!("U row {i}"), r)?;
        }
        Ok(Self { labels, rows })
    }

    /// `U = map(X)`.
    pub fn deterministic(map: &[usize], labels: usize) -> Result<Self> {
        let rows = map
            .iter()
            .map(|&u| {
                if u >= labels {
                    return Err(Error::InvalidInput(format!("U label {u} out of range")));
                }
                let mut r = vec![0.0; labels];
                r[u] = 1.0;
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn labels(&self) -> usize {
        self.labels
    }
}

/// `P(U = Û(Y)) / P(U = Ũ)` for MAP estimators with and without the output,
/// by exact enumeration over `(u, x, y)`.
pub fn map_adversary_gain(channel: &ConditionalChannel, prior: &PriorOverInputs, u: &UConditional) -> Result<f64> {
    let n = channel.x_support.len();
    if prior.0.len() != n || u.rows.len() != n {
        return Err(Error::InvalidInput(format!(
            "prior ({}) and U ({}) must cover the {n} supported inputs",
            prior.0.len(),
            u.rows.len()
        )));
    }

    let blind = (0..u.labels)
        .map(|k| (0..n).map(|i| u.rows[i][k] * prior.0[i]).sum::<f64>())
        .fold(0.0, f64::max);

    let informed: f64 = (0..channel.y_alphabet.len())
        .map(|y| {
            (0..u.labels)
                .map(|k| {
                    (0..n)
                        .map(|i| u.rows[i][k] * channel.rows[i][y] * prior.0[i])
                        .sum::<f64>()
                })
                .fold(0.0, f64::max)
        })
        .sum();

    Ok(informed / blind)
}

/// The adversary that attains the leakage: uniform prior and `U = X`.
pub fn shattering_adversary(channel: &ConditionalChannel) -> Result<(PriorOverInputs, UConditional)> {
    let n = channel.x_support.len();
    Ok((
        PriorOverInputs::uniform(n)?,
        UConditional::deterministic(&(0..n).collect::<Vec<_>>(), n)?,
    ))
}

/// Joint channel to `(Y1, Y2)` when the outputs are independent given `x`.
pub fn product_channel(c1: &ConditionalChannel, c2: &ConditionalChannel) -> Result<ConditionalChannel> {
    let same_support = c1.x_support.len() == c2.x_support.len() && {
        let s: HashSet<&String> = c1.x_support.iter().collect();
        c2.x_support.iter().all(|x| s.contains(x))
    };
    if !same_support {
        return Err(Error::InvalidInput("channels have different input supports".into()));
    }
    let c2_index = c2.row_index();
    let y_alphabet = c1
        .y_alphabet
        .iter()
        .flat_map(|a| c2.y_alphabet.iter().map(move |b| format!("({a},{b})")))
        .collect();
    let rows = c1
        .x_support
        .iter()
        .zip(&c1.rows)
        .map(|(x, r1)| {
            let r2 = &c2.rows[c2_index[x.as_str()]];
            r1.iter().flat_map(|p| r2.iter().map(move |q| p * q)).collect()
        })
        .collect();
    ConditionalChannel::new(c1.x_support.clone(), y_alphabet, rows)
}

/// Passes the output through `kernel`, a channel whose inputs are the
/// output alphabet of `channel`.
pub fn postprocess(channel: &ConditionalChannel, kernel: &ConditionalChannel) -> Result<ConditionalChannel> {
    if kernel.x_support.len() != channel.y_alphabet.len() {
        return Err(Error::InvalidInput(
            "kernel inputs must be exactly the channel's output alphabet".into(),
        ));
    }
    let k_index = kernel.row_index();
    let order = channel
        .y_alphabet
        .iter()
        .map(|y| {
            k_index
                .get(y.as_str())
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("kernel has no row for {y:?}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let width = kernel.y_alphabet.len();
    let rows = channel
        .rows
        .iter()
        .map(|r| {
            let mut out = vec![0.0; width];
            for (k, &p) in r.iter().enumerate() {
                for (o, &w) in out.iter_mut().zip(&kernel.rows[order[k]]) {
                    *o += p * w;
                }
            }
            // Clamp rounding excursions above one.
            out.iter_mut().for_each(|o| *o = o.min(1.0));
            out
        })
        .collect();
    ConditionalChannel::new(channel.x_support.clone(), kernel.y_alphabet.clone(), rows)
}

/// Leakage of `kernel` viewed as a channel from the outputs `channel` can
/// actually produce.
pub fn kernel_pcml(channel: &ConditionalChannel, kernel: &ConditionalChannel) -> Result<f64> {
    Ok(pcml(&kernel.with_support(&channel.reachable_outputs())?))
}

fn random_row<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + f64::MIN_POSITIVE).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Channel whose rows are independent uniform draws, normalized.
pub fn random_channel<R: RngCore + ?Sized>(nx: usize, ny: usize, rng: &mut R) -> Result<ConditionalChannel> {
    ConditionalChannel::from_rows((0..nx).map(|_| random_row(ny, rng)).collect())
}

/// Random kernel from `channel`'s outputs onto `ny` new symbols.
pub fn random_kernel<R: RngCore + ?Sized>(
    channel: &ConditionalChannel,
    ny: usize,
    rng: &mut R,
) -> Result<ConditionalChannel> {
    ConditionalChannel::new(
        channel.y_alphabet.clone(),
        default_labels("w", ny),
        (0..channel.y_alphabet.len()).map(|_| random_row(ny, rng)).collect(),
    )
}

/// Random `P(u | x)` over `labels` values.
pub fn random_u<R: RngCore + ?Sized>(nx: usize, labels: usize, rng: &mut R) -> Result<UConditional> {
    UConditional::new((0..nx).map(|_| random_row(labels, rng)).collect())
}
