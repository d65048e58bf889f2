//! Named invariant suites, runnable from the command line.
//!
//! Each suite returns a [`SuiteReport`] listing individual checks; a suite
//! passes when every check does.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    kernel_pcml, map_adversary_gain, pcml, postprocess, product_channel, random_channel, random_kernel, random_u,
    shattering_adversary, PriorOverInputs,
};
use crate::laplace::{h_series, leakage_at_vmax, win_prob_uniform_closed};
use crate::majorization::{compare, enumerate_histograms, most_balanced, Relation};
use crate::mc::{mc_membership_adversary, mc_win_probability};
use crate::rnm::{entrywise_leakage, win_probability, VoteHistogram, DEFAULT_TOL};
use crate::{Error, NoiseModel, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Schur,
    Lemmas,
    Shattering,
    Mc,
    H,
    Bound,
    Closed,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Schur,
        Suite::Lemmas,
        Suite::Shattering,
        Suite::Mc,
        Suite::H,
        Suite::Bound,
        Suite::Closed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Schur => "schur",
            Suite::Lemmas => "lemmas",
            Suite::Shattering => "shattering",
            Suite::Mc => "mc",
            Suite::H => "h",
            Suite::Bound => "bound",
            Suite::Closed => "closed",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Random instances for the channel suites.
    pub n: usize,
    /// Monte Carlo samples per estimate.
    pub samples: u64,
    pub m: usize,
    pub total: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            n: 1000,
            samples: 1_000_000,
            m: 3,
            total: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn run_suite(suite: Suite, opts: &SuiteOptions) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Schur => schur(opts)?,
        Suite::Lemmas => lemmas(opts)?,
        Suite::Shattering => shattering(opts)?,
        Suite::Mc => monte_carlo(opts)?,
        Suite::H => h_properties()?,
        Suite::Bound => bound()?,
        Suite::Closed => closed_form()?,
    };
    Ok(SuiteReport { suite, checks })
}

/// Slack for orderings between computed leakages.
const ORDER_SLACK: f64 = 1e-9;
/// Slack for exact channel identities.
const CHANNEL_SLACK: f64 = 1e-12;

/// Leakage is order-reversing under majorization over every integer
/// histogram of the given total, and the extremal histograms attain the
/// maximum and minimum.
fn schur(opts: &SuiteOptions) -> Result<Vec<Check>> {
    let hists = enumerate_histograms(opts.total, opts.m)?;
    let balanced = most_balanced(opts.total, opts.m)?;
    let mut checks = Vec::new();
    for (label, noise) in [
        ("laplace(0.1)", NoiseModel::laplace(0.1)?),
        ("gaussian(5)", NoiseModel::gaussian(5.0)?),
    ] {
        let values = hists
            .iter()
            .map(|v| entrywise_leakage(v, &noise, DEFAULT_TOL).map(|r| r.value_nats))
            .collect::<Result<Vec<_>>>()?;

        let mut pairs = 0usize;
        let mut violations = 0usize;
        let mut worst = 0.0f64;
        for a in 0..hists.len() {
            for b in a + 1..hists.len() {
                let rel = compare(hists[a].counts(), hists[b].counts())?.relation;
                let excess = match rel {
                    Relation::PMajorizesQ => values[a] - values[b],
                    Relation::QMajorizesP => values[b] - values[a],
                    Relation::Equal => (values[a] - values[b]).abs(),
                    Relation::Incomparable => continue,
                };
                pairs += 1;
                worst = worst.max(excess);
                if excess > ORDER_SLACK {
                    violations += 1;
                }
            }
        }
        checks.push(Check::new(
            format!("{label}: ordering"),
            violations == 0,
            format!("{pairs} comparable pairs of {} histograms, {violations} violations, max excess {worst:.3e}", hists.len()),
        ));

        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let at_balanced = entrywise_leakage(&balanced, &noise, DEFAULT_TOL)?.value_nats;
        checks.push(Check::new(
            format!("{label}: balanced maximizes"),
            at_balanced >= max - ORDER_SLACK,
            format!("L({:?}) = {at_balanced:.12}, max = {max:.12}", balanced.counts()),
        ));
        let concentrated_ok = hists
            .iter()
            .zip(&values)
            .filter(|(v, _)| v.counts().iter().filter(|&&c| c > 0.0).count() <= 1)
            .all(|(_, &l)| l <= min + ORDER_SLACK);
        checks.push(Check::new(
            format!("{label}: concentrated minimize"),
            concentrated_ok,
            format!("min = {min:.12}"),
        ));
    }
    Ok(checks)
}

/// Composition and data-processing inequalities on random channel pairs.
fn lemmas(opts: &SuiteOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mut comp_bad, mut comp_strict, mut dp_bad, mut dp_strict) = (0, 0, 0, 0);
    let (mut comp_worst, mut dp_worst) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..opts.n {
        let nx = rng.gen_range(2..=6);
        let c1 = random_channel(nx, rng.gen_range(2..=6), &mut rng)?;
        let c2 = random_channel(nx, rng.gen_range(2..=6), &mut rng)?;

        let joint = pcml(&product_channel(&c1, &c2)?);
        let gap = joint - (pcml(&c1) + pcml(&c2));
        comp_worst = comp_worst.max(gap);
        comp_bad += usize::from(gap > CHANNEL_SLACK);
        comp_strict += usize::from(gap < -CHANNEL_SLACK);

        let kernel = random_kernel(&c1, rng.gen_range(2..=6), &mut rng)?;
        let after = pcml(&postprocess(&c1, &kernel)?);
        let gap = after - pcml(&c1).min(kernel_pcml(&c1, &kernel)?);
        dp_worst = dp_worst.max(gap);
        dp_bad += usize::from(gap > CHANNEL_SLACK);
        dp_strict += usize::from(gap < -CHANNEL_SLACK);
    }
    Ok(vec![
        Check::new(
            "composition",
            comp_bad == 0,
            format!("{} pairs, {comp_bad} violations, {comp_strict} strict, max gap {comp_worst:.3e}", opts.n),
        ),
        Check::new("composition strict case", comp_strict > 0, format!("{comp_strict} strict")),
        Check::new(
            "data processing",
            dp_bad == 0,
            format!("{} pairs, {dp_bad} violations, {dp_strict} strict, max gap {dp_worst:.3e}", opts.n),
        ),
        Check::new("data processing strict case", dp_strict > 0, format!("{dp_strict} strict")),
    ])
}

/// The uniform-prior, `U = X` adversary attains `exp(pcml)` and random
/// adversaries never beat it.
fn shattering(opts: &SuiteOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mut worst_attain, mut worst_excess) = (0.0f64, f64::NEG_INFINITY);
    for _ in 0..opts.n {
        let nx = rng.gen_range(2..=6);
        let c = random_channel(nx, rng.gen_range(2..=6), &mut rng)?;
        let bound = pcml(&c).exp();
        let (prior, u) = shattering_adversary(&c)?;
        worst_attain = worst_attain.max((map_adversary_gain(&c, &prior, &u)? - bound).abs());
        for _ in 0..5 {
            let u = random_u(nx, rng.gen_range(1..=6), &mut rng)?;
            let weights: Vec<f64> = (0..nx).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = weights.iter().sum();
            let prior = PriorOverInputs::new(weights.iter().map(|w| w / s).collect())?;
            worst_excess = worst_excess.max(map_adversary_gain(&c, &prior, &u)? - bound);
        }
    }
    Ok(vec![
        Check::new(
            "shattering attains",
            worst_attain <= CHANNEL_SLACK,
            format!("{} channels, max |gain − exp(pcml)| = {worst_attain:.3e}", opts.n),
        ),
        Check::new(
            "random adversaries bounded",
            worst_excess <= CHANNEL_SLACK,
            format!("{} adversaries, max excess {worst_excess:.3e}", 5 * opts.n),
        ),
    ])
}

fn mc_check(name: &str, estimate: f64, se: f64, reference: f64, passed: bool) -> Check {
    Check::new(
        name,
        passed,
        format!("estimate {estimate:.6}, std_error {se:.2e}, reference {reference:.6}"),
    )
}

/// Monte Carlo frequencies against quadrature at three standard errors.
fn monte_carlo(opts: &SuiteOptions) -> Result<Vec<Check>> {
    let lap = NoiseModel::laplace(0.1)?;
    let n = opts.samples;
    let mut checks = Vec::new();

    let v = VoteHistogram::new(vec![1.0, 0.0])?;
    let reference = win_prob_uniform_closed(2, 0.1)?;
    let e = mc_win_probability(&v, 0, &lap, n, opts.seed)?;
    checks.push(mc_check("win (1,0)", e.mean, e.std_error, reference, e.agrees_with(reference, 3.0)));

    let v = VoteHistogram::new(vec![2.0; 4])?;
    let e = mc_win_probability(&v, 2, &NoiseModel::gaussian(1.0)?, n, opts.seed.wrapping_add(1))?;
    checks.push(mc_check("win uniform", e.mean, e.std_error, 0.25, e.agrees_with(0.25, 3.0)));

    let v = VoteHistogram::new(vec![5.0, 3.0, 2.0, 1.0])?.with_vote(0)?;
    let reference = win_probability(&v, 0, &lap, DEFAULT_TOL)?.value;
    let e = mc_win_probability(&v, 0, &lap, n, opts.seed.wrapping_add(2))?;
    checks.push(mc_check("win (6,3,2,1)", e.mean, e.std_error, reference, e.agrees_with(reference, 3.0)));

    for (i, counts) in [vec![4.0, 3.0, 2.0, 1.0], vec![0.0, 0.0]].into_iter().enumerate() {
        let v = VoteHistogram::new(counts)?;
        let bound = entrywise_leakage(&v, &lap, DEFAULT_TOL)?.value_nats.exp();
        let e = mc_membership_adversary(&v, &lap, n, opts.seed.wrapping_add(3 + i as u64), DEFAULT_TOL)?;
        checks.push(mc_check(
            &format!("adversary {:?}", v.counts()),
            e.mean,
            e.std_error,
            bound,
            e.mean <= bound + 3.0 * e.std_error,
        ));
    }
    Ok(checks)
}

/// `Σ_{k>m} (q^k − 2^{−k})/k` summed directly.
fn h_direct(m: u64, gamma: f64) -> f64 {
    let q = 1.0 - 0.5 * (-gamma).exp();
    let mut sum = 0.0;
    let mut k = m + 1;
    loop {
        let kf = k as f64;
        let term = (q.powf(kf) - 0.5f64.powf(kf)) / kf;
        sum += term;
        if term < 1e-22 * sum.max(1e-300) || term == 0.0 {
            return sum;
        }
        k += 1;
    }
}

fn h_properties() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for gamma in [0.05, 0.1, 1.0] {
        let h = h_series(500, gamma)?;
        let monotone = h.windows(2).all(|w| w[1] <= w[0]);
        let nonneg = h.iter().all(|&x| x >= 0.0);
        let worst = [0u64, 1, 2, 5, 10, 50, 100, 250, 500]
            .into_iter()
            .map(|m| (h[m as usize] - h_direct(m, gamma)).abs())
            .fold(0.0, f64::max);
        checks.push(Check::new(format!("γ={gamma}: H(0) = γ"), h[0] == gamma, format!("{}", h[0])));
        checks.push(Check::new(
            format!("γ={gamma}: nonincreasing, nonnegative"),
            monotone && nonneg,
            format!("H(500) = {:.3e}", h[500]),
        ));
        checks.push(Check::new(
            format!("γ={gamma}: direct series"),
            worst <= 1e-12,
            format!("max |Δ| = {worst:.3e}"),
        ));
    }
    let h500 = h_series(500, 0.1)?[500];
    checks.push(Check::new("γ=0.1: H(500) < 1e-6", h500 < 1e-6, format!("{h500:.3e}")));
    Ok(checks)
}

fn bound() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for gamma in [0.05, 0.1, 0.5, 1.0, 2.0] {
        let values = (2..=256).map(|m| leakage_at_vmax(m, gamma)).collect::<Result<Vec<_>>>()?;
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let monotone = values.windows(2).all(|w| w[1] >= w[0]);
        let far = leakage_at_vmax(4096, gamma)?;
        checks.push(Check::new(
            format!("γ={gamma}: ≤ γ"),
            max <= gamma + 1e-10,
            format!("max over m ≤ 256 = {max:.12}"),
        ));
        checks.push(Check::new(format!("γ={gamma}: nondecreasing"), monotone, String::new()));
        checks.push(Check::new(
            format!("γ={gamma}: m=4096 near γ"),
            (far - gamma).abs() <= 1e-3,
            format!("{far:.12}"),
        ));
    }
    Ok(checks)
}

fn closed_form() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for gamma in [0.05, 0.1, 0.5, 1.0] {
        let noise = NoiseModel::laplace(gamma)?;
        let mut worst = 0.0f64;
        for m in 2..=20u64 {
            let v = VoteHistogram::new(vec![0.0; m as usize])?;
            let quad = entrywise_leakage(&v, &noise, DEFAULT_TOL)?.value_nats.exp();
            let closed = m as f64 * win_prob_uniform_closed(m, gamma)?;
            worst = worst.max((quad - closed).abs());
        }
        checks.push(Check::new(
            format!("γ={gamma}: m·P_m vs quadrature"),
            worst <= 1e-8,
            format!("m = 2..20, max |Δ| = {worst:.3e}"),
        ));
    }
    Ok(checks)
}
