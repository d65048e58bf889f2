//! Seeded Monte Carlo oracles for the quadrature results.
//!
//! Samples are drawn in fixed-size batches; batch `b` uses a generator seeded
//! from `(seed, b)`, so results do not depend on how batches are scheduled
//! across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rnm::{noisy_argmax_with_rng, win_probability, VoteHistogram};
use crate::{Error, NoiseModel, Result};

pub const MIN_SAMPLES: u64 = 100;

const BATCH: u64 = 1 << 15;

/// A sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl McEstimate {
    /// Estimate of `scale · p` from `hits` Bernoulli successes in `n` trials.
    fn bernoulli(hits: u64, n: u64, seed: u64, scale: f64) -> Self {
        let p = hits as f64 / n as f64;
        let var = if n > 1 {
            p * (1.0 - p) * n as f64 / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean: scale * p,
            std_error: scale * (var / n as f64).sqrt(),
            n_samples: n,
            seed,
        }
    }

    /// Whether `reference` lies within `k` standard errors of the mean.
    pub fn agrees_with(&self, reference: f64, k: f64) -> bool {
        (self.mean - reference).abs() <= k * self.std_error
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for batch `batch` of a run seeded with `seed`.
pub fn batch_seed(seed: u64, batch: u64) -> u64 {
    splitmix64(seed ^ splitmix64(batch))
}

fn check_samples(n: u64) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_SAMPLES} samples, got {n}"
        )));
    }
    Ok(())
}

/// Runs `draw` on `n` samples split into seeded batches and sums the
/// per-sample outcome vectors.
fn run_batches<F>(n: u64, seed: u64, width: usize, draw: F) -> Vec<u64>
where
    F: Fn(&mut ChaCha8Rng, &mut [u64]) + Sync,
{
    let batches = n.div_ceil(BATCH);
    (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(batch_seed(seed, b));
            let count = BATCH.min(n - b * BATCH);
            let mut tally = vec![0u64; width];
            for _ in 0..count {
                draw(&mut rng, &mut tally);
            }
            tally
        })
        .reduce(
            || vec![0u64; width],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// Empirical frequency with which class `j` is the noisy argmax of `v`.
pub fn mc_win_probability(v: &VoteHistogram, j: usize, noise: &NoiseModel, n: u64, seed: u64) -> Result<McEstimate> {
    if j >= v.classes() {
        return Err(Error::InvalidInput(format!("class index {j} out of range")));
    }
    let all = mc_win_frequencies(v, noise, n, seed)?;
    Ok(all[j])
}

/// Empirical win frequencies of every class from one shared set of draws.
pub fn mc_win_frequencies(v: &VoteHistogram, noise: &NoiseModel, n: u64, seed: u64) -> Result<Vec<McEstimate>> {
    check_samples(n)?;
    let tally = run_batches(n, seed, v.classes(), |rng, t| {
        t[noisy_argmax_with_rng(v, noise, rng)] += 1;
    });
    Ok(tally
        .into_iter()
        .map(|hits| McEstimate::bernoulli(hits, n, seed, 1.0))
        .collect())
}

/// Simulated membership adversary against one query.
///
/// The unknown teacher's vote is drawn uniformly from the `m` classes, the
/// mechanism runs on `v⁻ + δ_class`, and the adversary answers with the MAP
/// guess computed from quadrature win probabilities. Returns the success
/// rate divided by the blind rate `1/m`; its expectation is the gain
/// `exp(leakage)` of this adversary.
pub fn mc_membership_adversary(
    v_minus: &VoteHistogram,
    noise: &NoiseModel,
    n: u64,
    seed: u64,
    tol: f64,
) -> Result<McEstimate> {
    check_samples(n)?;
    let m = v_minus.classes();
    let candidates = (0..m).map(|c| v_minus.with_vote(c)).collect::<Result<Vec<_>>>()?;

    // likelihood[c][y] = P(Y = y | v⁻ + δ_c)
    let likelihood = candidates
        .iter()
        .map(|v| (0..m).map(|y| win_probability(v, y, noise, tol).map(|r| r.value)).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let guess: Vec<usize> = (0..m)
        .map(|y| {
            (0..m).fold(0, |best, c| if likelihood[c][y] > likelihood[best][y] { c } else { best })
        })
        .collect();

    let tally = run_batches(n, seed, 1, |rng, t| {
        let truth = rng.gen_range(0..m);
        let y = noisy_argmax_with_rng(&candidates[truth], noise, rng);
        if guess[y] == truth {
            t[0] += 1;
        }
    });
    Ok(McEstimate::bernoulli(tally[0], n, seed, m as f64))
}
