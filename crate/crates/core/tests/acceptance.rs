//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pcml::accountant::Policy;
use pcml::channel::{
    kernel_pcml, map_adversary_gain, pcml as channel_pcml, postprocess, product_channel, random_channel, random_kernel,
    random_u, shattering_adversary, PriorOverInputs,
};
use pcml::laplace::{h_series, leakage_at_vmax, win_prob_uniform_closed};
use pcml::majorization::{compare, enumerate_histograms, extremal_histograms, Relation};
use pcml::mc::mc_membership_adversary;
use pcml::pate::{simulate, LabeledDataset, Record, SimulationConfig};
use pcml::rnm::{entrywise_leakage, DEFAULT_TOL};
use pcml::{NoiseModel, VoteHistogram};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn hist(c: &[f64]) -> VoteHistogram {
    VoteHistogram::new(c.to_vec()).unwrap()
}

fn reference_histograms() -> Outcome {
    let lap = NoiseModel::laplace(0.1).map_err(e2s)?;
    let cases = [
        ([4.0, 3.0, 2.0, 1.0], 8.50e-2),
        ([5.0, 2.0, 2.0, 1.0], 8.40e-2),
        ([5.0, 3.0, 1.0, 1.0], 8.37e-2),
        ([5.0, 3.0, 2.0, 0.0], 8.35e-2),
    ];
    let mut got = Vec::new();
    for (c, want) in cases {
        let l = entrywise_leakage(&hist(&c), &lap, DEFAULT_TOL).map_err(e2s)?.value_nats;
        ensure((l - want).abs() <= 5e-5, || format!("{c:?}: {l} vs {want}"))?;
        got.push(l);
    }
    ensure(got.windows(2).all(|w| w[0] > w[1]), || format!("not strictly decreasing: {got:?}"))?;
    Ok(format!("{:.7} {:.7} {:.7} {:.7}", got[0], got[1], got[2], got[3]))
}

fn uniform_bound() -> Outcome {
    let mut worst_gap = f64::NEG_INFINITY;
    let mut far_gap = 0.0f64;
    for g in [0.05, 0.1, 0.5, 1.0, 2.0] {
        let mut prev = f64::NEG_INFINITY;
        for m in 2..=256 {
            let l = leakage_at_vmax(m, g).map_err(e2s)?;
            ensure(l <= g + 1e-10, || format!("γ={g} m={m}: {l} > γ"))?;
            ensure(l >= prev, || format!("γ={g} m={m}: {l} < {prev}"))?;
            worst_gap = worst_gap.max(l - g);
            prev = l;
        }
        let far = leakage_at_vmax(4096, g).map_err(e2s)?;
        ensure((far - g).abs() <= 1e-3, || format!("γ={g}: L(4096) = {far}"))?;
        far_gap = far_gap.max((far - g).abs());
    }
    Ok(format!("max L − γ = {worst_gap:.3e}, max |L(4096) − γ| = {far_gap:.3e}"))
}

fn closed_vs_quadrature() -> Outcome {
    let mut worst = 0.0f64;
    for g in [0.05, 0.1, 0.5, 1.0] {
        let lap = NoiseModel::laplace(g).map_err(e2s)?;
        for m in 2..=20u64 {
            let quad = entrywise_leakage(&hist(&vec![0.0; m as usize]), &lap, DEFAULT_TOL)
                .map_err(e2s)?
                .value_nats
                .exp();
            let closed = m as f64 * win_prob_uniform_closed(m, g).map_err(e2s)?;
            worst = worst.max((quad - closed).abs());
            ensure((quad - closed).abs() <= 1e-8, || format!("γ={g} m={m}: {quad} vs {closed}"))?;
        }
    }
    Ok(format!("max |exp(L) − m·P_m| = {worst:.3e}; leakage is log(m · closed form)"))
}

fn schur() -> Outcome {
    let mut pairs = 0;
    for (total, m) in [(6u64, 3usize), (9, 3)] {
        let hists = enumerate_histograms(total, m).map_err(e2s)?;
        let (v_max, v_min) = extremal_histograms(total as f64, m).map_err(e2s)?;
        for noise in [NoiseModel::laplace(0.1).map_err(e2s)?, NoiseModel::gaussian(5.0).map_err(e2s)?] {
            let leak = |v: &VoteHistogram| entrywise_leakage(v, &noise, DEFAULT_TOL).map(|r| r.value_nats);
            let l = hists.iter().map(leak).collect::<pcml::Result<Vec<_>>>().map_err(e2s)?;
            for a in 0..hists.len() {
                for b in 0..hists.len() {
                    if a == b {
                        continue;
                    }
                    let rel = compare(hists[a].counts(), hists[b].counts()).map_err(e2s)?.relation;
                    if rel == Relation::PMajorizesQ || rel == Relation::Equal {
                        pairs += 1;
                        ensure(l[a] <= l[b] + 1e-9, || {
                            format!("{noise:?}: L{:?} = {} > L{:?} = {}", hists[a].counts(), l[a], hists[b].counts(), l[b])
                        })?;
                    }
                }
            }
            let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = l.iter().copied().fold(f64::INFINITY, f64::min);
            let at_max = leak(&v_max).map_err(e2s)?;
            ensure((at_max - max).abs() <= 1e-9, || format!("{noise:?}: L(v_max) = {at_max}, max {max}"))?;
            for v in &v_min {
                let at_min = leak(v).map_err(e2s)?;
                ensure((at_min - min).abs() <= 1e-9, || format!("{noise:?}: L(v_min) = {at_min}, min {min}"))?;
            }
        }
    }
    Ok(format!("{pairs} ordered comparable pairs over 28 + 55 histograms, two noise models"))
}

fn composition_and_processing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 1000;
    let (mut strict_comp, mut strict_dp) = (0, 0);
    for i in 0..n {
        let nx = rng.gen_range(2..=6);
        let c1 = random_channel(nx, rng.gen_range(2..=6), &mut rng).map_err(e2s)?;
        let c2 = random_channel(nx, rng.gen_range(2..=6), &mut rng).map_err(e2s)?;
        let (l1, l2) = (channel_pcml(&c1), channel_pcml(&c2));
        let joint = channel_pcml(&product_channel(&c1, &c2).map_err(e2s)?);
        ensure(joint <= l1 + l2 + 1e-12, || format!("pair {i}: {joint} > {l1} + {l2}"))?;
        strict_comp += usize::from(joint < l1 + l2 - 1e-12);

        let k = random_kernel(&c1, rng.gen_range(2..=6), &mut rng).map_err(e2s)?;
        let after = channel_pcml(&postprocess(&c1, &k).map_err(e2s)?);
        let lk = kernel_pcml(&c1, &k).map_err(e2s)?;
        ensure(after <= l1.min(lk) + 1e-12, || format!("pair {i}: {after} > min({l1}, {lk})"))?;
        strict_dp += usize::from(after < l1.min(lk) - 1e-12);
    }
    ensure(strict_comp > 0 && strict_dp > 0, || "no strict case".into())?;
    Ok(format!("{n} pairs; strict: {strict_comp} composition, {strict_dp} data processing"))
}

fn operational() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let channels = 200;
    let mut attain = 0.0f64;
    for i in 0..channels {
        let nx = rng.gen_range(2..=6);
        let c = random_channel(nx, rng.gen_range(2..=6), &mut rng).map_err(e2s)?;
        let bound = channel_pcml(&c).exp();
        let (prior, u) = shattering_adversary(&c).map_err(e2s)?;
        let gain = map_adversary_gain(&c, &prior, &u).map_err(e2s)?;
        attain = attain.max((gain - bound).abs());
        ensure((gain - bound).abs() <= 1e-12, || format!("channel {i}: {gain} vs {bound}"))?;
        for _ in 0..10 {
            let u = random_u(nx, rng.gen_range(1..=6), &mut rng).map_err(e2s)?;
            let w: Vec<f64> = (0..nx).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            let prior = PriorOverInputs::new(w.iter().map(|x| x / s).collect()).map_err(e2s)?;
            let gain = map_adversary_gain(&c, &prior, &u).map_err(e2s)?;
            ensure(gain <= bound + 1e-12, || format!("channel {i}: random adversary {gain} > {bound}"))?;
        }
    }

    let lap = NoiseModel::laplace(0.1).map_err(e2s)?;
    let mut worst_z = f64::NEG_INFINITY;
    let cases: [&[f64]; 5] = [
        &[4.0, 3.0, 2.0, 1.0],
        &[5.0, 2.0, 2.0, 1.0],
        &[5.0, 3.0, 2.0, 0.0],
        &[0.0, 0.0],
        &[3.0, 3.0, 3.0],
    ];
    for (k, c) in cases.into_iter().enumerate() {
        let v = hist(c);
        let l = entrywise_leakage(&v, &lap, DEFAULT_TOL).map_err(e2s)?.value_nats;
        let e = mc_membership_adversary(&v, &lap, 1_000_000, 1000 + k as u64, DEFAULT_TOL).map_err(e2s)?;
        // Standard error of log(mean) by the delta method.
        let z = (e.mean.ln() - l) / (e.std_error / e.mean);
        worst_z = worst_z.max(z);
        ensure(z <= 3.0, || format!("{c:?}: log ratio {} vs leakage {l} ({z:.2} SE)", e.mean.ln()))?;
    }
    Ok(format!(
        "{channels} channels, max |gain − exp(pcml)| = {attain:.1e}; adversary worst excess {worst_z:.2} SE"
    ))
}

fn h_properties() -> Outcome {
    for g in [0.05, 0.1, 1.0] {
        let h = h_series(500, g).map_err(e2s)?;
        ensure(h[0] == g, || format!("H(0) = {} for γ = {g}", h[0]))?;
        ensure(h.iter().all(|&x| x >= 0.0), || format!("negative H at γ = {g}"))?;
        ensure(h.windows(2).all(|w| w[1] <= w[0]), || format!("H increases at γ = {g}"))?;
        let q: f64 = 1.0 - 0.5 * (-g).exp();
        for m in [0usize, 1, 5, 50, 200, 500] {
            let direct: f64 = ((m + 1)..(m + 5000)).map(|k| (q.powi(k as i32) - 0.5f64.powi(k as i32)) / k as f64).sum();
            ensure((h[m] - direct).abs() <= 1e-12, || format!("γ={g} m={m}: {} vs {direct}", h[m]))?;
        }
    }
    let h500 = h_series(500, 0.1).map_err(e2s)?[500];
    ensure(h500 < 1e-6, || format!("H(500) = {h500}"))?;
    Ok(format!("H(500) at γ=0.1 is {h500:.3e}"))
}

/// 44 points in four noisy clusters, labelled by cluster.
fn clustered_dataset(seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres = [(0.0, 0.0), (4.0, 0.0), (0.0, 4.0), (4.0, 4.0)];
    let records = (0..44)
        .map(|i| {
            let label = i % 4;
            let (cx, cy) = centres[label];
            Record {
                features: vec![cx + rng.gen_range(-2.5..2.5), cy + rng.gen_range(-2.5..2.5)],
                label,
            }
        })
        .collect();
    LabeledDataset::new(records, 4).unwrap()
}

fn accounting() -> Outcome {
    let data = clustered_dataset(3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let queries: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.gen_range(-1.0..5.0), rng.gen_range(-1.0..5.0)]).collect();
    let config = SimulationConfig {
        teachers: 11,
        gamma: 0.1,
        budget_nats: None,
        policy: Policy::AccountOnly,
        seed: 21,
        target: None,
    };
    let run = simulate(&data, &queries, &config).map_err(e2s)?;
    ensure(run.trace.len() == 50 && run.answered() == 50, || "not every query answered".into())?;
    for t in &run.trace {
        ensure(t.nats <= 0.1, || format!("query {} cost {}", t.query, t.nats))?;
        ensure(t.votes.iter().sum::<f64>() == 11.0, || format!("query {} votes {:?}", t.query, t.votes))?;
    }
    let total = run.ledger.cumulative();
    ensure(total <= 5.0, || format!("cumulative {total}"))?;

    // First query whose cost would push the running total past 0.5.
    let mut running = 0.0;
    let mut first = None;
    for t in &run.trace {
        if running + t.nats > 0.5 {
            first = Some(t.query);
            break;
        }
        running += t.nats;
    }
    let first = first.ok_or("budget never exceeded")?;
    let refuse = SimulationConfig {
        budget_nats: Some(0.5),
        policy: Policy::RefuseOverBudget,
        ..config
    };
    let halted = simulate(&data, &queries, &refuse).map_err(e2s)?;
    let last = halted.trace.last().ok_or("empty trace")?;
    ensure(halted.halted() && last.query == first, || format!("halted at {} instead of {first}", last.query))?;
    ensure(halted.answered() == first, || "answered count mismatch".into())?;
    ensure((halted.ledger.cumulative() - running).abs() <= 1e-12, || "cumulative mismatch".into())?;
    ensure(halted.ledger.cumulative() <= 0.5, || "budget exceeded".into())?;
    Ok(format!(
        "cumulative {total:.4} nats over 50 queries; refusal at query {first} with {:.4} nats spent",
        halted.ledger.cumulative()
    ))
}

struct Criterion {
    id: u32,
    title: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, title: "Example histograms at gamma 0.1", limit: Duration::from_secs(1), run: reference_histograms },
        Criterion { id: 2, title: "Uniform-histogram bound", limit: Duration::from_secs(5), run: uniform_bound },
        Criterion { id: 3, title: "Closed form vs quadrature", limit: Duration::from_secs(10), run: closed_vs_quadrature },
        Criterion { id: 4, title: "Schur-concavity on enumerated histograms", limit: Duration::from_secs(30), run: schur },
        Criterion { id: 5, title: "Composition and data processing", limit: Duration::from_secs(10), run: composition_and_processing },
        Criterion { id: 6, title: "Operational soundness", limit: Duration::from_secs(60), run: operational },
        Criterion { id: 7, title: "H series properties", limit: Duration::from_secs(1), run: h_properties },
        Criterion { id: 8, title: "Teacher-ensemble accounting", limit: Duration::from_secs(10), run: accounting },
    ];

    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.limit => Err(format!("{detail}; took {elapsed:.2?}, limit {:?}", c.limit)),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  criterion {} {} ({elapsed:.2?}): {detail}", c.id, c.title),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {} {} ({elapsed:.2?}): {why}", c.id, c.title);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
