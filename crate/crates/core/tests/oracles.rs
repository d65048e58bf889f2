//! Library results against independently coded references.

use pcml::accountant::{calibrate_gamma, worst_case_plan, BudgetLedger, Policy};
use pcml::laplace::{h_series, k_first_difference, leakage_at_vmax, total_bound, win_prob_uniform_closed};
use pcml::noise::log_concavity_probe;
use pcml::pate::{Aggregator, LabeledDataset, Record, TeacherEnsemble};
use pcml::quadrature::integrate;
use pcml::rnm::{entrywise_leakage, win_probability, DEFAULT_TOL};
use pcml::{NoiseModel, VoteHistogram};

fn lap_pdf(t: f64, g: f64) -> f64 {
    0.5 * g * (-g * t.abs()).exp()
}

fn lap_cdf(t: f64, g: f64) -> f64 {
    if t < 0.0 {
        0.5 * (g * t).exp()
    } else {
        1.0 - 0.5 * (-g * t).exp()
    }
}

/// Composite Simpson over `[a, b]` split at `cuts`, `n` (even) panels each.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, cuts: &[f64], n: usize) -> f64 {
    let mut edges = vec![a];
    let mut inner: Vec<f64> = cuts.iter().copied().filter(|&c| c > a && c < b).collect();
    inner.sort_by(f64::total_cmp);
    edges.extend(inner);
    edges.push(b);
    edges
        .windows(2)
        .map(|w| {
            let h = (w[1] - w[0]) / n as f64;
            let mut s = f(w[0]) + f(w[1]);
            for i in 1..n {
                s += f(w[0] + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        })
        .sum()
}

/// Win probability of class `j` under Laplace noise by Simpson's rule.
fn win_simpson(v: &[f64], j: usize, g: f64) -> f64 {
    let offsets: Vec<f64> = (0..v.len()).filter(|&l| l != j).map(|l| v[j] - v[l]).collect();
    let mut cuts = vec![0.0];
    cuts.extend(offsets.iter().map(|d| -d));
    let f = |t: f64| lap_pdf(t, g) * offsets.iter().map(|d| lap_cdf(d + t, g)).product::<f64>();
    simpson(f, -45.0 / g, 45.0 / g, &cuts, 20_000)
}

fn leakage_simpson(v_minus: &[f64], g: f64) -> f64 {
    (0..v_minus.len())
        .map(|j| {
            let mut v = v_minus.to_vec();
            v[j] += 1.0;
            win_simpson(&v, j, g)
        })
        .sum::<f64>()
        .ln()
}

fn hist(c: &[f64]) -> VoteHistogram {
    VoteHistogram::new(c.to_vec()).unwrap()
}

#[test]
fn reference_histograms_against_simpson() {
    let lap = NoiseModel::laplace(0.1).unwrap();
    // Values frozen from an independent adaptive-quadrature computation.
    let frozen = [0.0850252, 0.0840116, 0.0837144, 0.0835463];
    let cases = [[4.0, 3.0, 2.0, 1.0], [5.0, 2.0, 2.0, 1.0], [5.0, 3.0, 1.0, 1.0], [5.0, 3.0, 2.0, 0.0]];
    for (c, want) in cases.iter().zip(frozen) {
        let got = entrywise_leakage(&hist(c), &lap, DEFAULT_TOL).unwrap().value_nats;
        let oracle = leakage_simpson(c, 0.1);
        assert!((got - oracle).abs() < 1e-10, "{c:?}: {got} vs simpson {oracle}");
        assert!((got - want).abs() < 5e-8, "{c:?}: {got} vs frozen {want}");
    }
}

#[test]
fn win_probabilities_against_simpson() {
    let cases: [(&[f64], f64); 4] = [
        (&[5.0, 3.0, 2.0, 1.0], 0.1),
        (&[0.0, 0.0, 0.0], 1.0),
        (&[2.5, 0.5, 1.0, 7.0, 0.0], 0.5),
        (&[1.0, 0.0], 2.0),
    ];
    for (v, g) in cases {
        let noise = NoiseModel::laplace(g).unwrap();
        for j in 0..v.len() {
            let got = win_probability(&hist(v), j, &noise, 1e-11).unwrap().value;
            let oracle = win_simpson(v, j, g);
            assert!((got - oracle).abs() < 1e-10, "{v:?} j={j}: {got} vs {oracle}");
        }
    }
}

#[test]
fn two_class_difference_distribution() {
    // The difference of two Laplace(γ) variables has CDF 1 − ½e^{−γd}(1 + γd/2) for d ≥ 0.
    for g in [0.05f64, 0.1, 1.0] {
        let exact = 1.0 - 0.5 * (-g).exp() * (1.0 + g / 2.0);
        let got = win_probability(&hist(&[1.0, 0.0]), 0, &NoiseModel::laplace(g).unwrap(), 1e-11)
            .unwrap()
            .value;
        assert!((got - exact).abs() < 1e-11);
        assert!((win_prob_uniform_closed(2, g).unwrap() - exact).abs() < 1e-14);
    }
    let p = 1.0 - 0.5 * (-0.1f64).exp() * 1.05;
    assert!((p - 0.5249603555).abs() < 1e-10);
}

#[test]
fn laplace_cdf_matches_integrated_density() {
    for g in [0.05, 0.5, 2.0] {
        let lap = NoiseModel::laplace(g).unwrap();
        for k in -20..=20 {
            let t = k as f64 / g;
            let integral = simpson(|s| lap_pdf(s, g), -60.0 / g, t, &[0.0], 20_000);
            assert!((lap.cumulative(t) - integral).abs() < 1e-10, "γ={g}, t={t}");
        }
    }
}

#[test]
fn densities_integrate_to_one() {
    let models = [
        NoiseModel::laplace(0.1).unwrap(),
        NoiseModel::laplace(2.0).unwrap(),
        NoiseModel::gaussian(0.5).unwrap(),
        NoiseModel::gaussian(5.0).unwrap(),
    ];
    for noise in models {
        let (a, b) = noise.truncation();
        let r = integrate(|t| noise.density(t), a, b, noise.kinks(), 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-8, "{noise:?}: {}", r.value);
    }
}

#[test]
fn gaussian_cdf_against_erf_series() {
    // erf(x) = 2/√π Σ (−1)^n x^{2n+1} / (n! (2n+1))
    let erf = |x: f64| {
        let (mut term, mut sum) = (x, 0.0);
        for n in 0..60 {
            sum += term / (2 * n + 1) as f64;
            term *= -x * x / (n + 1) as f64;
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    };
    let g = NoiseModel::gaussian(1.0).unwrap();
    for x in [-2.0, -0.5, 0.0, 0.3, 1.0, 2.5] {
        let phi = 0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2));
        assert!((g.cumulative(x) - phi).abs() < 1e-14, "x={x}: {} vs {phi}", g.cumulative(x));
    }
    assert!((g.cumulative(1.0) - 0.841345).abs() < 5e-7);
    let g2 = NoiseModel::gaussian(2.0).unwrap();
    assert!((g2.cumulative(2.0) - g.cumulative(1.0)).abs() < 1e-15);
}

#[test]
fn built_in_models_pass_the_probe() {
    for s in [0.05, 0.1, 0.5, 1.0, 2.0] {
        let grid: Vec<f64> = (-40..=40).map(|k| k as f64 * 0.25 / s).collect();
        assert!(log_concavity_probe(&NoiseModel::laplace(s).unwrap(), &grid, 0.7).unwrap());
        let grid: Vec<f64> = (-40..=40).map(|k| k as f64 * 0.2 * s).collect();
        assert!(log_concavity_probe(&NoiseModel::gaussian(s).unwrap(), &grid, 0.3 * s).unwrap());
    }
}

/// `H(m) = Σ_{k>m} (q^k − 2^{−k}) / k` with `q = 1 − ½e^{−γ}`, summed directly.
fn h_direct(m: u64, g: f64) -> f64 {
    let q: f64 = 1.0 - 0.5 * (-g).exp();
    let mut s = 0.0;
    for k in (m + 1)..(m + 20_000) {
        let kf = k as f64;
        s += (q.powf(kf) - 0.5f64.powf(kf)) / kf;
    }
    s
}

#[test]
fn h_recursion_against_direct_sum() {
    for g in [0.05, 0.1, 1.0] {
        let h = h_series(500, g).unwrap();
        assert_eq!(h[0], g);
        for m in [0u64, 1, 2, 3, 10, 37, 100, 499, 500] {
            assert!((h[m as usize] - h_direct(m, g)).abs() < 1e-12, "γ={g} m={m}");
        }
    }
    // H(0) = ln(2q) = γ identically.
    assert!((h_direct(0, 0.3) - 0.3).abs() < 1e-13);
}

#[test]
fn k_differences_match_their_closed_forms() {
    for g in [0.05, 0.1, 0.5, 1.0, 2.0] {
        let k = |m: u64| m as f64 * win_prob_uniform_closed(m, g).unwrap();
        let h = h_series(60, g).unwrap();
        for m in 1..40u64 {
            let dk = k(m + 1) - k(m);
            assert!((k_first_difference(m, g).unwrap() - dk).abs() < 1e-12, "γ={g} m={m}");
            let d2 = k_first_difference(m + 1, g).unwrap() - k_first_difference(m, g).unwrap();
            let want = -0.5 * (-g).exp() * h[m as usize];
            assert!((d2 - want).abs() < 1e-12, "γ={g} m={m}: {d2} vs {want}");
        }
    }
}

#[test]
fn uniform_leakage_is_log_m_times_closed_form() {
    for g in [0.05, 0.1, 0.5, 1.0] {
        for m in [2usize, 3, 7, 12] {
            let l = leakage_simpson(&vec![0.0; m], g);
            let closed = (m as f64 * win_prob_uniform_closed(m as u64, g).unwrap()).ln();
            assert!((l - closed).abs() < 1e-10, "γ={g} m={m}");
            assert!((leakage_at_vmax(m as u64, g).unwrap() - closed).abs() < 1e-12);
        }
    }
}

#[test]
fn calibration_inverts_leakage() {
    let v = hist(&[4.0, 3.0, 2.0, 1.0]);
    let c = calibrate_gamma(&v, 0.0850252, 1e-9).unwrap();
    assert!((c.gamma - 0.1).abs() < 1e-5, "{c:?}");
    let lap = NoiseModel::laplace(c.gamma).unwrap();
    assert!((entrywise_leakage(&v, &lap, 1e-11).unwrap().value_nats - 0.0850252).abs() < 1e-8);

    let uniform = hist(&[0.0; 5]);
    for target in [0.02, 0.08, 0.3] {
        let c = calibrate_gamma(&uniform, target, 1e-9).unwrap();
        assert!(c.gamma >= target);
        let l = entrywise_leakage(&uniform, &NoiseModel::laplace(c.gamma).unwrap(), 1e-11).unwrap();
        assert!((l.value_nats - target).abs() < 1e-8);
    }

    let tiny = calibrate_gamma(&v, 1e-6, 1e-9).unwrap().gamma;
    let small = calibrate_gamma(&v, 1e-3, 1e-9).unwrap().gamma;
    assert!(tiny < small);
}

#[test]
fn accounted_total_within_plan() {
    let lap = NoiseModel::laplace(0.1).unwrap();
    let mut ledger = BudgetLedger::account_only();
    let hists = [[4.0, 3.0, 2.0, 1.0], [10.0, 0.0, 0.0, 0.0], [3.0, 3.0, 2.0, 2.0], [0.0; 4]];
    for (i, v) in hists.iter().cycle().take(40).enumerate() {
        let l = entrywise_leakage(&hist(v), &lap, DEFAULT_TOL).unwrap().value_nats;
        assert!(l <= 0.1);
        ledger.record(format!("q{i}"), l, pcml::LeakageMethod::Quadrature).unwrap();
    }
    assert!(ledger.cumulative() <= worst_case_plan(40, 0.1).unwrap());
    assert_eq!(worst_case_plan(40, 0.1).unwrap(), total_bound(40, 0.1).unwrap());
}

/// Eleven single-record partitions whose labels realize the vote histogram
/// (5, 3, 2, 1) for every query.
fn four_class_ensemble() -> TeacherEnsemble {
    let labels = [0, 0, 0, 0, 0, 1, 1, 1, 2, 2, 3];
    let records = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| Record {
            features: vec![i as f64, (i * i) as f64],
            label,
        })
        .collect();
    let d = LabeledDataset::new(records, 4).unwrap();
    TeacherEnsemble::train_partitioned(&d, 11, 5).unwrap()
}

#[test]
fn reference_histograms_through_the_pipeline() {
    let e = four_class_ensemble();
    let lap = NoiseModel::laplace(0.1).unwrap();
    assert_eq!(e.vote_histogram(&[3.0, -1.0]).counts(), &[5.0, 3.0, 2.0, 1.0]);

    let mut ledger = BudgetLedger::account_only();
    let cases = [(0usize, [4.0, 3.0, 2.0, 1.0], 8.50e-2), (10, [5.0, 3.0, 2.0, 0.0], 8.35e-2)];
    for (target, v_minus, cost) in cases {
        let agg = Aggregator::new(&e, lap.clone(), Some(target)).unwrap();
        let a = agg.answer_query("q", &[0.5, 0.5], &mut ledger, 9).unwrap();
        assert_eq!(a.v_minus.counts(), &v_minus);
        assert!((a.leakage_nats - cost).abs() < 5e-5);
        assert!(a.label.is_some_and(|l| l < 4));
    }

    // Without a designated target the charge is the worst reduction.
    let agg = Aggregator::new(&e, lap, None).unwrap();
    let (_, v_minus, cost) = agg.charge(&[0.0, 0.0]).unwrap();
    assert_eq!(v_minus.counts(), &[4.0, 3.0, 2.0, 1.0]);
    assert!((cost - 0.0850252).abs() < 5e-8);
}

#[test]
fn unanimous_reduction_is_the_cheapest() {
    let records = (0..5)
        .map(|i| Record {
            features: vec![i as f64],
            label: 1,
        })
        .collect();
    let d = LabeledDataset::new(records, 3).unwrap();
    let e = TeacherEnsemble::train_partitioned(&d, 5, 0).unwrap();
    let lap = NoiseModel::laplace(0.1).unwrap();
    let agg = Aggregator::new(&e, lap.clone(), Some(2)).unwrap();
    let (_, v_minus, cost) = agg.charge(&[1.5]).unwrap();
    assert_eq!(v_minus.counts(), &[0.0, 4.0, 0.0]);
    for v in pcml::majorization::enumerate_histograms(4, 3).unwrap() {
        assert!(cost <= entrywise_leakage(&v, &lap, DEFAULT_TOL).unwrap().value_nats + 1e-9);
    }
}

#[test]
fn refusal_policy_through_the_pipeline() {
    let e = four_class_ensemble();
    let agg = Aggregator::new(&e, NoiseModel::laplace(0.1).unwrap(), Some(0)).unwrap();
    let mut ledger = BudgetLedger::new(Policy::RefuseOverBudget, Some(0.2)).unwrap();
    let outcomes: Vec<bool> = (0..3)
        .map(|i| agg.answer_query(&format!("q{i}"), &[0.0, 0.0], &mut ledger, i).unwrap().refused)
        .collect();
    assert_eq!(outcomes, vec![false, false, true]);
    assert_eq!(ledger.entries().len(), 2);
}
