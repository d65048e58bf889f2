//! A small, deterministic teacher-ensemble pipeline.
//!
//! Training data is split into disjoint partitions, one 1-nearest-neighbour
//! teacher per partition. Each student query collects one vote per teacher,
//! is charged the entrywise leakage of the known votes, and is answered with
//! the noisy argmax of the vote histogram. Class labels are 0-based.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::accountant::{BudgetLedger, Policy};
use crate::mc::batch_seed;
use crate::rnm::{entrywise_leakage, noisy_argmax_sample, LeakageMethod, VoteHistogram, DEFAULT_TOL};
use crate::{Error, NoiseModel, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    records: Vec<Record>,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(records: Vec<Record>, classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::InvalidParameter("need at least one class".into()));
        }
        let dim = records.first().map_or(0, |r| r.features.len());
        for (i, r) in records.iter().enumerate() {
            if r.label >= classes {
                return Err(Error::InvalidInput(format!(
                    "record {i} has label {} outside 0..{classes}",
                    r.label
                )));
            }
            if r.features.len() != dim {
                return Err(Error::InvalidInput(format!("record {i} has {} features, expected {dim}", r.features.len())));
            }
            if r.features.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("record {i} has a non-finite feature")));
            }
        }
        Ok(Self { records, classes })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }
}

/// Seeded shuffle of `0..n` dealt round-robin into `teachers` partitions.
pub fn partition(n: usize, teachers: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if teachers == 0 || teachers > n {
        return Err(Error::InvalidInput(format!(
            "cannot split {n} records into {teachers} nonempty partitions"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut parts = vec![Vec::with_capacity(n / teachers + 1); teachers];
    for (i, r) in order.into_iter().enumerate() {
        parts[i % teachers].push(r);
    }
    parts.iter_mut().for_each(|p| p.sort_unstable());
    Ok(parts)
}

/// 1-nearest-neighbour classifier over one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct StubTeacher {
    /// (record index, features, label), sorted by record index.
    points: Vec<(usize, Vec<f64>, usize)>,
}

impl StubTeacher {
    /// Label of the closest training point by Euclidean distance; ties go to
    /// the lowest record index, then the lowest label.
    pub fn predict(&self, query: &[f64]) -> usize {
        let dist = |f: &[f64]| -> f64 { f.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum() };
        self.points
            .iter()
            .map(|(idx, f, label)| (dist(f), *idx, *label))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)))
            .map(|(_, _, label)| label)
            .expect("teachers are never empty")
    }
}

pub fn train_stub_teacher(dataset: &LabeledDataset, partition: &[usize]) -> Result<StubTeacher> {
    if partition.is_empty() {
        return Err(Error::InvalidInput("cannot train a teacher on an empty partition".into()));
    }
    let mut points = partition
        .iter()
        .map(|&i| {
            dataset
                .records
                .get(i)
                .map(|r| (i, r.features.clone(), r.label))
                .ok_or_else(|| Error::InvalidInput(format!("record index {i} out of range")))
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by_key(|p| p.0);
    Ok(StubTeacher { points })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherEnsemble {
    partitions: Vec<Vec<usize>>,
    teachers: Vec<StubTeacher>,
    /// Teacher index for each record.
    owner: Vec<usize>,
    classes: usize,
}

impl TeacherEnsemble {
    /// Trains one teacher per partition. Partitions must be nonempty,
    /// disjoint and cover every record.
    pub fn train(dataset: &LabeledDataset, partitions: Vec<Vec<usize>>) -> Result<Self> {
        let mut owner = vec![usize::MAX; dataset.len()];
        for (t, part) in partitions.iter().enumerate() {
            if part.is_empty() {
                return Err(Error::InvalidInput(format!("partition {t} is empty")));
            }
            for &r in part {
                match owner.get_mut(r) {
                    None => return Err(Error::InvalidInput(format!("record index {r} out of range"))),
                    Some(o) if *o != usize::MAX => {
                        return Err(Error::InvalidInput(format!("record {r} is in two partitions")))
                    }
                    Some(o) => *o = t,
                }
            }
        }
        if let Some(r) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::InvalidInput(format!("record {r} is in no partition")));
        }
        let teachers = partitions
            .iter()
            .map(|p| train_stub_teacher(dataset, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            partitions,
            teachers,
            owner,
            classes: dataset.classes,
        })
    }

    pub fn train_partitioned(dataset: &LabeledDataset, teachers: usize, seed: u64) -> Result<Self> {
        Self::train(dataset, partition(dataset.len(), teachers, seed)?)
    }

    pub fn teachers(&self) -> usize {
        self.teachers.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn partitions(&self) -> &[Vec<usize>] {
        &self.partitions
    }

    /// Teacher whose partition holds `record`.
    pub fn teacher_of(&self, record: usize) -> Option<usize> {
        self.owner.get(record).copied()
    }

    pub fn votes(&self, query: &[f64]) -> Vec<usize> {
        self.teachers.iter().map(|t| t.predict(query)).collect()
    }

    pub fn vote_histogram(&self, query: &[f64]) -> VoteHistogram {
        let mut counts = vec![0.0; self.classes];
        for label in self.votes(query) {
            counts[label] += 1.0;
        }
        VoteHistogram::new(counts).expect("vote counts are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAnswer {
    /// Released label, absent when the query was refused.
    pub label: Option<usize>,
    pub leakage_nats: f64,
    pub refused: bool,
    pub histogram: VoteHistogram,
    /// Known-votes histogram the charge was computed from.
    pub v_minus: VoteHistogram,
}

/// Noisy aggregation over a trained ensemble.
#[derive(Debug, Clone)]
pub struct Aggregator<'a> {
    ensemble: &'a TeacherEnsemble,
    noise: NoiseModel,
    /// Record index of the entry whose leakage is tracked. When unset, each
    /// query is charged the largest cost over all possible unknown votes.
    target: Option<usize>,
    tol: f64,
}

impl<'a> Aggregator<'a> {
    pub fn new(ensemble: &'a TeacherEnsemble, noise: NoiseModel, target: Option<usize>) -> Result<Self> {
        if let Some(r) = target {
            if ensemble.teacher_of(r).is_none() {
                return Err(Error::InvalidInput(format!("target record {r} out of range")));
            }
        }
        Ok(Self {
            ensemble,
            noise,
            target,
            tol: DEFAULT_TOL,
        })
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// Known-votes histogram and its leakage for one query.
    pub fn charge(&self, query: &[f64]) -> Result<(VoteHistogram, VoteHistogram, f64)> {
        let v = self.ensemble.vote_histogram(query);
        let (v_minus, cost) = match self.target {
            Some(r) => {
                let teacher = self.ensemble.teacher_of(r).expect("checked at construction");
                let vote = self.ensemble.teachers[teacher].predict(query);
                let v_minus = v.without_vote(vote)?;
                let cost = entrywise_leakage(&v_minus, &self.noise, self.tol)?.value_nats;
                (v_minus, cost)
            }
            None => {
                let mut worst: Option<(VoteHistogram, f64)> = None;
                for c in 0..v.classes() {
                    if v.counts()[c] < 1.0 {
                        continue;
                    }
                    let v_minus = v.without_vote(c)?;
                    let cost = entrywise_leakage(&v_minus, &self.noise, self.tol)?.value_nats;
                    if worst.as_ref().is_none_or(|w| cost > w.1) {
                        worst = Some((v_minus, cost));
                    }
                }
                worst.ok_or_else(|| Error::InvalidInput("ensemble cast no votes".into()))?
            }
        };
        Ok((v, v_minus, cost))
    }

    /// Charges the query to `ledger` and, if it is recorded, releases the
    /// noisy argmax drawn with `seed`.
    pub fn answer_query(
        &self,
        id: &str,
        query: &[f64],
        ledger: &mut BudgetLedger,
        seed: u64,
    ) -> Result<QueryAnswer> {
        let (histogram, v_minus, cost) = self.charge(query)?;
        let outcome = ledger.record(id, cost, LeakageMethod::Quadrature)?;
        let label = (!outcome.is_refused()).then(|| noisy_argmax_sample(&histogram, &self.noise, seed));
        Ok(QueryAnswer {
            label,
            leakage_nats: cost,
            refused: outcome.is_refused(),
            histogram,
            v_minus,
        })
    }
}

/// Parameters of a simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub teachers: usize,
    pub gamma: f64,
    #[serde(default)]
    pub budget_nats: Option<f64>,
    #[serde(default = "default_policy")]
    pub policy: Policy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub target: Option<usize>,
}

fn default_policy() -> Policy {
    Policy::AccountOnly
}

/// One line of the per-query trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub query: usize,
    pub label: Option<usize>,
    pub nats: f64,
    pub cum: f64,
    pub refused: bool,
    pub votes: Vec<f64>,
    pub v_minus: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub trace: Vec<TraceRecord>,
    pub ledger: BudgetLedger,
}

impl Simulation {
    pub fn answered(&self) -> usize {
        self.trace.iter().filter(|t| !t.refused).count()
    }

    pub fn halted(&self) -> bool {
        self.trace.last().is_some_and(|t| t.refused)
    }
}

/// Partitions, trains and answers `queries` in order. Under the refusal
/// policy the run stops at the first refused query.
pub fn simulate(dataset: &LabeledDataset, queries: &[Vec<f64>], config: &SimulationConfig) -> Result<Simulation> {
    let ensemble = TeacherEnsemble::train_partitioned(dataset, config.teachers, config.seed)?;
    let aggregator = Aggregator::new(&ensemble, NoiseModel::laplace(config.gamma)?, config.target)?;
    let mut ledger = BudgetLedger::new(config.policy, config.budget_nats)?;
    let mut trace = Vec::with_capacity(queries.len());
    for (i, q) in queries.iter().enumerate() {
        let a = aggregator.answer_query(&format!("q{i}"), q, &mut ledger, batch_seed(config.seed, i as u64))?;
        trace.push(TraceRecord {
            query: i,
            label: a.label,
            nats: a.leakage_nats,
            cum: ledger.cumulative(),
            refused: a.refused,
            votes: a.histogram.counts().to_vec(),
            v_minus: a.v_minus.counts().to_vec(),
        });
        if a.refused {
            break;
        }
    }
    Ok(Simulation { trace, ledger })
}
