//! Per-query leakage accounting.
//!
//! Leakage about one entry adds up linearly over queries, so a ledger only
//! needs the running sum. Costs are in nats.

use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::laplace::total_bound;
use crate::rnm::{entrywise_leakage, LeakageMethod, VoteHistogram, DEFAULT_TOL, MIN_TOL};
use crate::{Error, NoiseModel, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Record every query.
    AccountOnly,
    /// Refuse any query whose cost would take the total past the budget.
    RefuseOverBudget,
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "account_only" | "account-only" => Ok(Policy::AccountOnly),
            "refuse_over_budget" | "refuse-over-budget" => Ok(Policy::RefuseOverBudget),
            other => Err(Error::InvalidParameter(format!("unknown policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub id: String,
    pub nats: f64,
    pub method: LeakageMethod,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecordOutcome {
    Recorded { cumulative: f64 },
    /// The ledger is unchanged.
    Refused { cumulative: f64, requested: f64 },
}

impl RecordOutcome {
    pub fn is_refused(&self) -> bool {
        matches!(self, RecordOutcome::Refused { .. })
    }

    pub fn cumulative(&self) -> f64 {
        match *self {
            RecordOutcome::Recorded { cumulative } | RecordOutcome::Refused { cumulative, .. } => cumulative,
        }
    }
}

/// One line of the persisted ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub id: String,
    pub nats: f64,
    pub cum: f64,
    pub refused: bool,
}

/// Ordered record of answered queries and their leakage.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetLedger {
    entries: Vec<LedgerEntry>,
    cumulative: f64,
    budget: Option<f64>,
    policy: Policy,
}

impl Default for BudgetLedger {
    fn default() -> Self {
        Self::account_only()
    }
}

impl BudgetLedger {
    pub fn new(policy: Policy, budget_nats: Option<f64>) -> Result<Self> {
        if let Some(b) = budget_nats {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::InvalidParameter(format!("budget must be positive, got {b}")));
            }
        }
        if policy == Policy::RefuseOverBudget && budget_nats.is_none() {
            return Err(Error::InvalidParameter("refusal policy needs a budget".into()));
        }
        Ok(Self {
            entries: Vec::new(),
            cumulative: 0.0,
            budget: budget_nats,
            policy,
        })
    }

    pub fn account_only() -> Self {
        Self {
            entries: Vec::new(),
            cumulative: 0.0,
            budget: None,
            policy: Policy::AccountOnly,
        }
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn cumulative(&self) -> f64 {
        self.cumulative
    }

    pub fn budget(&self) -> Option<f64> {
        self.budget
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    /// Budget left, if one is set.
    pub fn remaining(&self) -> Option<f64> {
        self.budget.map(|b| (b - self.cumulative).max(0.0))
    }

    pub fn record(&mut self, id: impl Into<String>, nats: f64, method: LeakageMethod) -> Result<RecordOutcome> {
        if !(nats.is_finite() && nats >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "leakage must be finite and nonnegative, got {nats}"
            )));
        }
        if self.policy == Policy::RefuseOverBudget {
            let budget = self.budget.expect("refusal policy always carries a budget");
            if self.cumulative + nats > budget {
                return Ok(RecordOutcome::Refused {
                    cumulative: self.cumulative,
                    requested: nats,
                });
            }
        }
        self.cumulative += nats;
        self.entries.push(LedgerEntry {
            id: id.into(),
            nats,
            method,
        });
        Ok(RecordOutcome::Recorded {
            cumulative: self.cumulative,
        })
    }

    /// Records and appends the outcome as one JSON line to `log`.
    pub fn record_logged<W: Write>(
        &mut self,
        id: impl Into<String>,
        nats: f64,
        method: LeakageMethod,
        log: &mut W,
    ) -> Result<RecordOutcome> {
        let id = id.into();
        let outcome = self.record(id.clone(), nats, method)?;
        let line = LedgerRecord {
            id,
            nats,
            cum: outcome.cumulative(),
            refused: outcome.is_refused(),
        };
        serde_json::to_writer(&mut *log, &line)?;
        log.write_all(b"\n")?;
        Ok(outcome)
    }

    /// Rebuilds a ledger from a JSON-lines log, checking the stored running
    /// totals and refusal flags against a fresh replay.
    pub fn replay<R: BufRead>(log: R, policy: Policy, budget_nats: Option<f64>) -> Result<Self> {
        let mut ledger = Self::new(policy, budget_nats)?;
        for (i, line) in log.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LedgerRecord = serde_json::from_str(&line)?;
            if rec.refused {
                continue;
            }
            let outcome = ledger.record(rec.id, rec.nats, LeakageMethod::Quadrature)?;
            if outcome.is_refused() || (outcome.cumulative() - rec.cum).abs() > 1e-12 {
                return Err(Error::Consistency(format!(
                    "ledger line {} does not replay (stored cum {}, replayed {})",
                    i + 1,
                    rec.cum,
                    outcome.cumulative()
                )));
            }
        }
        Ok(ledger)
    }
}

/// A-priori budget needed to answer `k` queries with Laplace rate `gamma`.
pub fn worst_case_plan(k: u64, gamma: f64) -> Result<f64> {
    total_bound(k, gamma)
}

/// Result of [`calibrate_gamma`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub gamma: f64,
    pub leakage_nats: f64,
    pub evaluations: usize,
}

const MAX_GAMMA: f64 = 1e4;
const MAX_BISECTIONS: usize = 200;

/// Laplace rate whose entrywise leakage at `v_minus` equals `target_nats`
/// within `tol`.
///
/// Leakage never exceeds `γ`, so `γ = target` is a lower bracket; the upper
/// end doubles until it overshoots. Bisection then checks that every new
/// evaluation sits between the bracket values.
pub fn calibrate_gamma(v_minus: &VoteHistogram, target_nats: f64, tol: f64) -> Result<Calibration> {
    let m = v_minus.classes();
    if !(target_nats > 0.0 && target_nats < (m as f64).ln()) {
        return Err(Error::InvalidParameter(format!(
            "target must lie in (0, log {m}), got {target_nats}"
        )));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let quad_tol = (tol / 10.0).clamp(MIN_TOL, DEFAULT_TOL);

    let mut evaluations = 0;
    let mut eval = |gamma: f64| -> Result<(f64, f64)> {
        evaluations += 1;
        let r = entrywise_leakage(v_minus, &NoiseModel::laplace(gamma)?, quad_tol)?;
        Ok((r.value_nats, r.error_estimate))
    };

    let mut lo = target_nats;
    let (mut f_lo, mut e_lo) = eval(lo)?;
    if (f_lo - target_nats).abs() <= tol {
        return Ok(Calibration {
            gamma: lo,
            leakage_nats: f_lo,
            evaluations,
        });
    }

    let mut hi = 2.0 * lo;
    let (mut f_hi, mut e_hi) = eval(hi)?;
    while f_hi < target_nats {
        if f_hi + e_hi < f_lo - e_lo {
            return Err(Error::Consistency(format!(
                "leakage decreased from {f_lo} at gamma {lo} to {f_hi} at gamma {hi}"
            )));
        }
        if hi >= MAX_GAMMA {
            return Err(Error::NoSolution(format!(
                "leakage stays below {target_nats} up to gamma {hi} (reached {f_hi})"
            )));
        }
        (lo, f_lo, e_lo) = (hi, f_hi, e_hi);
        hi *= 2.0;
        (f_hi, e_hi) = eval(hi)?;
    }

    for _ in 0..MAX_BISECTIONS {
        if (f_hi - target_nats).abs() <= tol {
            return Ok(Calibration {
                gamma: hi,
                leakage_nats: f_hi,
                evaluations,
            });
        }
        let mid = 0.5 * (lo + hi);
        let (f_mid, e_mid) = eval(mid)?;
        if f_mid + e_mid < f_lo - e_lo || f_mid - e_mid > f_hi + e_hi {
            return Err(Error::Consistency(format!(
                "leakage not monotone on [{lo}, {hi}]: {f_lo}, {f_mid}, {f_hi}"
            )));
        }
        if (f_mid - target_nats).abs() <= tol {
            return Ok(Calibration {
                gamma: mid,
                leakage_nats: f_mid,
                evaluations,
            });
        }
        if f_mid < target_nats {
            (lo, f_lo, e_lo) = (mid, f_mid, e_mid);
        } else {
            (hi, f_hi, e_hi) = (mid, f_mid, e_mid);
        }
    }
    Err(Error::NoSolution(format!(
        "bisection did not reach tolerance {tol} (bracket [{lo}, {hi}])"
    )))
}
