//! Pointwise conditional maximal leakage (PCML) toolkit.
//!
//! Quantifies how much a single training entry leaks through a
//! Report-Noisy-Max aggregator (as used by PATE teacher ensembles) and
//! through arbitrary finite channels. All leakage values are in nats.
//!
//! The crate is organised bottom-up:
//!
//! * [`quadrature`]: adaptive Gauss-Kronrod integration with seeded breakpoints.
//! * [`noise`]: univariate noise models (Laplace, Gaussian, custom).
//! * [`rnm`]: win probabilities and entrywise leakage of noisy argmax.
//! * [`laplace`]: closed forms for Laplace noise and the per-query bound.
//! * [`majorization`]: the majorization order and extremal histograms.
//! * [`channel`]: finite-channel leakage, composition, post-processing and
//!   the MAP-adversary oracle.
//! * [`mc`]: seeded Monte Carlo estimators used as independent oracles.
//! * [`accountant`]: per-query budget ledger and noise calibration.
//! * [`pate`]: a small deterministic teacher-ensemble simulator.
//! * [`verify`]: named property suites shared by the CLI and tests.

pub mod accountant;
pub mod channel;
mod error;
pub mod laplace;
pub mod majorization;
pub mod mc;
pub mod noise;
pub mod pate;
pub mod quadrature;
pub mod rnm;
pub mod verify;

pub use error::{Error, Result};
pub use noise::{NoiseKind, NoiseModel, NoiseSpec};
pub use rnm::{LeakageMethod, LeakageReport, VoteHistogram};
