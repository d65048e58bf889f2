//! Univariate noise distributions used by the noisy-argmax aggregator.
//!
//! A [`NoiseModel`] is an immutable value exposing density, CDF and quantile.
//! Laplace noise is parametrised by its rate `gamma` (scale `1/gamma`), so a
//! smaller `gamma` means more noise.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::{Error, Result};

/// Probability mass left out in each tail when an integral over the noise is
/// truncated to a finite interval.
pub const TAIL_MASS: f64 = 1e-13;

/// Slack allowed by [`log_concavity_probe`].
pub const PROBE_SLACK: f64 = 1e-12;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Laplace,
    Gaussian,
    Custom,
}

/// Serializable description of a built-in noise model, as it appears in
/// configuration files: `{"kind":"laplace","gamma":0.1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseSpec {
    Laplace { gamma: f64 },
    Gaussian { sigma: f64 },
}

impl NoiseSpec {
    pub fn to_model(&self) -> Result<NoiseModel> {
        match *self {
            NoiseSpec::Laplace { gamma } => NoiseModel::laplace(gamma),
            NoiseSpec::Gaussian { sigma } => NoiseModel::gaussian(sigma),
        }
    }
}

/// A user-supplied distribution. All three maps must describe the same law.
#[derive(Clone)]
pub struct CustomNoise {
    pub name: String,
    /// A characteristic width, used only for reporting.
    pub scale: f64,
    pub density: RealFn,
    pub cumulative: RealFn,
    pub quantile: RealFn,
    /// Points where the density or CDF is not smooth.
    pub kinks: Vec<f64>,
}

#[derive(Clone)]
enum Shape {
    Laplace { gamma: f64 },
    Gaussian { sigma: f64 },
    Custom(Arc<CustomNoise>),
}

/// Zero-centred univariate noise.
#[derive(Clone)]
pub struct NoiseModel {
    shape: Shape,
    log_concave: bool,
}

impl fmt::Debug for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.shape {
            Shape::Laplace { gamma } => write!(f, "Laplace(gamma={gamma})"),
            Shape::Gaussian { sigma } => write!(f, "Gaussian(sigma={sigma})"),
            Shape::Custom(c) => write!(
                f,
                "Custom({}, log_concave={})",
                c.name, self.log_concave
            ),
        }
    }
}

fn positive(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be a positive finite real, got {x}"
        )))
    }
}

impl NoiseModel {
    /// Laplace noise with rate `gamma`, i.e. density `(gamma/2) exp(-gamma |t|)`.
    pub fn laplace(gamma: f64) -> Result<Self> {
        Ok(Self {
            shape: Shape::Laplace {
                gamma: positive("gamma", gamma)?,
            },
            log_concave: true,
        })
    }

    /// Zero-mean Gaussian noise with standard deviation `sigma`.
    pub fn gaussian(sigma: f64) -> Result<Self> {
        Ok(Self {
            shape: Shape::Gaussian {
                sigma: positive("sigma", sigma)?,
            },
            log_concave: true,
        })
    }

    /// Wraps a user-supplied distribution. It starts out unattested; call
    /// [`NoiseModel::attest_log_concave`] to enable log-concave shortcuts.
    pub fn custom(noise: CustomNoise) -> Result<Self> {
        positive("scale", noise.scale)?;
        Ok(Self {
            shape: Shape::Custom(Arc::new(noise)),
            log_concave: false,
        })
    }

    /// Marks a custom model as log-concave after probing density and CDF on a
    /// grid spanning its central mass.
    pub fn attest_log_concave(mut self) -> Result<Self> {
        if self.log_concave {
            return Ok(self);
        }
        let lo = self.quantile(1e-6);
        let hi = self.quantile(1.0 - 1e-6);
        let n = 200;
        let grid: Vec<f64> = (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .collect();
        let delta = (hi - lo) / (4 * n) as f64;
        if log_concavity_probe(&self, &grid, delta)? {
            self.log_concave = true;
            Ok(self)
        } else {
            Err(Error::InvalidInput(
                "log-concavity probe failed; model cannot be attested".into(),
            ))
        }
    }

    pub fn kind(&self) -> NoiseKind {
        match self.shape {
            Shape::Laplace { .. } => NoiseKind::Laplace,
            Shape::Gaussian { .. } => NoiseKind::Gaussian,
            Shape::Custom(_) => NoiseKind::Custom,
        }
    }

    /// Laplace scale `1/gamma`, Gaussian `sigma`, or the custom scale.
    pub fn scale(&self) -> f64 {
        match &self.shape {
            Shape::Laplace { gamma } => 1.0 / gamma,
            Shape::Gaussian { sigma } => *sigma,
            Shape::Custom(c) => c.scale,
        }
    }

    /// The Laplace rate, if this is Laplace noise.
    pub fn gamma(&self) -> Option<f64> {
        match self.shape {
            Shape::Laplace { gamma } => Some(gamma),
            _ => None,
        }
    }

    pub fn spec(&self) -> Option<NoiseSpec> {
        match self.shape {
            Shape::Laplace { gamma } => Some(NoiseSpec::Laplace { gamma }),
            Shape::Gaussian { sigma } => Some(NoiseSpec::Gaussian { sigma }),
            Shape::Custom(_) => None,
        }
    }

    pub fn is_log_concave(&self) -> bool {
        self.log_concave
    }

    pub fn density(&self, t: f64) -> f64 {
        match &self.shape {
            Shape::Laplace { gamma } => 0.5 * gamma * (-gamma * t.abs()).exp(),
            Shape::Gaussian { sigma } => {
                let z = t / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
            }
            Shape::Custom(c) => (c.density)(t),
        }
    }

    pub fn cumulative(&self, t: f64) -> f64 {
        match &self.shape {
            Shape::Laplace { gamma } => {
                if t < 0.0 {
                    0.5 * (gamma * t).exp()
                } else {
                    1.0 - 0.5 * (-gamma * t).exp()
                }
            }
            Shape::Gaussian { sigma } => 0.5 * erfc(-t / sigma * FRAC_1_SQRT_2),
            Shape::Custom(c) => (c.cumulative)(t),
        }
    }

    /// Inverse CDF on `(0, 1)`; returns the infinite endpoints at 0 and 1.
    pub fn quantile(&self, p: f64) -> f64 {
        if p.is_nan() || !(0.0..=1.0).contains(&p) {
            return f64::NAN;
        }
        match &self.shape {
            Shape::Laplace { gamma } => {
                if p < 0.5 {
                    (2.0 * p).ln() / gamma
                } else {
                    -(2.0 * (1.0 - p)).ln() / gamma
                }
            }
            Shape::Gaussian { sigma } => {
                if p == 0.0 {
                    return f64::NEG_INFINITY;
                }
                if p == 1.0 {
                    return f64::INFINITY;
                }
                let mut t = -SQRT_2 * sigma * erfc_inv(2.0 * p);
                // One Newton step against the CDF polishes the rational approximation.
                let d = self.density(t);
                if d > 0.0 {
                    t -= (self.cumulative(t) - p) / d;
                }
                t
            }
            Shape::Custom(c) => (c.quantile)(p),
        }
    }

    /// Points where the density or CDF fails to be smooth.
    pub fn kinks(&self) -> &[f64] {
        match &self.shape {
            Shape::Laplace { .. } => &[0.0],
            Shape::Gaussian { .. } => &[],
            Shape::Custom(c) => &c.kinks,
        }
    }

    /// Finite interval holding all but [`TAIL_MASS`] in each tail.
    pub fn truncation(&self) -> (f64, f64) {
        match self.shape {
            Shape::Laplace { .. } | Shape::Gaussian { .. } => {
                let lo = self.quantile(TAIL_MASS);
                (lo, -lo)
            }
            Shape::Custom(_) => (self.quantile(TAIL_MASS), self.quantile(1.0 - TAIL_MASS)),
        }
    }

    /// Draws one value by inverse-CDF transform of a uniform on `(0, 1)`.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(open_unit(rng))
    }
}

/// Uniform draw on the open interval `(0, 1)` with 53 random bits.
pub(crate) fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    ((rng.next_u64() >> 11) as f64 + 0.5) * SCALE
}

/// Checks `f(x1 + delta) f(x2) >= f(x1) f(x2 + delta)` for every pair
/// `x1 <= x2` of the grid, for both the density and the CDF of `model`.
pub fn log_concavity_probe(model: &NoiseModel, grid: &[f64], delta: f64) -> Result<bool> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("probe grid is empty".into()));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidInput("probe grid must be sorted ascending".into()));
    }

    let holds = |f: &dyn Fn(f64) -> f64| {
        let at: Vec<(f64, f64)> = grid.iter().map(|&x| (f(x), f(x + delta))).collect();
        for i in 0..at.len() {
            for k in i..at.len() {
                let (g1, g1d) = at[i];
                let (g2, g2d) = at[k];
                if g1d * g2 < g1 * g2d - PROBE_SLACK {
                    return false;
                }
            }
        }
        true
    };

    Ok(holds(&|t| model.density(t)) && holds(&|t| model.cumulative(t)))
}
