//! Globally adaptive Gauss-Kronrod (G7/K15) integration over a finite
//! interval, with caller-supplied breakpoints.
//!
//! The integrands in this crate are only piecewise smooth (Laplace densities
//! and CDFs have kinks), so the interval is first cut at every known kink and
//! the panel with the largest error estimate is bisected until the summed
//! estimate drops below the tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Result};

/// Kronrod abscissae on [-1, 1], descending; the last entry is the centre.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

/// Gauss weights for the odd-indexed Kronrod nodes (XGK[1], XGK[3], XGK[5], centre).
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Default cap on the number of panels.
pub const DEFAULT_MAX_PANELS: usize = 4000;

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Applies the 15-point Kronrod rule and its embedded 7-point Gauss rule on
/// `[a, b]`, returning the Kronrod value and a QUADPACK-style error estimate.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let fc = f(centre);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    let mut abs_k = kronrod.abs();

    for i in 0..7 {
        let dx = half * XGK[i];
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        fv1[i] = f1;
        fv2[i] = f2;
        kronrod += WGK[i] * (f1 + f2);
        abs_k += WGK[i] * (f1.abs() + f2.abs());
        if i % 2 == 1 {
            gauss += WG[i / 2] * (f1 + f2);
        }
    }

    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (fc - mean).abs();
    for i in 0..7 {
        asc += WGK[i] * ((fv1[i] - mean).abs() + (fv2[i] - mean).abs());
    }

    let value = kronrod * half;
    let resabs = abs_k * half.abs();
    let resasc = asc * half.abs();
    let mut err = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (value, err)
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// `breakpoints` may be unsorted and may lie outside the interval; points
/// strictly inside `(a, b)` seed the initial panels.
pub fn integrate<F>(f: F, a: f64, b: f64, breakpoints: &[f64], tol: f64) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    integrate_with_budget(f, a, b, breakpoints, tol, DEFAULT_MAX_PANELS)
}

pub fn integrate_with_budget<F>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: f64,
    max_panels: usize,
) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(Error::InvalidParameter(format!(
            "integration bounds must be finite with a <= b, got [{a}, {b}]"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            panels: 0,
        });
    }

    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&p| p.is_finite() && p > a && p < b)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(a);
    edges.extend(cuts);
    edges.push(b);

    let mut heap = BinaryHeap::with_capacity(edges.len() * 4);
    let mut error = 0.0;
    for w in edges.windows(2) {
        let (v, e) = gk15(&f, w[0], w[1]);
        error += e;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }

    while error > tol {
        if heap.len() >= max_panels.max(edges.len() - 1) {
            return Err(Error::Accuracy {
                requested: tol,
                achieved: error,
            });
        }
        let worst = heap.pop().expect("heap holds at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel can no longer be split in floating point.
            return Err(Error::Accuracy {
                requested: tol,
                achieved: error,
            });
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        error += e1 + e2 - worst.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }

    // Re-sum to shed drift from the running updates.
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
    Ok(Integral {
        value,
        error,
        panels: heap.len(),
    })
}
