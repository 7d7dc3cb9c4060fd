//! Quadrature on (0,1), bracketed root finding and sign-region detection.
//!
//! Integrals over ranks are evaluated with composite Gauss-Legendre rules laid
//! out in probit space: a rank `t` is written as `Phi(z)` and the panels are
//! uniform in `z`. Quantiles of unbounded families are smooth in `z`, so the
//! tails are resolved without special treatment.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use statrs::function::erf;
use thiserror::Error;

/// Distance kept from each endpoint of (0,1).
pub const EPS: f64 = 1e-12;
/// Gauss-Legendre nodes per panel.
pub const NODES_PER_PANEL: usize = 16;
/// Panels used for integrals over the whole unit interval.
pub const FULL_PANELS: usize = 64;
/// Panels used for integrals over sub-intervals.
pub const SUB_PANELS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("integrand is not finite at rank {at}")]
    NonFiniteIntegrand { at: f64 },
    #[error("no sign change on [{lo}, {hi}] (f = {f_lo}, {f_hi})")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("root finder did not converge in {0} iterations")]
    MaxIterations(usize),
}

fn legendre16() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = NonZeroUsize::new(NODES_PER_PANEL).unwrap();
        GaussLegendre::new(n).as_node_weight_pairs().to_vec()
    })
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal quantile. The inverse complementary error function gives
/// the starting value and one Halley step polishes it to near machine
/// precision, including deep in the tails.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = -SQRT_2 * erf::erfc_inv(2.0 * p);
    let pdf = norm_pdf(x);
    if pdf == 0.0 {
        return x;
    }
    // refine on the smaller tail to avoid cancellation
    let e = if p < 0.5 {
        (norm_cdf(x) - p) / pdf
    } else {
        ((1.0 - p) - 0.5 * libm::erfc(x * FRAC_1_SQRT_2)) / pdf
    };
    x - e / (1.0 + 0.5 * x * e)
}

/// A fixed set of quadrature nodes in (0,1) with positive weights.
#[derive(Debug, Clone)]
pub struct Grid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    clip: f64,
}

impl Grid {
    /// Composite Gauss-Legendre in probit space on `[max(lo,EPS), min(hi,1-EPS)]`.
    pub fn probit(lo: f64, hi: f64, panels: usize) -> Self {
        let mut nodes = Vec::with_capacity(panels * NODES_PER_PANEL);
        let mut weights = Vec::with_capacity(panels * NODES_PER_PANEL);
        for_each_probit_node(lo, hi, panels, |t, w| {
            nodes.push(t);
            weights.push(w);
        });
        Grid { nodes, weights, clip: EPS }
    }

    /// The standard full-range grid: 64 panels of 16 nodes.
    pub fn full() -> Self {
        Self::probit(0.0, 1.0, FULL_PANELS)
    }

    /// Composite Gauss-Legendre with panels uniform in the rank itself.
    pub fn uniform(clip: f64, panels: usize) -> Self {
        let rule = legendre16();
        let (a, b) = (clip, 1.0 - clip);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * NODES_PER_PANEL);
        let mut weights = Vec::with_capacity(panels * NODES_PER_PANEL);
        for k in 0..panels {
            let mid = a + (k as f64 + 0.5) * h;
            for &(x, w) in rule {
                nodes.push(mid + 0.5 * h * x);
                weights.push(0.5 * h * w);
            }
        }
        Grid { nodes, weights, clip }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Visits the probit-space Gauss-Legendre nodes of `[lo, hi]` with their weights.
pub fn for_each_probit_node(lo: f64, hi: f64, panels: usize, mut visit: impl FnMut(f64, f64)) {
    for_each_probit_node_z(lo, hi, panels, |t, _, w| visit(t, w));
}

/// As [`for_each_probit_node`], also passing `z = Phi^-1(t)` to the visitor.
pub fn for_each_probit_node_z(lo: f64, hi: f64, panels: usize, mut visit: impl FnMut(f64, f64, f64)) {
    let lo = lo.max(EPS);
    let hi = hi.min(1.0 - EPS);
    if hi <= lo || panels == 0 {
        return;
    }
    let za = norm_quantile(lo);
    let zb = norm_quantile(hi);
    let h = (zb - za) / panels as f64;
    for k in 0..panels {
        let mid = za + (k as f64 + 0.5) * h;
        for &(x, w) in legendre16() {
            let z = mid + 0.5 * h * x;
            visit(norm_cdf(z), z, 0.5 * h * w * norm_pdf(z));
        }
    }
}

/// `sum w_i f(t_i)` over a grid.
pub fn integrate(f: impl Fn(f64) -> f64, grid: &Grid) -> Result<f64, NumericsError> {
    let mut total = 0.0;
    for (&t, &w) in grid.nodes.iter().zip(&grid.weights) {
        let v = f(t);
        if !v.is_finite() {
            return Err(NumericsError::NonFiniteIntegrand { at: t });
        }
        total += w * v;
    }
    Ok(total)
}

/// Integral of `f` over `[lo, hi]`, split at `breaks` so that discontinuities
/// of the integrand fall on panel boundaries. Non-finite values propagate.
pub fn quad(f: impl Fn(f64) -> f64, lo: f64, hi: f64, breaks: &[f64], panels: usize) -> f64 {
    quad_z(|t, _| f(t), lo, hi, breaks, panels)
}

/// As [`quad`] with the integrand also receiving `z = Phi^-1(t)`.
pub fn quad_z(f: impl Fn(f64, f64) -> f64, lo: f64, hi: f64, breaks: &[f64], panels: usize) -> f64 {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&b| b > lo && b < hi).collect();
    cuts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut a = lo;
    for b in cuts.into_iter().chain(std::iter::once(hi)) {
        if b > a {
            for_each_probit_node_z(a, b, panels, |t, z, w| total += w * f(t, z));
        }
        a = b;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Bracket {
    pub fn new(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<Self, NumericsError> {
        let (f_lo, f_hi) = (f(lo), f(hi));
        let b = Bracket { lo, hi, f_lo, f_hi };
        if lo < hi && (f_lo == 0.0 || f_hi == 0.0 || (f_lo < 0.0) != (f_hi < 0.0)) {
            Ok(b)
        } else {
            Err(NumericsError::NoSignChange { lo, hi, f_lo, f_hi })
        }
    }
}

pub const ROOT_MAX_ITER: usize = 200;

/// Bisection root of `f` inside a valid bracket.
pub fn find_root(f: impl Fn(f64) -> f64, bracket: Bracket, tol: f64) -> Result<f64, NumericsError> {
    let Bracket { mut lo, mut hi, f_lo, f_hi } = bracket;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    let lo_neg = f_lo < 0.0;
    for _ in 0..ROOT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(NumericsError::MaxIterations(ROOT_MAX_ITER))
}

/// Scan points for sign detection: a uniform midpoint grid merged with a grid
/// uniform in probit space, so that crossings very close to 0 or 1 are seen.
pub fn scan_points(n: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let (za, zb) = (norm_quantile(1e-10), norm_quantile(1.0 - 1e-10));
    pts.extend((0..n).map(|i| norm_cdf(za + (zb - za) * (i as f64 + 0.5) / n as f64)));
    pts.retain(|&t| t > 0.0 && t < 1.0);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Maximal open intervals of (0,1) on which `f < 0`, with interior endpoints
/// located by bisection between adjacent scan points.
pub fn find_sign_regions(f: impl Fn(f64) -> f64, points: &[f64], refine_tol: f64) -> Vec<(f64, f64)> {
    let neg: Vec<bool> = points.iter().map(|&t| f(t) < 0.0).collect();
    let refine = |mut lo: f64, mut hi: f64| {
        let lo_neg = f(lo) < 0.0;
        while hi - lo > refine_tol {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if (f(mid) < 0.0) == lo_neg {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < points.len() {
        if !neg[i] {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < points.len() && neg[j + 1] {
            j += 1;
        }
        let a = if i == 0 { 0.0 } else { refine(points[i - 1], points[i]) };
        let b = if j + 1 == points.len() { 1.0 } else { refine(points[j], points[j + 1]) };
        out.push((a, b));
        i = j + 1;
    }
    out
}
