//! Utility functions, their concave envelopes and conjugates.
//!
//! Every utility is a list of smooth branches covering its domain. The
//! concave envelope is stored as an ordered list of pieces that either touch
//! a concave branch (`Contact`) or span a non-concave stretch with a straight
//! line (`Bridge`). The conjugate `I(y) = inf argmax_x {U(x) - x y}` and its
//! generalized inverse are read off that list.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{find_root, Bracket, NumericsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UtilityError {
    #[error("invalid utility parameters: {0}")]
    Parameters(String),
    #[error("wealth {0} is outside the utility domain")]
    OutOfDomain(f64),
    #[error("marginal utility diverges at the reference point {0}")]
    AtKink(f64),
    #[error("utility has no finite concave envelope (non-concave with unbounded domain)")]
    NoFiniteEnvelope,
    #[error("operation requires an S-shaped utility")]
    NotSShaped,
    #[error("utility is not increasing near {0}")]
    NotIncreasing(f64),
    #[error("tangent point did not converge: {0}")]
    NoConvergence(#[from] NumericsError),
}

fn one() -> f64 {
    1.0
}

fn minus_one() -> f64 {
    -1.0
}

/// Utility descriptor as it appears in experiment files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum UtilitySpec {
    /// `x^p / p` on `x > 0`
    Power { p: f64 },
    /// `ln x` on `x > 0`
    Log,
    /// `-exp(-p x) / p`, on the whole line unless `floor` bounds the domain.
    Exponential {
        p: f64,
        #[serde(default)]
        floor: Option<f64>,
    },
    /// `gain * x^p / p` for `x >= 0` and `-k (-x)^q` for `x < 0`, optionally
    /// restricted to `x >= liquidation`.
    SShaped {
        p: f64,
        q: f64,
        k: f64,
        #[serde(default = "one")]
        gain: f64,
        #[serde(default)]
        liquidation: Option<f64>,
    },
    /// Four-branch utility with kinks at 0, 1 and 2 on `[liquidation, inf)`:
    /// `(x-1)^p1` on `x >= 2`, `lambda1 (x-1)^q1` on `[1,2)`,
    /// `x^p2 + c` on `[0,1)` and `c - lambda2 (-x)^q2` below 0.
    Piecewise4 {
        p1: f64,
        q1: f64,
        p2: f64,
        q2: f64,
        lambda1: f64,
        lambda2: f64,
        c: f64,
        #[serde(default = "minus_one")]
        liquidation: f64,
    },
}

/// A smooth curve; `Pow` is `offset + dir * coef * (dir * (x - x0))^e`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Curve {
    Pow { x0: f64, dir: f64, coef: f64, e: f64, offset: f64 },
    Log,
    Exp { p: f64 },
}

impl Curve {
    fn value(&self, x: f64) -> f64 {
        match *self {
            Curve::Pow { x0, dir, coef, e, offset } => offset + dir * coef * (dir * (x - x0)).max(0.0).powf(e),
            Curve::Log => x.ln(),
            Curve::Exp { p } => -(-p * x).exp() / p,
        }
    }

    fn marginal(&self, x: f64) -> f64 {
        match *self {
            Curve::Pow { x0, dir, coef, e, .. } => coef * e * (dir * (x - x0)).max(0.0).powf(e - 1.0),
            Curve::Log => 1.0 / x,
            Curve::Exp { p } => (-p * x).exp(),
        }
    }

    /// Inverse of the marginal on a concave curve.
    fn inv_marginal(&self, w: f64) -> f64 {
        match *self {
            Curve::Pow { x0, dir, coef, e, .. } => x0 + dir * (w / (coef * e)).powf(1.0 / (e - 1.0)),
            Curve::Log => 1.0 / w,
            Curve::Exp { p } => -w.ln() / p,
        }
    }

    fn is_concave(&self) -> bool {
        match *self {
            Curve::Pow { dir, e, .. } => dir > 0.0 && e < 1.0,
            Curve::Log | Curve::Exp { .. } => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Branch {
    lo: f64,
    hi: f64,
    curve: Curve,
}

/// One piece of the concave envelope on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Piece {
    Contact { branch: usize, lo: f64, hi: f64 },
    Bridge { lo: f64, hi: f64, slope: f64 },
}

/// Summary of the envelope near the lower boundary of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeData {
    /// Slope of the first bridge, when the envelope starts with one.
    pub kappa: Option<f64>,
    /// Right end of that bridge.
    pub c_liq: Option<f64>,
    pub finite: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utility {
    spec: UtilitySpec,
    lower: f64,
    lower_open: bool,
    branches: Vec<Branch>,
    pieces: Option<Vec<Piece>>,
}

impl Utility {
    pub fn new(spec: UtilitySpec) -> Result<Self, UtilityError> {
        let bad = |m: &str| Err(UtilityError::Parameters(m.to_string()));
        let inf = f64::INFINITY;
        let (lower, lower_open, branches) = match spec {
            UtilitySpec::Power { p } => {
                if !(p < 1.0 && p != 0.0 && p.is_finite()) {
                    return bad("power exponent must satisfy p < 1, p != 0");
                }
                let curve = Curve::Pow { x0: 0.0, dir: 1.0, coef: 1.0 / p, e: p, offset: 0.0 };
                let open = p < 0.0;
                (0.0, open, vec![Branch { lo: 0.0, hi: inf, curve }])
            }
            UtilitySpec::Log => (0.0, true, vec![Branch { lo: 0.0, hi: inf, curve: Curve::Log }]),
            UtilitySpec::Exponential { p, floor } => {
                if !(p > 0.0 && p.is_finite()) {
                    return bad("exponential risk aversion must be positive");
                }
                let lo = floor.unwrap_or(f64::NEG_INFINITY);
                if lo.is_nan() {
                    return bad("floor must be a number");
                }
                (lo, false, vec![Branch { lo, hi: inf, curve: Curve::Exp { p } }])
            }
            UtilitySpec::SShaped { p, q, k, gain, liquidation } => {
                if !(p > 0.0 && p < 1.0) || !(q > 0.0 && q < 1.0) {
                    return bad("s-shaped exponents must lie in (0,1)");
                }
                if !(k >= 0.0 && k.is_finite()) || !(gain > 0.0 && gain.is_finite()) {
                    return bad("loss aversion must be nonnegative and gain positive");
                }
                if let Some(l) = liquidation {
                    if !(l < 0.0) {
                        return bad("liquidation boundary must be below the reference point 0");
                    }
                }
                let lo = liquidation.unwrap_or(f64::NEG_INFINITY);
                let loss = Curve::Pow { x0: 0.0, dir: -1.0, coef: k, e: q, offset: 0.0 };
                let gains = Curve::Pow { x0: 0.0, dir: 1.0, coef: gain / p, e: p, offset: 0.0 };
                (lo, false, vec![Branch { lo, hi: 0.0, curve: loss }, Branch { lo: 0.0, hi: inf, curve: gains }])
            }
            UtilitySpec::Piecewise4 { p1, q1, p2, q2, lambda1, lambda2, c, liquidation } => {
                if !(p1 > 0.0 && p1 < 1.0 && p2 > 0.0 && p2 < 1.0) {
                    return bad("p1 and p2 must lie in (0,1)");
                }
                if !(q1 > 0.0 && q2 > 0.0 && lambda1 > 0.0 && lambda2 > 0.0) {
                    return bad("q1, q2, lambda1, lambda2 must be positive");
                }
                if !(liquidation < 0.0) || !c.is_finite() {
                    return bad("liquidation boundary must be negative and c finite");
                }
                let pow = |x0, dir, coef, e, offset| Curve::Pow { x0, dir, coef, e, offset };
                (
                    liquidation,
                    false,
                    vec![
                        Branch { lo: liquidation, hi: 0.0, curve: pow(0.0, -1.0, lambda2, q2, c) },
                        Branch { lo: 0.0, hi: 1.0, curve: pow(0.0, 1.0, 1.0, p2, c) },
                        Branch { lo: 1.0, hi: 2.0, curve: pow(1.0, 1.0, lambda1, q1, 0.0) },
                        Branch { lo: 2.0, hi: inf, curve: pow(1.0, 1.0, 1.0, p1, 0.0) },
                    ],
                )
            }
        };
        let mut u = Utility { spec, lower, lower_open, branches, pieces: None };
        u.check_increasing()?;
        u.pieces = u.build_envelope()?;
        Ok(u)
    }

    pub fn spec(&self) -> &UtilitySpec {
        &self.spec
    }

    /// Lowest admissible wealth (may be `-inf`).
    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn is_s_shaped(&self) -> bool {
        matches!(self.spec, UtilitySpec::SShaped { .. })
    }

    pub fn is_concave(&self) -> bool {
        self.branches.iter().all(|b| b.curve.is_concave())
    }

    fn in_domain(&self, x: f64) -> bool {
        x.is_finite() && (x > self.lower || (x == self.lower && !self.lower_open))
    }

    fn branch_at(&self, x: f64) -> &Branch {
        let k = self.branches.partition_point(|b| b.lo <= x);
        &self.branches[k.max(1) - 1]
    }

    /// `U(x)`; `-inf` outside the domain so that objective integrals expose it.
    pub fn value(&self, x: f64) -> f64 {
        if !self.in_domain(x) {
            return f64::NEG_INFINITY;
        }
        self.branch_at(x).curve.value(x)
    }

    pub fn utility_value(&self, x: f64) -> Result<f64, UtilityError> {
        if !self.in_domain(x) {
            return Err(UtilityError::OutOfDomain(x));
        }
        Ok(self.value(x))
    }

    pub fn marginal(&self, x: f64) -> Result<f64, UtilityError> {
        if !self.in_domain(x) {
            return Err(UtilityError::OutOfDomain(x));
        }
        if self.is_s_shaped() && x == 0.0 {
            return Err(UtilityError::AtKink(0.0));
        }
        Ok(self.branch_at(x).curve.marginal(x))
    }

    pub fn pieces(&self) -> Option<&[Piece]> {
        self.pieces.as_deref()
    }

    pub fn require_envelope(&self) -> Result<(), UtilityError> {
        self.pieces.as_ref().map(|_| ()).ok_or(UtilityError::NoFiniteEnvelope)
    }

    pub fn envelope_data(&self) -> EnvelopeData {
        match self.pieces.as_deref() {
            None => EnvelopeData { kappa: None, c_liq: None, finite: false },
            Some([Piece::Bridge { hi, slope, .. }, ..]) => {
                EnvelopeData { kappa: Some(*slope), c_liq: Some(*hi), finite: true }
            }
            Some(_) => EnvelopeData { kappa: None, c_liq: None, finite: true },
        }
    }

    /// `I(y) = inf argmax_x {U(x) - x y}`; nonincreasing and right-continuous.
    /// Returns NaN when the envelope is not finite.
    pub fn conjugate(&self, y: f64) -> f64 {
        let Some(pieces) = self.pieces.as_deref() else {
            return f64::NAN;
        };
        if y.is_nan() {
            return f64::NAN;
        }
        let mut last = self.lower;
        for piece in pieces {
            match *piece {
                Piece::Bridge { lo, hi, slope } => {
                    if y >= slope {
                        return lo;
                    }
                    last = hi;
                }
                Piece::Contact { branch, lo, hi } => {
                    let curve = self.branches[branch].curve;
                    let m_lo = if lo.is_finite() { curve.marginal(lo) } else { f64::INFINITY };
                    if y >= m_lo {
                        return lo;
                    }
                    if hi.is_infinite() || y > curve.marginal(hi) {
                        return curve.inv_marginal(y).clamp(lo, hi);
                    }
                    last = hi;
                }
            }
        }
        last
    }

    pub fn try_conjugate(&self, y: f64) -> Result<f64, UtilityError> {
        self.require_envelope()?;
        Ok(self.conjugate(y))
    }

    /// `sup {y : I(y) >= x}`, the left derivative of the envelope at `x`.
    /// Infinite at or below the lower boundary.
    pub fn threshold(&self, x: f64) -> f64 {
        let Some(pieces) = self.pieces.as_deref() else {
            return f64::NAN;
        };
        if x <= self.lower {
            return f64::INFINITY;
        }
        for piece in pieces {
            match *piece {
                Piece::Bridge { hi, slope, .. } if x <= hi => return slope,
                Piece::Contact { branch, hi, .. } if x <= hi => return self.branches[branch].curve.marginal(x),
                _ => {}
            }
        }
        0.0
    }

    /// Marginal levels at which `I` jumps or has a kink.
    pub fn critical_slopes(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for piece in self.pieces.as_deref().unwrap_or(&[]) {
            match *piece {
                Piece::Bridge { slope, .. } => out.push(slope),
                Piece::Contact { branch, lo, .. } if lo.is_finite() => {
                    let m = self.branches[branch].curve.marginal(lo);
                    if m.is_finite() && m > 0.0 {
                        out.push(m);
                    }
                }
                _ => {}
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Concave part of an S-shaped utility, `gain x^p / p`, with its marginal and inverse marginal.
    pub fn gain_branch(&self) -> Result<(f64, f64), UtilityError> {
        match self.spec {
            UtilitySpec::SShaped { p, gain, .. } => Ok((p, gain)),
            _ => Err(UtilityError::NotSShaped),
        }
    }

    /// Tangent point `C > 0` of the line through `(w, uw)` touching the gain branch:
    /// `(U1(C) - uw) / (C - w) = U1'(C)`.
    pub fn tangent_from(&self, w: f64, uw: f64) -> Result<f64, UtilityError> {
        let (p, gain) = self.gain_branch()?;
        let h = |lc: f64| {
            let c: f64 = lc.exp();
            let m = gain * c.powf(p - 1.0);
            gain * c.powf(p) / p - uw - m * (c - w)
        };
        let (mut lo, mut hi) = (-60.0, 10.0);
        while h(lo) >= 0.0 && lo > -700.0 {
            lo -= 40.0;
        }
        while h(hi) <= 0.0 && hi < 700.0 {
            hi += 20.0;
        }
        let b = Bracket::new(h, lo, hi)?;
        Ok(find_root(h, b, 1e-15)?.exp())
    }

    /// State-dependent tangent point for an anchor `w` below the reference point.
    pub fn fsd_tangent(&self, w: f64) -> Result<f64, UtilityError> {
        let UtilitySpec::SShaped { q, k, .. } = self.spec else {
            return Err(UtilityError::NotSShaped);
        };
        if !(w < 0.0) {
            return Err(UtilityError::Parameters(format!("anchor {w} must lie below the reference point")));
        }
        self.tangent_from(w, -k * (-w).powf(q))
    }

    fn check_increasing(&self) -> Result<(), UtilityError> {
        for b in &self.branches {
            let lo = if b.lo.is_finite() { b.lo } else { -50.0 };
            let hi = if b.hi.is_finite() { b.hi } else { lo.max(0.0) + 100.0 };
            let mut prev = f64::NEG_INFINITY;
            for j in 0..=200 {
                let x = lo + (hi - lo) * j as f64 / 200.0;
                let v = b.curve.value(x);
                if v.is_finite() && v < prev - 1e-12 {
                    return Err(UtilityError::NotIncreasing(x));
                }
                if v.is_finite() {
                    prev = v;
                }
            }
        }
        Ok(())
    }

    fn build_envelope(&self) -> Result<Option<Vec<Piece>>, UtilityError> {
        let inf = f64::INFINITY;
        match self.spec {
            UtilitySpec::Power { .. } | UtilitySpec::Log | UtilitySpec::Exponential { .. } => {
                Ok(Some(vec![Piece::Contact { branch: 0, lo: self.lower, hi: inf }]))
            }
            UtilitySpec::SShaped { liquidation: None, .. } => Ok(None),
            UtilitySpec::SShaped { liquidation: Some(l), .. } => {
                let c = self.tangent_from(l, self.branches[0].curve.value(l))?;
                let slope = self.branches[1].curve.marginal(c);
                Ok(Some(vec![Piece::Bridge { lo: l, hi: c, slope }, Piece::Contact { branch: 1, lo: c, hi: inf }]))
            }
            UtilitySpec::Piecewise4 { .. } => Ok(Some(self.hull_envelope(100_000))),
        }
    }

    /// Envelope from the upper convex hull of a dense sample, with bridge end
    /// points polished by alternating one-dimensional tangent searches.
    fn hull_envelope(&self, n: usize) -> Vec<Piece> {
        let mut pts: Vec<(f64, f64, usize)> = Vec::with_capacity(n + 30_000);
        let finite_span: f64 = self.branches.iter().filter(|b| b.hi.is_finite()).map(|b| b.hi - b.lo).sum();
        for (bi, b) in self.branches.iter().enumerate() {
            if b.hi.is_finite() {
                let m = ((n as f64 * (b.hi - b.lo) / finite_span) as usize).max(16);
                for j in 0..m {
                    let x = b.lo + (b.hi - b.lo) * j as f64 / m as f64;
                    pts.push((x, b.curve.value(x), bi));
                }
            } else {
                for j in 0..10_000 {
                    let x = b.lo + 10.0 * j as f64 / 10_000.0;
                    pts.push((x, b.curve.value(x), bi));
                }
                for j in 0..=10_000 {
                    let x = b.lo + 10.0 * 1e6f64.powf(j as f64 / 10_000.0);
                    pts.push((x, b.curve.value(x), bi));
                }
            }
        }
        let mut hull: Vec<usize> = Vec::new();
        for i in 0..pts.len() {
            while hull.len() >= 2 {
                let (a, b) = (pts[hull[hull.len() - 2]], pts[hull[hull.len() - 1]]);
                let c = pts[i];
                if (b.1 - a.1) * (c.0 - a.0) <= (c.1 - a.1) * (b.0 - a.0) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(i);
        }

        let mut pieces: Vec<Piece> = Vec::new();
        let mut k = 0;
        while k + 1 < hull.len() {
            let (i, j) = (hull[k], hull[k + 1]);
            if j == i + 1 {
                let b = pts[i].2;
                let lo = pts[i].0;
                let mut m = k + 1;
                while m + 1 < hull.len() && hull[m + 1] == hull[m] + 1 && pts[hull[m + 1]].2 == b {
                    m += 1;
                }
                let hi = if m + 1 == hull.len() { f64::INFINITY } else { pts[hull[m]].0 };
                pieces.push(Piece::Contact { branch: b, lo, hi });
                k = m;
            } else {
                let (xl, xr) = self.polish_bridge(pts[i], pts[j]);
                let slope = (self.branches[pts[j].2].curve.value(xr) - self.branches[pts[i].2].curve.value(xl)) / (xr - xl);
                pieces.push(Piece::Bridge { lo: xl, hi: xr, slope });
                k += 1;
            }
        }
        if let Some(Piece::Contact { hi, .. }) = pieces.last_mut() {
            *hi = f64::INFINITY;
        }
        // contacts start and end where the neighbouring bridges do
        for idx in 0..pieces.len() {
            let prev_hi = if idx > 0 {
                match pieces[idx - 1] {
                    Piece::Bridge { hi, .. } | Piece::Contact { hi, .. } => Some(hi),
                }
            } else {
                None
            };
            let next_lo = if idx + 1 < pieces.len() {
                match pieces[idx + 1] {
                    Piece::Bridge { lo, .. } | Piece::Contact { lo, .. } => Some(lo),
                }
            } else {
                None
            };
            if let Piece::Contact { lo, hi, .. } = &mut pieces[idx] {
                if let Some(p) = prev_hi {
                    *lo = p;
                }
                if let Some(n) = next_lo {
                    *hi = n;
                }
            }
        }
        pieces
    }

    fn polish_bridge(&self, left: (f64, f64, usize), right: (f64, f64, usize)) -> (f64, f64) {
        let bl = self.branches[left.2];
        let br = self.branches[right.2];
        let right_hi = if br.hi.is_finite() { br.hi } else { br.lo + 1e7 };
        let (mut xl, mut xr) = (left.0, right.0);
        for _ in 0..100 {
            let ul = bl.curve.value(xl);
            let (a, b) = (br.lo.max(xl + 1e-12), right_hi);
            let nr = golden_max(|x| (br.curve.value(x) - ul) / (x - xl), a, b);
            let nr = refine_tangent(&br.curve, (xl, ul), nr, (a, b));
            let ur = br.curve.value(nr);
            let (a, b) = (bl.lo, bl.hi.min(nr - 1e-12));
            let nl = golden_max(|x| -(ur - bl.curve.value(x)) / (nr - x), a, b);
            let nl = refine_tangent(&bl.curve, (nr, ur), nl, (a, b));
            let done = (nl - xl).abs() < 1e-15 * (1.0 + xl.abs()) && (nr - xr).abs() < 1e-15 * (1.0 + xr.abs());
            xl = nl;
            xr = nr;
            if done {
                break;
            }
        }
        (xl, xr)
    }
}

/// Root of the tangency condition `U'(x) (x - x0) = U(x) - u0` near `guess`,
/// kept inside `[a, b]`. Falls back to `guess` when no sign change is found.
fn refine_tangent(curve: &Curve, (x0, u0): (f64, f64), guess: f64, (a, b): (f64, f64)) -> f64 {
    let scale = 1e-12 * (1.0 + guess.abs());
    if !curve.is_concave() || guess <= a + scale || guess >= b - scale {
        return guess;
    }
    let h = |x: f64| curve.marginal(x) * (x - x0) - (curve.value(x) - u0);
    let mut d = 1e-6 * (1.0 + guess.abs());
    for _ in 0..12 {
        let (lo, hi) = ((guess - d).max(a), (guess + d).min(b));
        if let Ok(br) = Bracket::new(h, lo, hi) {
            return find_root(h, br, 0.0).unwrap_or(guess);
        }
        d *= 4.0;
    }
    guess
}

/// Maximizer of `f` on `[a, b]`: a coarse scan picks the best cell, golden
/// section refines inside it.
fn golden_max(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if !(b > a) {
        return a;
    }
    const SCAN: usize = 400;
    let geometric = b - a > 1e3;
    let at = |j: usize| {
        let r = j as f64 / SCAN as f64;
        if geometric {
            a + ((b - a + 1.0).powf(r) - 1.0)
        } else {
            a + (b - a) * r
        }
    };
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for j in 0..=SCAN {
        let v = f(at(j));
        if v > best_v {
            best_v = v;
            best = j;
        }
    }
    let (mut lo, mut hi) = (at(best.saturating_sub(1)), at((best + 1).min(SCAN)));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo <= 1e-15 * (1.0 + lo.abs()) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (lo + hi);
    [a, b, mid].into_iter().max_by(|&x, &y| f(x).total_cmp(&f(y))).unwrap_or(mid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s_shaped(l: Option<f64>) -> Utility {
        Utility::new(UtilitySpec::SShaped { p: 0.6, q: 0.5, k: 2.0, gain: 1.0, liquidation: l }).unwrap()
    }

    #[test]
    fn point_values() {
        let pw = Utility::new(UtilitySpec::Power { p: 0.6 }).unwrap();
        assert!((pw.value(1.0) - 1.0 / 0.6).abs() < 1e-15);
        assert!((pw.marginal(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((pw.conjugate(1.0) - 1.0).abs() < 1e-15);
        let lg = Utility::new(UtilitySpec::Log).unwrap();
        assert!((lg.marginal(2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((lg.conjugate(0.25) - 4.0).abs() < 1e-12);
        let ex = Utility::new(UtilitySpec::Exponential { p: 0.6, floor: Some(0.0) }).unwrap();
        assert!((ex.marginal(1.0).unwrap() - (-0.6f64).exp()).abs() < 1e-15);
        assert!((ex.value(0.0) + 1.0 / 0.6).abs() < 1e-15);
        assert_eq!(ex.conjugate(1.55), 0.0);
        let s = s_shaped(Some(-5.0));
        assert!((s.value(-4.0) + 4.0).abs() < 1e-15);
        assert!(matches!(s.marginal(0.0), Err(UtilityError::AtKink(_))));
    }

    #[test]
    fn s_shaped_needs_liquidation() {
        let s = s_shaped(None);
        assert!(matches!(s.try_conjugate(1.0), Err(UtilityError::NoFiniteEnvelope)));
    }

    #[test]
    fn s_shaped_envelope_matches_tangent() {
        let s = s_shaped(Some(-5.0));
        let d = s.envelope_data();
        let (k, c) = (d.kappa.unwrap(), d.c_liq.unwrap());
        let resid = (s.value(c) - s.value(-5.0)) / (c + 5.0) - k;
        assert!(resid.abs() < 1e-12);
        assert!((s.fsd_tangent(-5.0).unwrap() - c).abs() < 1e-9);
        assert_eq!(s.conjugate(k), -5.0);
        assert!((s.conjugate(k * (1.0 - 1e-12)) - c).abs() < 1e-6);
    }

    #[test]
    fn numeric_hull_reproduces_closed_form_envelope() {
        let s = s_shaped(Some(-5.0));
        let hull = s.hull_envelope(100_000);
        let closed = s.pieces().unwrap();
        match (hull[0], closed[0]) {
            (Piece::Bridge { lo, hi, slope }, Piece::Bridge { lo: l2, hi: h2, slope: s2 }) => {
                assert_eq!(lo, l2);
                assert!((hi - h2).abs() < 1e-9, "{hi} vs {h2}");
                assert!((slope - s2).abs() < 1e-12);
            }
            other => panic!("unexpected envelope {other:?}"),
        }
    }

    #[test]
    fn sqrt_tangent_closed_form() {
        let u = Utility::new(UtilitySpec::SShaped { p: 0.5, q: 0.5, k: 0.0, gain: 0.5, liquidation: None }).unwrap();
        let c = u.tangent_from(-1.0, 0.0).unwrap();
        assert!((c - 1.0).abs() < 1e-10);
        assert!(u.fsd_tangent(-1e-6).unwrap() < 1e-3);
    }
}
