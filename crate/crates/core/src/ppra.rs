//! Poor-performance-region algorithm (PPRA) for the second-order dominance problem.
//!
//! Work happens in kernel ranks `t`, where the classic solution is
//! `I(lambda Q_rho(t))` and the benchmark is `Q0(1-t)`. The poor-performance
//! region is where the former falls below the latter. A nondecreasing
//! correction `y_sub >= 0` shifts the kernel so that
//! `I(lambda (Q_rho(t) - y_sub(t)))` catches up with the benchmark in the
//! cumulative sense, and the multiplier is re-solved so the budget binds.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classic::{shifted_breaks, solve_classic_lambda};
use crate::market::{Kernel, MarketConfig};
use crate::numerics::{find_sign_regions, norm_cdf, norm_quantile, quad_z, scan_points, EPS, SUB_PANELS};
use crate::quantile::{minimal_budget, PiecewiseQuantile, Quantile, QuantileSpec, Segment};
use crate::utility::Utility;
use crate::validation::{check_ssd, objective_value, ssd_profile, budget_value, DominanceReport, DEFAULT_TOL};
use crate::SolveError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PpraOptions {
    /// Points per family (uniform and probit) in the region scan.
    pub scan: usize,
    /// Samples per family in each supremum search.
    pub sup_samples: usize,
    pub max_intervals: usize,
    /// Region intervals narrower than this are dropped.
    pub min_width: f64,
    /// Relative budget tolerance `|budget - x_bar| <= tol_budget |x_bar|`.
    pub tol_budget: f64,
    pub verify_ranks: usize,
    pub verify_tol: f64,
}

impl Default for PpraOptions {
    fn default() -> Self {
        PpraOptions {
            scan: 5000,
            sup_samples: 2000,
            max_intervals: 8,
            min_width: 1e-6,
            tol_budget: 1e-4,
            verify_ranks: 10_000,
            verify_tol: DEFAULT_TOL,
        }
    }
}

/// Poor-performance region `{t : I(lambda Q_rho(t)) < Q0(1-t)}` as ordered disjoint intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Region {
    pub intervals: Vec<(f64, f64)>,
}

impl Region {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Left ends `a_1..a_n` followed by the sentinel `a_{n+1} = 1`.
    fn starts(&self) -> Vec<f64> {
        self.intervals.iter().map(|iv| iv.0).chain(std::iter::once(1.0)).collect()
    }
}

/// One piece of `y_sub` over kernel ranks `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CorrectionPiece {
    Flat { lo: f64, hi: f64, level: f64 },
    /// `y_sub = y0`, where the solution coincides with the benchmark.
    Curve { lo: f64, hi: f64 },
}

impl CorrectionPiece {
    pub fn lo(&self) -> f64 {
        match *self {
            CorrectionPiece::Flat { lo, .. } | CorrectionPiece::Curve { lo, .. } => lo,
        }
    }

    pub fn hi(&self) -> f64 {
        match *self {
            CorrectionPiece::Flat { hi, .. } | CorrectionPiece::Curve { hi, .. } => hi,
        }
    }

    fn clipped(&self, lo: f64, hi: f64) -> Self {
        match *self {
            CorrectionPiece::Flat { level, .. } => CorrectionPiece::Flat { lo, hi, level },
            CorrectionPiece::Curve { .. } => CorrectionPiece::Curve { lo, hi },
        }
    }
}

/// A monotonicity repair across the interval pair `(pair - 1, pair)` (zero based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Repair {
    pub pair: usize,
    pub t_left: f64,
    pub t_right: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correction {
    pub pieces: Vec<CorrectionPiece>,
    /// Partition points `t_1..t_n`, one per region interval.
    pub partition: Vec<f64>,
    pub repairs: Vec<Repair>,
}

impl Correction {
    fn zero() -> Self {
        Correction { pieces: vec![CorrectionPiece::Flat { lo: 0.0, hi: 1.0, level: 0.0 }], partition: Vec::new(), repairs: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    ClassicOptimal,
    SubOptimal,
    FailedMonotonicity,
    FailedVerification,
}

impl Status {
    pub fn is_failed(self) -> bool {
        matches!(self, Status::FailedMonotonicity | Status::FailedVerification)
    }
}

/// Residuals of the optimality system for the concave case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Slackness {
    /// `max_t z(t)`; must not be positive.
    pub max_z: f64,
    /// Largest change of `y_sub` across a grid cell on which `z < -threshold`.
    pub max_dy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PpraSolution {
    pub lambda: f64,
    pub lambda_cla: f64,
    pub region: Region,
    pub partition: Vec<f64>,
    /// `y0(t_i)` for each partition point.
    pub levels: Vec<f64>,
    pub correction: Correction,
    #[serde(skip)]
    pub quantile: PiecewiseQuantile,
    pub objective: f64,
    pub budget: f64,
    pub x_bar: f64,
    pub status: Status,
    pub diagnostic: Option<String>,
    pub ssd: DominanceReport,
    #[serde(skip)]
    benchmark: QuantileSpec,
    #[serde(skip)]
    kernel: Kernel,
}

impl PpraSolution {
    pub fn benchmark(&self) -> &QuantileSpec {
        &self.benchmark
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    fn context<'a>(&'a self, opts: &'a PpraOptions) -> Ppra<'a> {
        Ppra::new(self.quantile.utility(), &self.benchmark, self.kernel, self.lambda, opts)
    }

    /// `y_sub` at kernel rank `t`.
    pub fn y_sub(&self, t: f64) -> f64 {
        let opts = PpraOptions::default();
        self.context(&opts).y_sub(&self.correction.pieces, t)
    }

    /// `z(t) = -int_0^{1-t} (Q_sub - Q0)` on `n` cells, against the cell-wise change of `y_sub`.
    pub fn slackness(&self, n: usize, threshold: f64) -> Slackness {
        let profile = ssd_profile(&self.quantile, &self.benchmark, n);
        let mut max_z = f64::NEG_INFINITY;
        let mut max_dy: f64 = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for p in profile.iter().rev() {
            let t = 1.0 - p.rank;
            let z = p.gap;
            max_z = max_z.max(z);
            let y = self.y_sub(t.max(EPS));
            if let Some((pz, py)) = prev {
                if pz < -threshold && z < -threshold {
                    max_dy = max_dy.max((y - py).abs());
                }
            }
            prev = Some((z, y));
        }
        Slackness { max_z, max_dy }
    }
}

/// Everything evaluated at a fixed multiplier.
pub struct Ppra<'a> {
    u: &'a Utility,
    q0: &'a QuantileSpec,
    kernel: Kernel,
    lambda: f64,
    opts: &'a PpraOptions,
    q0_breaks: Vec<f64>,
}

impl<'a> Ppra<'a> {
    pub fn new(u: &'a Utility, q0: &'a QuantileSpec, kernel: Kernel, lambda: f64, opts: &'a PpraOptions) -> Self {
        let q0_breaks = q0.breaks().into_iter().map(|b| 1.0 - b).collect();
        Ppra { u, q0, kernel, lambda, opts, q0_breaks }
    }

    /// `I(lambda Q_rho(t)) - Q0(1-t)`.
    pub fn gap(&self, t: f64) -> f64 {
        self.u.conjugate(self.lambda * self.kernel.q(t)) - self.q0.value(1.0 - t)
    }

    /// `y0(t) = inf {y >= 0 : I(lambda (Q_rho(t) - y)) >= Q0(1-t)}` from the envelope threshold.
    pub fn y0(&self, t: f64) -> f64 {
        if t <= 0.0 {
            // Q_rho(0+) = 0
            return 0.0;
        }
        let t = t.min(1.0 - EPS);
        let w = self.u.threshold(self.q0.value(1.0 - t));
        (self.kernel.q(t) - w / self.lambda).max(0.0)
    }

    /// The same infimum by bisection in `y`; `None` if no shift reaches the benchmark.
    pub fn y0_bisect(&self, t: f64, tol: f64) -> Option<f64> {
        let r = self.kernel.q(t);
        let floor = self.q0.value(1.0 - t);
        let ok = |y: f64| self.u.conjugate(self.lambda * (r - y)) >= floor;
        if ok(0.0) {
            return Some(0.0);
        }
        let (mut lo, mut hi) = (0.0, r * (1.0 - 1e-15));
        if !ok(hi) {
            return None;
        }
        while hi - lo > tol * r {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }

    fn breaks(&self, level: f64) -> Vec<f64> {
        let mut b = shifted_breaks(self.u, &self.kernel, self.lambda, level);
        b.extend(&self.q0_breaks);
        b
    }

    fn shifted(&self, level: f64, lo: f64, hi: f64, g: impl Fn(f64, f64, f64) -> f64) -> f64 {
        let k = self.kernel;
        quad_z(
            |t, z| {
                let r = (k.sigma * z + k.mu).exp();
                g(r, self.u.conjugate(self.lambda * (r - level)), self.q0.value_z(1.0 - t, -z))
            },
            lo,
            hi,
            &self.breaks(level),
            SUB_PANELS,
        )
    }

    /// `int_lo^hi (I(lambda (Q_rho - level)) - Q0(1-t)) dt`.
    pub fn flat_integral(&self, level: f64, lo: f64, hi: f64) -> f64 {
        self.shifted(level, lo, hi, |_, x, b| x - b)
    }

    pub fn region(&self) -> Region {
        let points = scan_points(self.opts.scan);
        let mut intervals: Vec<(f64, f64)> = find_sign_regions(|t| self.gap(t), &points, 1e-8)
            .into_iter()
            .filter(|&(a, b)| b - a >= self.opts.min_width)
            .collect();
        intervals.truncate(self.opts.max_intervals);
        Region { intervals }
    }

    /// `sup {t in (a, b) : g(t) > 0}` on a uniform-plus-probit sample refined by bisection.
    fn sup_positive(&self, g: impl Fn(f64) -> f64, a: f64, b: f64) -> Option<f64> {
        let n = self.opts.sup_samples;
        let (za, zb) = (norm_quantile(a.max(EPS)), norm_quantile(b.min(1.0 - EPS)));
        let mut ts: Vec<f64> = (1..n).map(|j| a + (b - a) * j as f64 / n as f64).collect();
        ts.extend((1..n).map(|j| norm_cdf(za + (zb - za) * j as f64 / n as f64)));
        ts.retain(|&t| t > a && t < b);
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let k = (0..ts.len()).rev().find(|&k| g(ts[k]) > 0.0)?;
        let (mut lo, mut hi) = (ts[k], ts.get(k + 1).copied().unwrap_or(b));
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        Some(if b - t < 1e-6 { b } else { t })
    }

    /// Right-to-left construction of `y_sub` over the region.
    pub fn build_correction(&self, region: &Region) -> Correction {
        if region.is_empty() {
            return Correction::zero();
        }
        let starts = region.starts();
        let n = region.intervals.len();
        let mut pieces = Vec::new();
        let mut partition = vec![0.0; n];
        let mut z = 0.0;
        for i in (0..n).rev() {
            let (a, b) = region.intervals[i];
            let up = starts[i + 1];
            let g = |s: f64| -self.flat_integral(self.y0(s), s, up) + z;
            let t = self.sup_positive(g, a, b).unwrap_or(a);
            partition[i] = t;
            let level = self.y0(t);
            if up > t {
                pieces.push(CorrectionPiece::Flat { lo: t, hi: up, level });
                z -= self.flat_integral(level, t, up);
            }
            if t > a {
                pieces.push(CorrectionPiece::Curve { lo: a, hi: t });
            }
        }
        if starts[0] > 0.0 {
            pieces.push(CorrectionPiece::Flat { lo: 0.0, hi: starts[0], level: 0.0 });
        }
        pieces.reverse();
        Correction { pieces, partition, repairs: Vec::new() }
    }

    pub fn y_sub(&self, pieces: &[CorrectionPiece], t: f64) -> f64 {
        let k = pieces.partition_point(|p| p.hi() <= t).min(pieces.len() - 1);
        match pieces[k] {
            CorrectionPiece::Flat { level, .. } => level,
            CorrectionPiece::Curve { .. } => self.y0(t),
        }
    }

    /// `z_sub(s) = -int_s^1 (Q_sub - Q0)`; curve pieces contribute nothing.
    fn z_sub(&self, pieces: &[CorrectionPiece], s: f64) -> f64 {
        let mut total = 0.0;
        for p in pieces {
            if let CorrectionPiece::Flat { lo, hi, level } = *p {
                let lo = lo.max(s);
                if hi > lo {
                    total += self.flat_integral(level, lo, hi);
                }
            }
        }
        -total
    }

    /// Largest downward step of `y_sub` between consecutive grid ranks of `(lo, hi)`.
    pub fn monotonicity_defect(&self, pieces: &[CorrectionPiece], lo: f64, hi: f64) -> f64 {
        let n = 4000;
        let (lo, hi) = (lo.max(EPS), hi.min(1.0 - EPS));
        let (za, zb) = (norm_quantile(lo), norm_quantile(hi));
        let mut ts: Vec<f64> = (0..=n).map(|j| lo + (hi - lo) * j as f64 / n as f64).collect();
        ts.extend((0..=n).map(|j| norm_cdf(za + (zb - za) * j as f64 / n as f64)));
        for p in pieces {
            for e in [p.lo(), p.hi()] {
                if e > lo && e < hi {
                    ts.push(e);
                    ts.push((e - 1e-9).max(lo));
                }
            }
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let ys: Vec<f64> = ts.iter().map(|&t| self.y_sub(pieces, t)).collect();
        ys.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }

    fn is_monotone(&self, pieces: &[CorrectionPiece], lo: f64, hi: f64) -> bool {
        self.monotonicity_defect(pieces, lo, hi) <= 1e-10
    }

    /// Replaces `y_sub` by a flat level across interval pairs where it decreases.
    pub fn repair(&self, correction: &Correction, region: &Region) -> Correction {
        let mut out = correction.clone();
        let starts = region.starts();
        for i in (1..region.intervals.len()).rev() {
            if self.is_monotone(&out.pieces, starts[i - 1], starts[i + 1]) {
                continue;
            }
            let (ai, bi) = region.intervals[i];
            let (ap, bp) = region.intervals[i - 1];
            let next = starts[i + 1];
            let sbar = |s: f64| {
                let target = self.y0(s);
                let f = |t: f64| self.y0(t) - target;
                if f(ai) >= 0.0 {
                    return ai;
                }
                let mut hi = bi.min(1.0 - EPS);
                if f(hi) < 0.0 {
                    return next;
                }
                let mut lo = ai;
                while hi - lo > 1e-12 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) >= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            };
            let pieces = &out.pieces;
            let g = |s: f64| {
                let sb = sbar(s);
                -self.flat_integral(self.y0(s), s, sb) + self.z_sub(pieces, sb)
            };
            let t_left = self.sup_positive(g, ap, bp).unwrap_or(ap);
            let t_right = if t_left < 1.0 { sbar(t_left) } else { 1.0 };
            let level = self.y0(t_left);
            let mut pieces: Vec<CorrectionPiece> = Vec::new();
            for p in &out.pieces {
                if p.hi() <= t_left || p.lo() >= t_right {
                    pieces.push(*p);
                    continue;
                }
                if p.lo() < t_left {
                    pieces.push(p.clipped(p.lo(), t_left));
                }
                if p.hi() > t_right {
                    pieces.push(p.clipped(t_right, p.hi()));
                }
            }
            pieces.push(CorrectionPiece::Flat { lo: t_left, hi: t_right, level });
            pieces.sort_by(|a, b| a.lo().total_cmp(&b.lo()));
            out.pieces = pieces;
            out.partition[i - 1] = t_left;
            out.repairs.push(Repair { pair: i, t_left, t_right, level });
        }
        out
    }

    /// Region, correction and (when needed) repair at the current multiplier.
    pub fn structure(&self) -> (Region, Correction) {
        let region = self.region();
        let mut correction = self.build_correction(&region);
        if region.intervals.len() > 1 && !self.is_monotone(&correction.pieces, 0.0, 1.0) {
            correction = self.repair(&correction, &region);
        }
        (region, correction)
    }

    /// `int Q_rho(t) I(lambda (Q_rho - y_sub)) dt` summed piece by piece.
    pub fn budget(&self, pieces: &[CorrectionPiece]) -> f64 {
        let k = self.kernel;
        pieces
            .iter()
            .map(|p| match *p {
                CorrectionPiece::Flat { lo, hi, level } => self.shifted(level, lo, hi, |r, x, _| r * x),
                CorrectionPiece::Curve { lo, hi } => quad_z(
                    |t, z| (k.sigma * z + k.mu).exp() * self.q0.value_z(1.0 - t, -z),
                    lo,
                    hi,
                    &self.q0_breaks,
                    SUB_PANELS,
                ),
            })
            .sum()
    }

    /// Solution quantile over `s = 1 - t`: classic-shifted on flat pieces, the benchmark on curve pieces.
    pub fn assemble(&self, u: &Arc<Utility>, pieces: &[CorrectionPiece]) -> PiecewiseQuantile {
        let mut breakpoints = vec![0.0];
        let mut segments: Vec<Segment> = Vec::new();
        for p in pieces.iter().rev() {
            let (s_lo, s_hi) = (1.0 - p.hi(), 1.0 - p.lo());
            if !(s_hi > s_lo) {
                continue;
            }
            let seg = match *p {
                CorrectionPiece::Flat { level, .. } => Segment::ClassicShifted { level },
                CorrectionPiece::Curve { .. } => Segment::Benchmark,
            };
            if segments.last() == Some(&seg) {
                *breakpoints.last_mut().unwrap() = s_hi;
            } else {
                segments.push(seg);
                breakpoints.push(s_hi);
            }
        }
        *breakpoints.last_mut().unwrap() = 1.0;
        PiecewiseQuantile::new(u.clone(), self.kernel, Some(self.q0.clone()), self.lambda, breakpoints, segments)
    }
}

/// Complete PPRA run: classic check, then budget bisection over re-derived structures.
pub fn solve_ppra(
    u: &Arc<Utility>,
    q0: &QuantileSpec,
    market: &MarketConfig,
    opts: &PpraOptions,
) -> Result<PpraSolution, SolveError> {
    u.require_envelope()?;
    q0.validate()?;
    let kernel = market.kernel()?;
    let x_bar = market.x_bar;
    let minimal = minimal_budget(q0, &kernel)?;
    if x_bar < minimal - 1e-12 * x_bar.abs().max(1.0) {
        return Err(SolveError::Infeasible { x_bar, minimal });
    }
    let lambda_cla = solve_classic_lambda(u, market)?;

    let finish = |lambda: f64, region: Region, correction: Correction, base: Status| {
        let ctx = Ppra::new(u, q0, kernel, lambda, opts);
        let quantile = ctx.assemble(u, &correction.pieces);
        let budget = budget_value(&quantile, &kernel).unwrap_or(f64::NAN);
        let objective = objective_value(&quantile, u).unwrap_or(f64::NAN);
        let ssd = check_ssd(&quantile, q0, opts.verify_ranks, opts.verify_tol);
        let levels = correction.partition.iter().map(|&t| ctx.y0(t)).collect();
        let mut status = base;
        let mut diagnostic = None;
        if base == Status::SubOptimal {
            let defect = ctx.monotonicity_defect(&correction.pieces, 0.0, 1.0);
            if defect > 1e-10 {
                status = Status::FailedMonotonicity;
                diagnostic = Some(format!("correction decreases by {defect:.3e}"));
            }
        }
        if !status.is_failed() && !ssd.feasible {
            status = Status::FailedVerification;
            diagnostic = Some(format!(
                "cumulative shortfall {:.3e} at rank {:.6}",
                ssd.worst_violation, ssd.worst_location
            ));
        }
        if !status.is_failed() && (budget - x_bar).abs() > opts.tol_budget * x_bar.abs().max(1e-12) {
            status = Status::FailedVerification;
            diagnostic = Some(format!("budget {budget:.8} does not bind to {x_bar}"));
        }
        PpraSolution {
            lambda,
            lambda_cla,
            partition: correction.partition.clone(),
            levels,
            region,
            correction,
            quantile,
            objective,
            budget,
            x_bar,
            status,
            diagnostic,
            ssd,
            benchmark: q0.clone(),
            kernel,
        }
    };

    let classic = PiecewiseQuantile::classic(u.clone(), kernel, lambda_cla);
    if check_ssd(&classic, q0, opts.verify_ranks, 1e-12).feasible {
        let region = Ppra::new(u, q0, kernel, lambda_cla, opts).region();
        let mut correction = Correction::zero();
        correction.partition = vec![0.0; region.intervals.len()];
        return Ok(finish(lambda_cla, region, correction, Status::ClassicOptimal));
    }

    let residual = |lambda: f64| {
        let ctx = Ppra::new(u, q0, kernel, lambda, opts);
        let (_, c) = ctx.structure();
        ctx.budget(&c.pieces) - x_bar
    };
    let mut lo = lambda_cla;
    let mut hi = lambda_cla * 1.1;
    let mut expansions = 0;
    while residual(hi) > 0.0 {
        lo = hi;
        hi *= 1.5;
        expansions += 1;
        if expansions > 80 {
            return Err(SolveError::BudgetUnattainable { x_bar, lo: lambda_cla, hi });
        }
    }
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let ctx = Ppra::new(u, q0, kernel, lambda, opts);
    let (region, correction) = ctx.structure();
    Ok(finish(lambda, region, correction, Status::SubOptimal))
}
