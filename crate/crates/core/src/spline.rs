//! Uniform B-splines parameterized by time.
//!
//! A spline of degree `l` with `m` control points on knots `t0 + k·h`
//! (`k = 0..m+l`) is valid on `[t0 + l·h, t0 + m·h]`. On the knot interval
//! `[t_j, t_{j+1})` only the control points `j-l ..= j` are active.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplineError {
    #[error("need at least degree + 1 = {needed} control points, got {got}")]
    TooFewControlPoints { needed: usize, got: usize },
    #[error("knot spacing must be positive")]
    BadSpacing,
    #[error("time {t} outside valid domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },
    #[error("derivative order {order} exceeds degree {degree}")]
    OrderTooHigh { order: usize, degree: usize },
    #[error("axes disagree on degree or knots")]
    AxisMismatch,
}

/// Cox–de Boor recursion for `B_{i,n}(t)` on an arbitrary knot vector,
/// with `0/0` terms taken as zero and half-open support `[t_i, t_{i+n+1})`.
pub fn basis(i: usize, n: usize, t: f64, knots: &[f64]) -> f64 {
    if n == 0 {
        return if knots[i] <= t && t < knots[i + 1] { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let d1 = knots[i + n] - knots[i];
    if d1 != 0.0 {
        v += (t - knots[i]) / d1 * basis(i, n - 1, t, knots);
    }
    let d2 = knots[i + n + 1] - knots[i + 1];
    if d2 != 0.0 {
        v += (knots[i + n + 1] - t) / d2 * basis(i + 1, n - 1, t, knots);
    }
    v
}

/// Values of the `p + 1` nonzero degree-`p` uniform basis functions at local
/// parameter `u ∈ [0, 1]` of a knot interval (unit spacing).
fn uniform_basis_values(p: usize, u: f64) -> Vec<f64> {
    let mut n = vec![0.0; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    n[0] = 1.0;
    for d in 1..=p {
        left[d] = u + (d as f64) - 1.0;
        right[d] = d as f64 - u;
        let mut saved = 0.0;
        for r in 0..d {
            let temp = n[r] / (right[r + 1] + left[d - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[d - r] * temp;
        }
        n[d] = saved;
    }
    n
}

/// Weights on the `p + 1` active control points giving the `order`-th time
/// derivative at local parameter `u` for knot spacing `h`.
pub fn uniform_weights(p: usize, u: f64, order: usize, h: f64) -> Vec<f64> {
    debug_assert!(order <= p);
    let mut w = uniform_basis_values(p - order, u);
    for _ in 0..order {
        let mut next = vec![0.0; w.len() + 1];
        for (k, &wk) in w.iter().enumerate() {
            next[k + 1] += wk / h;
            next[k] -= wk / h;
        }
        w = next;
    }
    w
}

/// A scalar uniform B-spline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformBSpline {
    degree: usize,
    t0: f64,
    spacing: f64,
    control: Vec<f64>,
}

impl UniformBSpline {
    pub fn new(degree: usize, t0: f64, spacing: f64, control: Vec<f64>) -> Result<Self, SplineError> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(SplineError::BadSpacing);
        }
        if control.len() < degree + 1 {
            return Err(SplineError::TooFewControlPoints { needed: degree + 1, got: control.len() });
        }
        Ok(Self { degree, t0, spacing, control })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn control(&self) -> &[f64] {
        &self.control
    }

    pub fn len(&self) -> usize {
        self.control.len()
    }

    pub fn is_empty(&self) -> bool {
        self.control.is_empty()
    }

    pub fn knot(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.spacing
    }

    pub fn knots(&self) -> Vec<f64> {
        (0..=self.control.len() + self.degree).map(|k| self.knot(k)).collect()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knot(self.degree), self.knot(self.control.len()))
    }

    /// Knot interval index `j` and local parameter for `t`.
    fn locate(&self, t: f64) -> Result<(usize, f64), SplineError> {
        let (lo, hi) = self.domain();
        let tol = 1e-9 * self.spacing;
        if !(t >= lo - tol && t <= hi + tol) {
            return Err(SplineError::OutOfDomain { t, lo, hi });
        }
        let s = ((t - self.t0) / self.spacing).max(self.degree as f64);
        let j = (s.floor() as usize).clamp(self.degree, self.control.len() - 1);
        let u = (s - j as f64).clamp(0.0, 1.0);
        Ok((j, u))
    }

    /// Index of the first active control point and the derivative weights.
    pub fn weights(&self, t: f64, order: usize) -> Result<(usize, Vec<f64>), SplineError> {
        if order > self.degree {
            return Err(SplineError::OrderTooHigh { order, degree: self.degree });
        }
        let (j, u) = self.locate(t)?;
        Ok((j - self.degree, uniform_weights(self.degree, u, order, self.spacing)))
    }

    /// `order`-th derivative at `t`, computed on the differenced control
    /// polygon.
    pub fn evaluate(&self, t: f64, order: usize) -> Result<f64, SplineError> {
        if order > self.degree {
            return Err(SplineError::OrderTooHigh { order, degree: self.degree });
        }
        let (j, u) = self.locate(t)?;
        let first = j - self.degree;
        let mut c: Vec<f64> = self.control[first..=j].to_vec();
        for _ in 0..order {
            c = c.windows(2).map(|w| (w[1] - w[0]) / self.spacing).collect();
        }
        let b = uniform_basis_values(self.degree - order, u);
        Ok(b.iter().zip(&c).map(|(bi, ci)| bi * ci).sum())
    }

    /// Derivative spline (degree − 1) on the same valid domain.
    pub fn derivative(&self) -> Option<UniformBSpline> {
        if self.degree == 0 {
            return None;
        }
        let control = self.control.windows(2).map(|w| (w[1] - w[0]) / self.spacing).collect();
        Some(UniformBSpline { degree: self.degree - 1, t0: self.t0 + self.spacing, spacing: self.spacing, control })
    }

    /// Appends `k` copies of the last control point. The existing domain is
    /// unchanged; the new segments bring the curve to rest.
    pub fn extend_hold(&mut self, k: usize) {
        let last = *self.control.last().unwrap();
        self.control.extend(std::iter::repeat_n(last, k));
    }
}

/// Planar trajectory: one uniform B-spline per axis on shared knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpline {
    x: UniformBSpline,
    y: UniformBSpline,
}

impl TrajectorySpline {
    pub fn new(x: UniformBSpline, y: UniformBSpline) -> Result<Self, SplineError> {
        if x.degree != y.degree || x.t0 != y.t0 || x.spacing != y.spacing || x.len() != y.len() {
            return Err(SplineError::AxisMismatch);
        }
        Ok(Self { x, y })
    }

    pub fn from_control(degree: usize, t0: f64, spacing: f64, cx: Vec<f64>, cy: Vec<f64>) -> Result<Self, SplineError> {
        Self::new(UniformBSpline::new(degree, t0, spacing, cx)?, UniformBSpline::new(degree, t0, spacing, cy)?)
    }

    /// Resting at `p` over `[t_start, t_start + segments·spacing]`.
    pub fn stationary(p: Point2, degree: usize, t_start: f64, spacing: f64, segments: usize) -> Self {
        let m = degree + segments.max(1);
        let t0 = t_start - degree as f64 * spacing;
        Self::from_control(degree, t0, spacing, vec![p.x; m], vec![p.y; m]).expect("valid stationary spline")
    }

    /// Straight line through `p` at time `t_start` with constant velocity `v`.
    pub fn constant_velocity(p: Point2, v: Point2, degree: usize, t_start: f64, spacing: f64, segments: usize) -> Self {
        let m = degree + segments.max(1);
        let t0 = t_start - degree as f64 * spacing;
        // Uniform B-splines reproduce linear functions when control point k
        // sits at the Greville abscissa t0 + (k + (degree+1)/2)·h.
        let g = |k: usize| t0 + (k as f64 + (degree as f64 + 1.0) / 2.0) * spacing - t_start;
        let cx = (0..m).map(|k| p.x + v.x * g(k)).collect();
        let cy = (0..m).map(|k| p.y + v.y * g(k)).collect();
        Self::from_control(degree, t0, spacing, cx, cy).expect("valid line spline")
    }

    pub fn x(&self) -> &UniformBSpline {
        &self.x
    }

    pub fn y(&self) -> &UniformBSpline {
        &self.y
    }

    pub fn degree(&self) -> usize {
        self.x.degree
    }

    pub fn spacing(&self) -> f64 {
        self.x.spacing
    }

    pub fn t0(&self) -> f64 {
        self.x.t0
    }

    pub fn control_count(&self) -> usize {
        self.x.len()
    }

    pub fn domain(&self) -> (f64, f64) {
        self.x.domain()
    }

    pub fn evaluate(&self, t: f64, order: usize) -> Result<Point2, SplineError> {
        Ok(Point2::new(self.x.evaluate(t, order)?, self.y.evaluate(t, order)?))
    }

    /// Position with `t` clamped into the valid domain.
    pub fn position_clamped(&self, t: f64) -> Point2 {
        let (lo, hi) = self.domain();
        self.evaluate(t.clamp(lo, hi), 0).expect("clamped time is in domain")
    }

    pub fn extend_hold(&mut self, k: usize) {
        self.x.extend_hold(k);
        self.y.extend_hold(k);
    }

    /// CSV rows `t,x,y,vx,vy,ax,ay` at `rate` Hz over `[start, end]`.
    pub fn sample_csv(&self, start: f64, end: f64, rate: f64) -> Result<String, SplineError> {
        let mut out = String::from("t,x,y,vx,vy,ax,ay\n");
        let n = ((end - start) * rate + 1e-9).floor() as usize;
        for k in 0..=n {
            let t = start + k as f64 / rate;
            let p = self.evaluate(t, 0)?;
            let v = self.evaluate(t, 1.min(self.degree()))?;
            let a = if self.degree() >= 2 { self.evaluate(t, 2)? } else { Point2::ORIGIN };
            let _ = writeln!(out, "{t},{},{},{},{},{},{}", p.x, p.y, v.x, v.y, a.x, a.y);
        }
        Ok(out)
    }
}

/// Row `k` holds the weights mapping control points to the `order`-th
/// derivative at `times[k]`; applies to each axis independently.
pub fn position_map(s: &UniformBSpline, times: &[f64], order: usize) -> Result<DMatrix<f64>, SplineError> {
    let mut t_map = DMatrix::zeros(times.len(), s.len());
    for (row, &t) in times.iter().enumerate() {
        let (first, w) = s.weights(t, order)?;
        for (k, wk) in w.into_iter().enumerate() {
            t_map[(row, first + k)] = wk;
        }
    }
    Ok(t_map)
}

/// `G` with `cᵀ G c = ∫_span (d^order x / dt^order)² dt` for a spline with
/// the given layout, integrated exactly per knot interval with Gauss–Legendre.
pub fn derivative_gram(degree: usize, m: usize, t0: f64, spacing: f64, span: (f64, f64), order: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(m, m);
    if order > degree {
        return g;
    }
    let nodes = (2 * (degree - order) + 1).div_ceil(2).max(1);
    let (xs, ws) = gauss_legendre(nodes);
    for j in degree..m {
        let (ka, kb) = (t0 + j as f64 * spacing, t0 + (j + 1) as f64 * spacing);
        let a = span.0.max(ka);
        let b = span.1.min(kb);
        if b <= a {
            continue;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let first = j - degree;
        for (x, w) in xs.iter().zip(ws) {
            let t = mid + half * x;
            let u = ((t - ka) / spacing).clamp(0.0, 1.0);
            let wv = uniform_weights(degree, u, order, spacing);
            let scale = w * half;
            for (r, wr) in wv.iter().enumerate() {
                for (c, wc) in wv.iter().enumerate() {
                    g[(first + r, first + c)] += scale * wr * wc;
                }
            }
        }
    }
    g
}

/// Placement of knots and control points for one planning cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnotLayout {
    pub t0: f64,
    pub control_count: usize,
    /// End of the valid domain, including any extension.
    pub horizon_end: f64,
    pub extended: bool,
}

/// Decides the knot layout for a cycle starting at `t_now`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnotPlanner {
    pub degree: usize,
    pub spacing: f64,
    pub extension_segments: usize,
}

impl KnotPlanner {
    /// Domain starts at `t_now` and covers `horizon`. When the desired pose's
    /// time falls in the final segment, the horizon grows by
    /// `extension_segments` so the pose is not pinned at the spline end.
    pub fn plan_knot_layout(&self, t_now: f64, horizon: f64, desired_end_time: Option<f64>) -> KnotLayout {
        let segments = ((horizon / self.spacing) - 1e-9).ceil().max(1.0) as usize;
        let end = t_now + segments as f64 * self.spacing;
        let extended = desired_end_time.is_some_and(|te| te > end - self.spacing + 1e-9 && te <= end + 1e-9);
        let total = segments + if extended { self.extension_segments } else { 0 };
        KnotLayout {
            t0: t_now - self.degree as f64 * self.spacing,
            control_count: self.degree + total,
            horizon_end: t_now + total as f64 * self.spacing,
            extended,
        }
    }
}
