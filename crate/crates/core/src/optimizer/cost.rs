//! Cost terms over the stacked control vector `[cx; cy]`.
//!
//! All quadratic terms use the convention `½ cᵀHc + Fᵀc (+ c0)`.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::geometry::{Point2, Shape};
use crate::quadrature::gauss_legendre;
use crate::spline::{SplineError, TrajectorySpline, UniformBSpline};

/// Distances below this are treated as this value inside the kernel.
pub const DISTANCE_FLOOR: f64 = 1e-3;
/// Nodes per knot interval for collision integrals.
pub const COLLISION_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    /// Weight on the integrated squared `n`-th derivative.
    pub smoothness_weight: f64,
    /// Weight on the integrated squared `(n-1)`-th derivative.
    pub lower_smoothness_weight: f64,
    pub terminal_weight: f64,
    pub obstacle_weight: f64,
    /// Decay rate of the collision kernel, 1/m.
    pub kernel_decay: f64,
    /// Distance at which the kernel equals `1 / kernel_decay`, m.
    pub kernel_threshold: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            smoothness_weight: 1.0,
            lower_smoothness_weight: 0.1,
            terminal_weight: 100.0,
            obstacle_weight: 1.0,
            kernel_decay: 10.0,
            kernel_threshold: 0.2,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<(), &'static str> {
        let all = [self.smoothness_weight, self.lower_smoothness_weight, self.terminal_weight, self.obstacle_weight, self.kernel_threshold];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err("weights must be finite and non-negative");
        }
        if !(self.kernel_decay > 0.0 && self.kernel_decay.is_finite()) {
            return Err("kernel_decay must be positive");
        }
        Ok(())
    }

    /// Beyond this distance the kernel slope is below `e^-25`.
    pub fn influence_radius(&self) -> f64 {
        self.kernel_threshold + 25.0 / self.kernel_decay
    }
}

/// `φ(d) = exp(-kernel_decay (max(d, ε) - ρ)) / kernel_decay`.
pub fn collision_kernel(d: f64, w: &Weights) -> f64 {
    (-w.kernel_decay * (d.max(DISTANCE_FLOOR) - w.kernel_threshold)).exp() / w.kernel_decay
}

/// `(φ, φ', φ'')`; the derivatives vanish on the floored range.
fn kernel_derivatives(d: f64, w: &Weights) -> (f64, f64, f64) {
    let kernel = collision_kernel(d, w);
    if d <= DISTANCE_FLOOR {
        (kernel, 0.0, 0.0)
    } else {
        (kernel, -w.kernel_decay * kernel, w.kernel_decay * w.kernel_decay * kernel)
    }
}

/// Distance from `p` to `shape` shrunk by `offset` (clamped at zero), with
/// its gradient and Hessian in `p`. Both vanish where the distance is zero.
fn distance_jet(p: Point2, shape: &Shape, offset: f64) -> (f64, Point2, Matrix2<f64>) {
    let zero = (0.0, Point2::ORIGIN, Matrix2::zeros());
    let (raw, q, curved) = match shape {
        Shape::Circle { center, radius } => {
            let r = p.distance(*center);
            if r <= *radius {
                return zero;
            }
            (r - radius, *center + (p - *center) * (*radius / r), Some(r))
        }
        _ => {
            if shape.contains(p) {
                return zero;
            }
            let q = shape.nearest_boundary_point(p);
            let d = p.distance(q);
            let corners = shape.polygon().expect("polygonal shape");
            let at_vertex = corners.iter().any(|c| c.distance(q) <= 1e-12 * (1.0 + d));
            (d, q, if at_vertex { Some(d) } else { None })
        }
    };
    let d = raw - offset;
    if d <= 0.0 || raw <= 0.0 {
        return zero;
    }
    let u = (p - q) / raw;
    let mut hess = Matrix2::zeros();
    if let Some(curv) = curved {
        hess = (Matrix2::identity() - Matrix2::new(u.x * u.x, u.x * u.y, u.x * u.y, u.y * u.y)) / curv;
    }
    (d, u, hess)
}

/// Kernel value, gradient and PSD-clamped Hessian of `φ(d(p))`.
fn kernel_jet(p: Point2, shape: &Shape, offset: f64, w: &Weights) -> (f64, Point2, Matrix2<f64>) {
    let (d, g, hd) = distance_jet(p, shape, offset);
    let (kernel, d1, d2) = kernel_derivatives(d, w);
    let grad = g * d1;
    let outer = Matrix2::new(g.x * g.x, g.x * g.y, g.x * g.y, g.y * g.y);
    let hess = outer * d2 + hd * d1;
    (kernel, grad, clamp_psd(hess))
}

fn clamp_psd(m: Matrix2<f64>) -> Matrix2<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    &eig.eigenvectors * Matrix2::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Gauss nodes `(t, weight)` on every knot interval of `basis` clipped to `span`.
fn collision_nodes(basis: &UniformBSpline, span: (f64, f64)) -> Vec<(f64, f64)> {
    let (xs, ws) = gauss_legendre(COLLISION_NODES);
    let mut out = Vec::new();
    for j in basis.degree()..basis.len() {
        let a = span.0.max(basis.knot(j));
        let b = span.1.min(basis.knot(j + 1));
        if b <= a {
            continue;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        out.extend(xs.iter().zip(ws).map(|(x, w)| (mid + half * x, w * half)));
    }
    out
}

/// `∫_span φ(d(x(t))) dt` by composite Gauss–Legendre on the trajectory's
/// knot intervals.
pub fn collision_cost_closed_form(traj: &TrajectorySpline, obs: &Shape, span: (f64, f64), w: &Weights) -> Result<f64, SplineError> {
    collision_cost_offset(traj, obs, span, w, 0.0)
}

/// As [`collision_cost_closed_form`] with the distance reduced by `offset`
/// (the planning robot's radius).
pub fn collision_cost_offset(traj: &TrajectorySpline, obs: &Shape, span: (f64, f64), w: &Weights, offset: f64) -> Result<f64, SplineError> {
    let mut total = 0.0;
    for (t, wt) in collision_nodes(traj.x(), span) {
        let p = traj.evaluate(t, 0)?;
        total += wt * collision_kernel(distance_jet(p, obs, offset).0, w);
    }
    Ok(total)
}

/// Local quadratic model `½ cᵀHc + Fᵀc + c0` of a collision integral.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionQuadratic {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub c0: f64,
}

impl CollisionQuadratic {
    pub fn value(&self, c: &DVector<f64>) -> f64 {
        0.5 * c.dot(&(&self.h * c)) + self.f.dot(c) + self.c0
    }
}

/// Second-order expansion of the collision integral around `previous`, in
/// the control space of `previous` itself.
pub fn quadratize_collision(previous: &TrajectorySpline, obs: &Shape, span: (f64, f64), w: &Weights) -> CollisionQuadratic {
    quadratize_collision_onto(previous, obs, span, w, previous.x(), 0.0)
}

/// Expansion around `previous` (clamped outside its domain), mapped into the
/// control space of `basis` (only its layout is used). Nodes farther than
/// the influence radius contribute their value only.
pub fn quadratize_collision_onto(
    previous: &TrajectorySpline,
    obs: &Shape,
    span: (f64, f64),
    w: &Weights,
    basis: &UniformBSpline,
    offset: f64,
) -> CollisionQuadratic {
    let m = basis.len();
    let mut h = DMatrix::zeros(2 * m, 2 * m);
    let mut f = DVector::zeros(2 * m);
    let mut c0 = 0.0;
    let reach = w.influence_radius() + offset;
    for (t, wt) in collision_nodes(basis, span) {
        let x0 = previous.position_clamped(t);
        if obs.distance(x0) > reach {
            c0 += wt * collision_kernel(distance_jet(x0, obs, offset).0, w);
            continue;
        }
        let (kernel, g, hx) = kernel_jet(x0, obs, offset, w);
        let hx0 = hx * nalgebra::Vector2::new(x0.x, x0.y);
        c0 += wt * (kernel - g.dot(x0) + 0.5 * (x0.x * hx0.x + x0.y * hx0.y));
        let lin = [g.x - hx0.x, g.y - hx0.y];
        let (first, row) = basis.weights(t, 0).expect("node inside basis domain");
        for (a, wa) in row.iter().enumerate() {
            let ia = first + a;
            f[ia] += wt * wa * lin[0];
            f[m + ia] += wt * wa * lin[1];
            for (b, wb) in row.iter().enumerate() {
                let ib = first + b;
                let s = wt * wa * wb;
                h[(ia, ib)] += s * hx[(0, 0)];
                h[(ia, m + ib)] += s * hx[(0, 1)];
                h[(m + ia, ib)] += s * hx[(1, 0)];
                h[(m + ia, m + ib)] += s * hx[(1, 1)];
            }
        }
    }
    CollisionQuadratic { h, f, c0 }
}

/// `weight · ‖x^(order)(t) − target‖²` as `(H, F)` over `[cx; cy]`; the
/// constant `weight·‖target‖²` is dropped.
pub fn end_cost(
    target: Point2,
    t: f64,
    basis: &UniformBSpline,
    order: usize,
    weight: f64,
) -> Result<(DMatrix<f64>, DVector<f64>), SplineError> {
    let m = basis.len();
    let mut h = DMatrix::zeros(2 * m, 2 * m);
    let mut f = DVector::zeros(2 * m);
    if weight == 0.0 {
        return Ok((h, f));
    }
    let (first, row) = basis.weights(t, order)?;
    for (a, wa) in row.iter().enumerate() {
        f[first + a] -= 2.0 * weight * wa * target.x;
        f[m + first + a] -= 2.0 * weight * wa * target.y;
        for (b, wb) in row.iter().enumerate() {
            let v = 2.0 * weight * wa * wb;
            h[(first + a, first + b)] += v;
            h[(m + first + a, m + first + b)] += v;
        }
    }
    Ok((h, f))
}

/// Time to cover the distance to `goal` from speed `‖v0‖` under constant
/// acceleration `a_max`, never less than two knot segments.
pub fn end_time_heuristic(p0: Point2, v0: Point2, goal: Point2, a_max: f64, t_segment: f64) -> f64 {
    let d = goal.distance(p0);
    let floor = 2.0 * t_segment;
    if d <= 0.0 || !(a_max > 0.0) {
        return floor;
    }
    let v = v0.norm();
    let t = (-v + (v * v + 2.0 * a_max * d).sqrt()) / a_max;
    t.max(floor)
}
