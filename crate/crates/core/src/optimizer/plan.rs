//! Per-cycle QP assembly and the infeasibility fallback.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cost::{end_cost, end_time_heuristic, quadratize_collision_onto, Weights};
use super::qp::{solve_qp_with, QpProblem, QpSettings, QpStatus, Side};
use crate::geometry::{Point2, Shape};
use crate::safe_region::SafeRegion;
use crate::spline::{derivative_gram, KnotLayout, KnotPlanner, SplineError, TrajectorySpline, UniformBSpline};

/// Per-axis box on one derivative order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivativeLimit {
    pub order: usize,
    pub lower: Point2,
    pub upper: Point2,
}

impl DerivativeLimit {
    pub fn symmetric(order: usize, bound: f64) -> Self {
        Self { order, lower: Point2::new(-bound, -bound), upper: Point2::new(bound, bound) }
    }

    pub fn contains(&self, v: Point2, tol: f64) -> bool {
        v.x >= self.lower.x - tol && v.x <= self.upper.x + tol && v.y >= self.lower.y - tol && v.y <= self.upper.y + tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub time: f64,
    pub position: Point2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub t_now: f64,
    /// Position and derivatives `0..n` at `t_now`; its length is the system order.
    pub initial_state: Vec<Point2>,
    pub waypoints: Vec<Waypoint>,
    pub goal: Point2,
    pub goal_time: Option<f64>,
    pub end_velocity: Point2,
    pub regions: SafeRegion,
    pub near_obstacles: Vec<Shape>,
    /// Clearance subtracted from obstacle distances in the collision cost.
    pub ego_radius: f64,
    pub previous: TrajectorySpline,
    pub limits: Vec<DerivativeLimit>,
}

impl PlanRequest {
    pub fn order(&self) -> usize {
        self.initial_state.len()
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.initial_state.is_empty() {
            return Err(PlanError::BadRequest("empty initial state"));
        }
        if self.initial_state.iter().any(|p| !p.is_finite()) || !self.goal.is_finite() || !self.t_now.is_finite() {
            return Err(PlanError::BadRequest("non-finite state"));
        }
        if self.waypoints.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(PlanError::BadRequest("waypoint times must increase"));
        }
        for l in &self.limits {
            if !(l.lower.x < l.upper.x && l.lower.y < l.upper.y) {
                return Err(PlanError::BadRequest("limit lower bound must be below upper"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub horizon: f64,
    pub sample_dt: f64,
    pub t_segment: f64,
    pub extension_segments: usize,
    /// Velocity-matching weight relative to `terminal_weight`.
    pub end_velocity_ratio: f64,
    /// Waypoints closer than this to `t_now` are left to continuity.
    pub min_waypoint_lead: f64,
    /// Acceleration used by the end-time heuristic when no limit is given.
    pub default_accel: f64,
    /// Linear and quadratic cost on a slice's peer-plane violation. The
    /// linear part keeps the penalty exact whenever the planes are feasible.
    pub peer_violation_linear: f64,
    pub peer_violation_quadratic: f64,
    pub qp: QpSettings,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 4.0,
            sample_dt: 0.1,
            t_segment: 1.0,
            extension_segments: 2,
            end_velocity_ratio: 0.5,
            min_waypoint_lead: 1e-3,
            default_accel: 1.0,
            peer_violation_linear: 1e5,
            peer_violation_quadratic: 1e6,
            qp: QpSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("bad request: {0}")]
    BadRequest(&'static str),
    #[error("every region slice is infeasible")]
    AllSlicesInfeasible,
    #[error(transparent)]
    Spline(#[from] SplineError),
}

/// Where the derivative boxes are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicRows {
    /// Every τ-grid instant in the horizon.
    Dense,
    /// Knot transitions only.
    Transitions,
}

/// Identity of an inequality row, stable across cycles for warm starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RowTag {
    Region { step: i64, plane: usize },
    Dynamic { step: i64, order: usize, axis: u8 },
    PeerSlack { step: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledQp {
    pub problem: QpProblem,
    pub tags: Vec<RowTag>,
    pub layout: KnotLayout,
    pub degree: usize,
    pub spacing: f64,
    /// Goal instant used by the end cost.
    pub goal_time: f64,
}

impl AssembledQp {
    pub fn trajectory(&self, x: &DVector<f64>) -> TrajectorySpline {
        let m = self.layout.control_count;
        TrajectorySpline::from_control(
            self.degree,
            self.layout.t0,
            self.spacing,
            x.rows(0, m).iter().copied().collect(),
            x.rows(m, m).iter().copied().collect(),
        )
        .expect("layout has enough control points")
    }
}

fn accel_bound(limits: &[DerivativeLimit], fallback: f64) -> f64 {
    limits
        .iter()
        .find(|l| l.order == 2)
        .map(|l| [l.lower.x, l.lower.y, l.upper.x, l.upper.y].iter().fold(f64::INFINITY, |a, v| a.min(v.abs())))
        .filter(|a| *a > 0.0 && a.is_finite())
        .unwrap_or(fallback)
}

/// Goal instant: the requested one, else the heuristic from the current state.
pub fn resolve_goal_time(req: &PlanRequest, cfg: &PlannerConfig) -> f64 {
    req.goal_time.unwrap_or_else(|| {
        let v0 = req.initial_state.get(1).copied().unwrap_or(Point2::ORIGIN);
        let a = accel_bound(&req.limits, cfg.default_accel);
        req.t_now + end_time_heuristic(req.initial_state[0], v0, req.goal, a, cfg.t_segment)
    })
}

/// `(target, time, order, weight)` terms of the end cost.
fn end_terms(req: &PlanRequest, cfg: &PlannerConfig, w: &Weights, te: f64, h_end: f64) -> Vec<(Point2, f64, usize, f64)> {
    let qf = w.terminal_weight;
    let qv = w.terminal_weight * cfg.end_velocity_ratio;
    let p0 = req.initial_state[0];
    let stop = req.end_velocity.norm() == 0.0;
    let mut terms = Vec::new();
    if te <= req.t_now + 1e-9 {
        // Goal instant has passed: settle at the goal, or coast to a stop
        // beyond it for a moving goal.
        let rest = if stop {
            req.goal
        } else {
            let a = accel_bound(&req.limits, cfg.default_accel);
            let v = req.end_velocity;
            req.goal + v * (v.norm() / (2.0 * a))
        };
        // Pin every remaining knot so the robot settles instead of drifting
        // through the rest point.
        let mut t = req.t_now + cfg.t_segment;
        while t <= h_end + 1e-9 {
            terms.push((rest, t, 0, qf));
            terms.push((Point2::ORIGIN, t, 1, qv));
            t += cfg.t_segment;
        }
    } else if te <= h_end + 1e-9 {
        terms.push((req.goal, te, 0, qf));
        terms.push((req.end_velocity, te, 1, qv));
        if stop && te < h_end - 1e-9 {
            terms.push((req.goal, h_end, 0, qf));
            terms.push((Point2::ORIGIN, h_end, 1, qv));
        }
    } else {
        // Beyond the horizon: aim for the pro-rated point on the straight
        // line from the last in-horizon waypoint (or the current position)
        // to the next deferred waypoint (or the goal), at the average speed.
        let (ta, pa) = req
            .waypoints
            .iter()
            .filter(|w| w.time > req.t_now && w.time <= h_end + 1e-9)
            .last()
            .map_or((req.t_now, p0), |w| (w.time, w.position));
        let (tb, pb) = req.waypoints.iter().find(|w| w.time > h_end + 1e-9).map_or((te, req.goal), |w| (w.time, w.position));
        let frac = (h_end - ta) / (tb - ta);
        let mid = pa + (pb - pa) * frac;
        let v = (pb - pa) / (tb - ta);
        terms.push((mid, h_end, 0, qf));
        terms.push((v, h_end, 1, qv));
    }
    terms
}

fn dynamic_times(req: &PlanRequest, cfg: &PlannerConfig, layout: &KnotLayout, mode: DynamicRows) -> Vec<(i64, f64)> {
    match mode {
        DynamicRows::Dense => {
            let first = (req.t_now / cfg.sample_dt - 1e-9).ceil() as i64;
            let last = (layout.horizon_end / cfg.sample_dt + 1e-9).floor() as i64;
            (first..=last).map(|k| (k, k as f64 * cfg.sample_dt)).collect()
        }
        DynamicRows::Transitions => {
            let segments = ((layout.horizon_end - req.t_now) / cfg.t_segment).round() as usize;
            (0..=segments)
                .map(|j| {
                    let t = req.t_now + j as f64 * cfg.t_segment;
                    ((t / cfg.sample_dt).round() as i64, t.min(layout.horizon_end))
                })
                .collect()
        }
    }
}

/// Builds the cycle's QP over `[cx; cy]`.
pub fn assemble_qp(req: &PlanRequest, w: &Weights, cfg: &PlannerConfig, mode: DynamicRows) -> Result<AssembledQp, PlanError> {
    req.validate()?;
    let n = req.order();
    let degree = n + 1;
    let te = resolve_goal_time(req, cfg);
    let planner = KnotPlanner { degree, spacing: cfg.t_segment, extension_segments: cfg.extension_segments };
    let layout = planner.plan_knot_layout(req.t_now, cfg.horizon, Some(te));
    let m = layout.control_count;
    let in_span = |t: f64| t > req.t_now + 1e-9 && t <= layout.horizon_end + 1e-9;
    let soft = req.regions.slices.iter().filter(|s| in_span(s.t) && s.usable() && s.peer_planes > 0).count();
    // Decision vector: `[cx; cy; one peer slack per soft slice]`.
    let dim = 2 * m + soft;
    let basis = UniformBSpline::new(degree, layout.t0, cfg.t_segment, vec![0.0; m])?;
    let span = (req.t_now, layout.horizon_end);

    let mut h = DMatrix::zeros(dim, dim);
    let mut f = DVector::zeros(dim);
    for (order, weight) in [(n, w.smoothness_weight), (n - 1, w.lower_smoothness_weight)] {
        if weight == 0.0 {
            continue;
        }
        let g = derivative_gram(degree, m, layout.t0, cfg.t_segment, span, order) * (2.0 * weight);
        let mut block = h.view_mut((0, 0), (m, m));
        block += &g;
        let mut block = h.view_mut((m, m), (m, m));
        block += &g;
    }
    for (target, t, order, weight) in end_terms(req, cfg, w, te, layout.horizon_end) {
        let (he, fe) = end_cost(target, t, &basis, order, weight)?;
        let mut block = h.view_mut((0, 0), (2 * m, 2 * m));
        block += he;
        let mut seg = f.rows_mut(0, 2 * m);
        seg += fe;
    }
    if w.obstacle_weight > 0.0 {
        for obs in &req.near_obstacles {
            let q = quadratize_collision_onto(&req.previous, obs, span, w, &basis, req.ego_radius);
            let mut block = h.view_mut((0, 0), (2 * m, 2 * m));
            block += q.h * w.obstacle_weight;
            let mut seg = f.rows_mut(0, 2 * m);
            seg += q.f * w.obstacle_weight;
        }
    }

    // Equalities: state continuity, then in-horizon waypoints.
    let mut eq_rows: Vec<(usize, usize, Vec<f64>, f64)> = Vec::new();
    let push_point = |t: f64, order: usize, value: Point2, rows: &mut Vec<(usize, usize, Vec<f64>, f64)>| -> Result<(), SplineError> {
        let (first, wts) = basis.weights(t, order)?;
        rows.push((first, 0, wts.clone(), value.x));
        rows.push((first, 1, wts, value.y));
        Ok(())
    };
    for (order, value) in req.initial_state.iter().enumerate() {
        push_point(req.t_now, order, *value, &mut eq_rows)?;
    }
    for wp in &req.waypoints {
        if wp.time > req.t_now + cfg.min_waypoint_lead && wp.time <= layout.horizon_end + 1e-9 {
            push_point(wp.time, 0, wp.position, &mut eq_rows)?;
        }
    }
    let mut a_eq = DMatrix::zeros(eq_rows.len(), dim);
    let mut b_eq = DVector::zeros(eq_rows.len());
    for (r, (first, axis, wts, value)) in eq_rows.iter().enumerate() {
        for (k, wk) in wts.iter().enumerate() {
            a_eq[(r, axis * m + first + k)] = *wk;
        }
        b_eq[r] = *value;
    }

    // Inequalities: region halfplanes per slice, then derivative boxes.
    let mut rows: Vec<(Vec<(usize, f64)>, f64, f64, RowTag)> = Vec::new();
    let mut in_horizon = 0usize;
    let mut usable = 0usize;
    let mut next_slack = 2 * m;
    for slice in &req.regions.slices {
        if !in_span(slice.t) {
            continue;
        }
        in_horizon += 1;
        if !slice.usable() {
            continue;
        }
        usable += 1;
        let (first, wts) = basis.weights(slice.t, 0)?;
        let planes = slice.polytope.halfplanes();
        let soft_from = planes.len() - slice.peer_planes.min(planes.len());
        let slack = (slice.peer_planes > 0).then(|| {
            next_slack += 1;
            next_slack - 1
        });
        if let Some(j) = slack {
            h[(j, j)] += cfg.peer_violation_quadratic;
            f[j] += cfg.peer_violation_linear;
            rows.push((vec![(j, 1.0)], 0.0, f64::INFINITY, RowTag::PeerSlack { step: slice.step }));
        }
        for (pi, hp) in planes.iter().enumerate() {
            let mut coeffs = Vec::with_capacity(2 * wts.len() + 1);
            for (k, wk) in wts.iter().enumerate() {
                coeffs.push((first + k, hp.normal.x * wk));
                coeffs.push((m + first + k, hp.normal.y * wk));
            }
            if let (Some(j), true) = (slack, pi >= soft_from) {
                coeffs.push((j, -1.0));
            }
            rows.push((coeffs, f64::NEG_INFINITY, hp.offset, RowTag::Region { step: slice.step, plane: pi }));
        }
    }
    if in_horizon > 0 && usable == 0 {
        return Err(PlanError::AllSlicesInfeasible);
    }
    for (step, t) in dynamic_times(req, cfg, &layout, mode) {
        for lim in &req.limits {
            if lim.order == 0 || lim.order > degree {
                continue;
            }
            // Orders fixed by the state equality are not re-checked at t_now.
            if lim.order < n && (t - req.t_now).abs() < 1e-9 {
                continue;
            }
            let (first, wts) = basis.weights(t, lim.order)?;
            for axis in 0..2u8 {
                let (lo, hi) = if axis == 0 { (lim.lower.x, lim.upper.x) } else { (lim.lower.y, lim.upper.y) };
                let off = axis as usize * m;
                let coeffs = wts.iter().enumerate().map(|(k, wk)| (off + first + k, *wk)).collect();
                rows.push((coeffs, lo, hi, RowTag::Dynamic { step, order: lim.order, axis }));
            }
        }
    }
    let mut a_in = DMatrix::zeros(rows.len(), dim);
    let mut lower = DVector::zeros(rows.len());
    let mut upper = DVector::zeros(rows.len());
    let mut tags = Vec::with_capacity(rows.len());
    for (r, (coeffs, lo, hi, tag)) in rows.into_iter().enumerate() {
        for (c, v) in coeffs {
            a_in[(r, c)] += v;
        }
        lower[r] = lo;
        upper[r] = hi;
        tags.push(tag);
    }

    let problem = QpProblem { h, f, a_eq, b_eq, a_in, lower, upper };
    Ok(AssembledQp { problem, tags, layout, degree, spacing: cfg.t_segment, goal_time: te })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    /// Dense pass solved.
    Optimal,
    /// Dense pass failed; the transitions-only pass solved.
    Relaxed,
    /// Both passes failed; the previous trajectory is kept.
    Fallback,
}

/// One solver call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub pass: DynamicRows,
    pub status: QpStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub solve_time_us: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub trajectory: TrajectorySpline,
    pub status: PlanStatus,
    pub records: Vec<SolveRecord>,
    /// Active inequality rows of the accepted solve (empty on fallback).
    pub active: Vec<(RowTag, Side)>,
    pub error: Option<PlanError>,
}

/// Tolerance on primal feasibility for accepting a solve.
const ACCEPT_TOL: f64 = 1e-6;

fn attempt(
    req: &PlanRequest,
    w: &Weights,
    cfg: &PlannerConfig,
    mode: DynamicRows,
    warm: Option<&[(RowTag, Side)]>,
    records: &mut Vec<SolveRecord>,
) -> Result<Option<(TrajectorySpline, Vec<(RowTag, Side)>)>, PlanError> {
    let qp = assemble_qp(req, w, cfg, mode)?;
    let warm_idx: Option<Vec<(usize, Side)>> = warm.map(|ws| {
        let index: HashMap<RowTag, usize> = qp.tags.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        ws.iter().filter_map(|(t, s)| index.get(t).map(|&i| (i, *s))).collect()
    });
    let sol = match solve_qp_with(&qp.problem, warm_idx.as_deref(), &cfg.qp) {
        Ok(s) => s,
        Err(_) => return Err(PlanError::BadRequest("malformed QP")),
    };
    records.push(SolveRecord {
        pass: mode,
        status: sol.status,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
        solve_time_us: sol.solve_time_us,
    });
    if sol.status != QpStatus::Solved {
        return Ok(None);
    }
    let (eq, ineq) = qp.problem.violations(&sol.x);
    if eq > ACCEPT_TOL || ineq > ACCEPT_TOL {
        return Ok(None);
    }
    let active = sol.active.iter().map(|(i, s)| (qp.tags[*i], *s)).collect();
    Ok(Some((qp.trajectory(&sol.x), active)))
}

/// Previous trajectory held long enough to cover the horizon.
pub fn hold_previous(previous: &TrajectorySpline, t_now: f64, horizon: f64) -> TrajectorySpline {
    let mut traj = previous.clone();
    let short = t_now + horizon - traj.domain().1;
    if short > 0.0 {
        traj.extend_hold((short / traj.spacing()).ceil() as usize);
    }
    traj
}

/// Dense solve; on failure the transitions-only solve; on failure again the
/// previous trajectory.
pub fn plan_with_fallback(req: &PlanRequest, w: &Weights, cfg: &PlannerConfig, warm: Option<&[(RowTag, Side)]>) -> PlanOutcome {
    let mut records = Vec::new();
    let mut error = None;
    for mode in [DynamicRows::Dense, DynamicRows::Transitions] {
        match attempt(req, w, cfg, mode, warm, &mut records) {
            Ok(Some((trajectory, active))) => {
                let status = if mode == DynamicRows::Dense { PlanStatus::Optimal } else { PlanStatus::Relaxed };
                return PlanOutcome { trajectory, status, records, active, error: None };
            }
            Ok(None) => {}
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }
    PlanOutcome {
        trajectory: hold_previous(&req.previous, req.t_now, cfg.horizon),
        status: PlanStatus::Fallback,
        records,
        active: Vec::new(),
        error,
    }
}
