use corridor_core::geometry::{ConvexPolytope, Halfplane, Point2, Shape};
use corridor_core::optimizer::{
    assemble_qp, plan_with_fallback, solve_qp, DerivativeLimit, DynamicRows, PlanRequest, PlanStatus, PlannerConfig, QpStatus, Waypoint,
    Weights,
};
use corridor_core::safe_region::{RegionSlice, SafeRegion, SliceFlag};
use corridor_core::spline::TrajectorySpline;
use nalgebra::{DMatrix, DVector};

fn regions(t_now: f64, horizon: f64, poly: impl Fn(Point2) -> ConvexPolytope) -> SafeRegion {
    let first = (t_now / 0.1).floor() as i64 + 1;
    let last = ((t_now + horizon) / 0.1 + 1e-9).floor() as i64;
    SafeRegion {
        slices: (first..=last)
            .map(|k| RegionSlice {
                step: k,
                t: k as f64 * 0.1,
                seed: Point2::ORIGIN,
                polytope: poly(Point2::ORIGIN),
                flags: Vec::new(),
                peer_planes: 0,
            })
            .collect(),
    }
}

fn open_request(goal: Point2, goal_time: Option<f64>) -> PlanRequest {
    PlanRequest {
        t_now: 0.0,
        initial_state: vec![Point2::ORIGIN, Point2::ORIGIN],
        waypoints: Vec::new(),
        goal,
        goal_time,
        end_velocity: Point2::ORIGIN,
        regions: regions(0.0, 6.0, |c| ConvexPolytope::axis_box(c, 50.0)),
        near_obstacles: Vec::new(),
        ego_radius: 0.0,
        previous: TrajectorySpline::stationary(Point2::ORIGIN, 3, 0.0, 1.0, 4),
        limits: vec![DerivativeLimit::symmetric(1, 100.0), DerivativeLimit::symmetric(2, 100.0)],
    }
}

/// Equality-constrained minimizer by a dense KKT solve.
fn kkt_oracle(h: &DMatrix<f64>, f: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = h.nrows();
    let m = a.nrows();
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(h);
    k.view_mut((n, 0), (m, n)).copy_from(a);
    k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-f));
    rhs.rows_mut(n, m).copy_from(b);
    k.lu().solve(&rhs).unwrap().rows(0, n).into_owned()
}

#[test]
fn loose_boxes_match_normal_equations() {
    let req = open_request(Point2::new(3.0, 1.0), Some(3.0));
    let w = Weights::default();
    let qp = assemble_qp(&req, &w, &PlannerConfig::default(), DynamicRows::Dense).unwrap();
    let sol = solve_qp(&qp.problem, None).unwrap();
    assert_eq!(sol.status, QpStatus::Solved);
    let oracle = kkt_oracle(&qp.problem.h, &qp.problem.f, &qp.problem.a_eq, &qp.problem.b_eq);
    assert!((&sol.x - &oracle).amax() < 1e-6);
}

#[test]
fn heavy_end_weight_reaches_goal() {
    let goal = Point2::new(3.0, 1.0);
    let req = open_request(goal, Some(3.0));
    let w = Weights { terminal_weight: 1e5, ..Weights::default() };
    let out = plan_with_fallback(&req, &w, &PlannerConfig::default(), None);
    assert_eq!(out.status, PlanStatus::Optimal);
    assert!(out.trajectory.evaluate(3.0, 0).unwrap().distance(goal) < 1e-3);
}

#[test]
fn wall_stops_at_boundary() {
    let mut req = open_request(Point2::new(5.0, 0.0), Some(3.0));
    req.regions = regions(0.0, 4.0, |c| {
        let mut p = ConvexPolytope::axis_box(c, 50.0);
        p.push(Halfplane::new(Point2::new(1.0, 0.0), 2.0).unwrap());
        p
    });
    let out = plan_with_fallback(&req, &Weights::default(), &PlannerConfig::default(), None);
    assert_eq!(out.status, PlanStatus::Optimal);
    let end = out.trajectory.evaluate(4.0, 0).unwrap();
    assert!((end.x - 2.0).abs() < 1e-4, "{end:?}");
    assert!(end.y.abs() < 1e-6);
}

#[test]
fn waypoint_is_interpolated() {
    let mut req = open_request(Point2::new(3.0, 0.0), Some(3.5));
    let wp = Point2::new(1.0, 1.5);
    req.waypoints.push(Waypoint { time: 2.0, position: wp });
    let out = plan_with_fallback(&req, &Weights::default(), &PlannerConfig::default(), None);
    assert_eq!(out.status, PlanStatus::Optimal);
    assert!(out.trajectory.evaluate(2.0, 0).unwrap().distance(wp) < 1e-6);
}

#[test]
fn zero_weights_give_constant_velocity_line() {
    let mut req = open_request(Point2::new(9.0, 9.0), Some(3.0));
    let v0 = Point2::new(0.4, -0.3);
    req.initial_state = vec![Point2::new(1.0, 1.0), v0];
    let w = Weights { terminal_weight: 0.0, obstacle_weight: 0.0, lower_smoothness_weight: 0.0, ..Weights::default() };
    let out = plan_with_fallback(&req, &w, &PlannerConfig::default(), None);
    assert_eq!(out.status, PlanStatus::Optimal);
    for k in 0..=40 {
        let t = k as f64 * 0.1;
        let p = out.trajectory.evaluate(t, 0).unwrap();
        assert!(p.distance(Point2::new(1.0, 1.0) + v0 * t) < 1e-6);
    }
}

#[test]
fn initial_state_and_regions_are_respected() {
    let mut req = open_request(Point2::new(6.0, 2.0), None);
    req.t_now = 1.24;
    req.previous = TrajectorySpline::constant_velocity(Point2::new(0.5, 0.2), Point2::new(0.6, 0.1), 3, 1.24, 1.0, 4);
    req.initial_state = vec![Point2::new(0.5, 0.2), Point2::new(0.6, 0.1)];
    req.regions = regions(1.24, 4.0, |_| {
        let mut p = ConvexPolytope::axis_box(Point2::new(1.0, 0.0), 3.0);
        p.push(Halfplane::new(Point2::new(1.0, 1.0).normalized().unwrap(), 2.0).unwrap());
        p
    });
    let out = plan_with_fallback(&req, &Weights::default(), &PlannerConfig::default(), None);
    assert_eq!(out.status, PlanStatus::Optimal);
    let tr = &out.trajectory;
    assert!(tr.evaluate(1.24, 0).unwrap().distance(req.initial_state[0]) < 1e-6);
    assert!(tr.evaluate(1.24, 1).unwrap().distance(req.initial_state[1]) < 1e-6);
    for s in &req.regions.slices {
        assert!(s.polytope.max_violation(tr.evaluate(s.t, 0).unwrap()) < 1e-6);
    }
}

#[test]
fn over_tight_dense_boxes_fall_back_to_transitions() {
    let mut req = open_request(Point2::new(3.0, 0.0), None);
    req.initial_state = vec![Point2::ORIGIN, Point2::new(1.0, 0.0)];
    req.previous = TrajectorySpline::constant_velocity(Point2::ORIGIN, Point2::new(1.0, 0.0), 3, 0.0, 1.0, 4);
    req.limits = vec![DerivativeLimit::symmetric(1, 0.5), DerivativeLimit::symmetric(2, 1.0)];
    let cfg = PlannerConfig::default();
    let dense = assemble_qp(&req, &Weights::default(), &cfg, DynamicRows::Dense).unwrap();
    assert_ne!(solve_qp(&dense.problem, None).unwrap().status, QpStatus::Solved);
    let out = plan_with_fallback(&req, &Weights::default(), &cfg, None);
    assert_eq!(out.status, PlanStatus::Relaxed);
    assert_eq!(out.records.len(), 2);
    for j in 1..=4 {
        let t = j as f64;
        let v = out.trajectory.evaluate(t, 1).unwrap();
        assert!(req.limits[0].contains(v, 1e-6));
        assert!(req.limits[1].contains(out.trajectory.evaluate(t, 2).unwrap(), 1e-6));
    }
    assert!(out.trajectory.evaluate(0.0, 0).unwrap().norm() < 1e-9);
}

#[test]
fn walled_in_keeps_previous_trajectory() {
    let mut req = open_request(Point2::new(3.0, 0.0), None);
    req.initial_state = vec![Point2::ORIGIN, Point2::new(1.0, 0.0)];
    req.previous = TrajectorySpline::constant_velocity(Point2::ORIGIN, Point2::new(1.0, 0.0), 3, -0.5, 1.0, 4);
    // A region that excludes the current position.
    req.regions = regions(0.0, 4.0, |_| ConvexPolytope::axis_box(Point2::new(-3.0, 0.0), 0.5));
    let out = plan_with_fallback(&req, &Weights::default(), &PlannerConfig::default(), None);
    assert_eq!(out.status, PlanStatus::Fallback);
    assert!(out.trajectory.domain().1 >= 4.0);
    for k in 0..30 {
        let t = -0.5 + k as f64 * 0.1;
        assert_eq!(out.trajectory.evaluate(t, 0).unwrap(), req.previous.evaluate(t, 0).unwrap());
    }
}

#[test]
fn blocked_slices_everywhere_is_an_error() {
    let mut req = open_request(Point2::new(3.0, 0.0), None);
    for s in &mut req.regions.slices {
        s.flags.push(SliceFlag::SeedBlocked);
    }
    let err = assemble_qp(&req, &Weights::default(), &PlannerConfig::default(), DynamicRows::Dense);
    assert!(err.is_err());
    let out = plan_with_fallback(&req, &Weights::default(), &PlannerConfig::default(), None);
    assert_eq!(out.status, PlanStatus::Fallback);
    assert!(out.error.is_some());
}

#[test]
fn fourth_order_request_uses_quintic_splines() {
    let mut req = open_request(Point2::new(2.0, 2.0), Some(3.0));
    req.initial_state = vec![Point2::ORIGIN; 4];
    req.previous = TrajectorySpline::stationary(Point2::ORIGIN, 5, 0.0, 1.0, 4);
    let out = plan_with_fallback(&req, &Weights::default(), &PlannerConfig::default(), None);
    assert_eq!(out.status, PlanStatus::Optimal);
    assert_eq!(out.trajectory.degree(), 5);
    for order in 0..4 {
        assert!(out.trajectory.evaluate(0.0, order).unwrap().norm() < 1e-6);
    }
}

#[test]
fn repeated_cycles_in_a_static_world_contract() {
    let obstacle = Shape::circle(Point2::new(1.5, 0.35), 0.3).unwrap();
    let mut req = open_request(Point2::new(3.0, 0.0), Some(3.0));
    req.near_obstacles = vec![obstacle];
    req.ego_radius = 0.1;
    let w = Weights { obstacle_weight: 5.0, ..Weights::default() };
    let cfg = PlannerConfig::default();
    let mut deltas = Vec::new();
    let mut prev = req.previous.clone();
    for _ in 0..5 {
        req.previous = prev.clone();
        let out = plan_with_fallback(&req, &w, &cfg, None);
        assert_eq!(out.status, PlanStatus::Optimal);
        let mut d = 0.0f64;
        if prev.control_count() == out.trajectory.control_count() {
            for (a, b) in prev.x().control().iter().zip(out.trajectory.x().control()) {
                d = d.max((a - b).abs());
            }
            for (a, b) in prev.y().control().iter().zip(out.trajectory.y().control()) {
                d = d.max((a - b).abs());
            }
        }
        deltas.push(d);
        prev = out.trajectory;
    }
    assert!(deltas[4] < deltas[1], "{deltas:?}");
}

#[test]
fn warm_start_reproduces_answer() {
    let mut req = open_request(Point2::new(5.0, 0.0), Some(3.0));
    req.regions = regions(0.0, 4.0, |c| {
        let mut p = ConvexPolytope::axis_box(c, 50.0);
        p.push(Halfplane::new(Point2::new(1.0, 0.0), 2.0).unwrap());
        p
    });
    let cfg = PlannerConfig::default();
    let cold = plan_with_fallback(&req, &Weights::default(), &cfg, None);
    let warm = plan_with_fallback(&req, &Weights::default(), &cfg, Some(&cold.active));
    assert!(warm.records[0].iterations <= 2);
    for k in 0..=40 {
        let t = k as f64 * 0.1;
        let a = cold.trajectory.evaluate(t, 0).unwrap();
        let b = warm.trajectory.evaluate(t, 0).unwrap();
        assert!(a.distance(b) < 1e-8);
    }
}
