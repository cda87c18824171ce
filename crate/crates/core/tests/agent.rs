use corridor_core::agent::{ideal_track, Agent, AgentConfig, AgentTask, Bus, BusConfig, CycleFlag, CycleReport, StageOrder};
use corridor_core::geometry::{Point2, Shape};
use corridor_core::optimizer::PlanStatus;
use corridor_core::perception::PositionAt;
use corridor_core::sensor::{simulate_sweep, Bounds, Pose2, World};
use corridor_core::spline::TrajectorySpline;

fn world(obstacles: Vec<Shape>) -> World {
    World::new(obstacles, Bounds::new(Point2::new(-30.0, -30.0), Point2::new(30.0, 30.0))).unwrap()
}

fn task(goal: Point2, goal_time: Option<f64>) -> AgentTask {
    AgentTask { goal, goal_time, end_velocity: Point2::ORIGIN, waypoints: Vec::new() }
}

/// Minimal driver: 25 Hz cycles, 5 Hz scans, broadcasts when due. Returns
/// reports and τ-grid positions per agent.
fn drive(agents: &mut [Agent], world: &World, bus: &Bus, duration: f64) -> (Vec<Vec<CycleReport>>, Vec<Vec<Point2>>) {
    let dt = 1.0 / 25.0;
    let ticks = (duration / dt).round() as usize;
    let mut reports = vec![Vec::new(); agents.len()];
    let mut samples = vec![Vec::new(); agents.len()];
    let mut next_sample = 0i64;
    for tick in 0..=ticks {
        let now = tick as f64 * dt;
        if tick % 5 == 0 && tick > 0 {
            for a in agents.iter_mut() {
                let lidar = a.config().lidar;
                let start = now - lidar.sweep_duration();
                let scan = simulate_sweep(world, |t| a.pose_at(t), &lidar, start).unwrap();
                a.receive_scan(scan);
            }
        }
        for (i, a) in agents.iter_mut().enumerate() {
            reports[i].push(a.agent_cycle(now, bus, i));
        }
        for (i, a) in agents.iter_mut().enumerate() {
            if a.broadcast_due(now) {
                bus.publish(i, a.broadcast(now));
            }
        }
        while (next_sample as f64) * 0.1 < now + dt - 1e-9 {
            let t = next_sample as f64 * 0.1;
            for (i, a) in agents.iter().enumerate() {
                samples[i].push(a.trajectory().position_clamped(t));
            }
            next_sample += 1;
        }
    }
    (reports, samples)
}

#[test]
fn ideal_track_examples() {
    let tr = TrajectorySpline::from_control(3, -3.0, 1.0, vec![0.0, 1.0, 3.0, 2.0, 5.0, 4.0, 6.0], vec![1.0, 0.0, 2.0, 1.0, 3.0, 0.5, 0.0])
        .unwrap();
    let s = ideal_track(&tr, 1.2, 1.2, 2).unwrap();
    assert_eq!(s.derivatives[0], tr.evaluate(1.2, 0).unwrap());
    let s = ideal_track(&tr, 1.0, 2.0, 2).unwrap();
    assert_eq!(s.derivatives[1], tr.evaluate(2.0, 1).unwrap());
    let mut chained = ideal_track(&tr, 0.0, 0.0, 2).unwrap();
    for k in 1..=100 {
        chained = ideal_track(&tr, chained.stamp, k as f64 * 0.03, 2).unwrap();
    }
    let single = ideal_track(&tr, 0.0, 3.0, 2).unwrap();
    assert!((chained.stamp - 3.0).abs() < 1e-12);
    assert!(chained.derivatives[0].distance(single.derivatives[0]) < 1e-12);
    assert!(ideal_track(&tr, 0.0, 9.0, 2).is_err());
}

#[test]
fn empty_world_reaches_goal_monotonically() {
    let goal = Point2::new(6.0, 2.0);
    let mut agents =
        vec![Agent::new(AgentConfig::default(), task(goal, Some(8.0)), Pose2::new(Point2::ORIGIN, 0.0), Point2::ORIGIN, 0.0).unwrap()];
    let bus = Bus::new(1, BusConfig::default(), 0);
    let (reports, samples) = drive(&mut agents, &world(Vec::new()), &bus, 9.0);
    assert!(reports[0].iter().all(|r| r.status == PlanStatus::Optimal));
    assert!(reports[0].iter().all(|r| r.continuity <= 1e-6));
    let at_goal_time = agents[0].executed().position_at(8.0);
    assert!(at_goal_time.distance(goal) < 0.1, "{at_goal_time:?}");
    let errs: Vec<f64> = samples[0].iter().map(|p| p.distance(goal)).collect();
    for k in 11..errs.len() {
        assert!(errs[k] <= errs[k - 1] + 1e-9, "error grew at sample {k}: {} -> {}", errs[k - 1], errs[k]);
    }
}

fn two_agent_run(order: StageOrder) -> (Vec<Vec<CycleReport>>, Vec<Vec<Point2>>) {
    let wall = Shape::axis_square(Point2::new(3.0, 1.2), 0.4).unwrap();
    let mut agents = vec![
        Agent::new(AgentConfig::default(), task(Point2::new(6.0, 0.0), Some(7.0)), Pose2::new(Point2::ORIGIN, 0.0), Point2::ORIGIN, 0.0)
            .unwrap(),
        Agent::new(
            AgentConfig::default(),
            task(Point2::new(0.0, 0.3), Some(7.0)),
            Pose2::new(Point2::new(6.0, 0.3), 0.0),
            Point2::ORIGIN,
            0.0,
        )
        .unwrap(),
    ];
    for a in &mut agents {
        a.set_stage_order(order);
    }
    let bus = Bus::new(2, BusConfig::default(), 3);
    drive(&mut agents, &world(vec![wall]), &bus, 4.0)
}

#[test]
fn runs_are_deterministic_and_order_independent() {
    let (ra, sa) = two_agent_run(StageOrder::DetectFirst);
    let (rb, sb) = two_agent_run(StageOrder::DetectFirst);
    let (rc, sc) = two_agent_run(StageOrder::MapFirst);
    assert_eq!(sa, sb);
    assert_eq!(sa, sc);
    let strip = |r: &Vec<Vec<CycleReport>>| -> Vec<(PlanStatus, usize, usize)> {
        r.iter().flatten().map(|c| (c.status, c.map_shapes, c.peers)).collect()
    };
    assert_eq!(strip(&ra), strip(&rb));
    assert_eq!(strip(&ra), strip(&rc));
    assert!(ra.iter().flatten().all(|c| c.continuity <= 1e-6));
    // Both agents learned about the obstacle and about each other.
    assert!(ra.iter().all(|r| r.last().unwrap().map_shapes >= 1));
    assert!(ra.iter().all(|r| r.last().unwrap().peers == 1));
}

#[test]
fn starved_bus_flags_stale_peers() {
    let mut agents = vec![
        Agent::new(AgentConfig::default(), task(Point2::new(3.0, 0.0), None), Pose2::new(Point2::ORIGIN, 0.0), Point2::ORIGIN, 0.0)
            .unwrap(),
        Agent::new(AgentConfig::default(), task(Point2::new(3.0, 5.0), None), Pose2::new(Point2::new(0.0, 5.0), 0.0), Point2::ORIGIN, 0.0)
            .unwrap(),
    ];
    // Let the first broadcasts through, then starve.
    let bus = Bus::new(2, BusConfig::default(), 3);
    let (_, _) = drive(&mut agents, &world(Vec::new()), &bus, 0.2);
    let starved = Bus::new(2, BusConfig { latency: 0.0, drop_probability: 1.0 }, 3);
    let dt = 1.0 / 25.0;
    let mut saw_stale = false;
    for tick in 6..40 {
        let now = tick as f64 * dt;
        for (i, a) in agents.iter_mut().enumerate() {
            let r = a.agent_cycle(now, &starved, i);
            assert_ne!(r.status, PlanStatus::Fallback);
            saw_stale |= r.flags.iter().any(|f| matches!(f, CycleFlag::StalePeers { .. }));
        }
        for (i, a) in agents.iter_mut().enumerate() {
            if a.broadcast_due(now) {
                starved.publish(i, a.broadcast(now));
            }
        }
    }
    assert!(saw_stale);
}

#[test]
fn stationary_broadcast_has_zero_motion() {
    let mut a = Agent::new(AgentConfig::default(), task(Point2::ORIGIN, None), Pose2::new(Point2::new(1.0, 1.0), 0.0), Point2::ORIGIN, 0.0)
        .unwrap();
    let msg = a.broadcast(0.0);
    assert!(msg.position.distance(Point2::new(1.0, 1.0)) < 1e-12);
    assert!(msg.velocity.norm() < 1e-12 && msg.acceleration.norm() < 1e-12);
    assert_eq!(msg.size, vec![0.3]);
}
