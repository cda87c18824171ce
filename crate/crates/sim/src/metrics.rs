//! Run metrics. Everything here is a pure function of the logged samples
//! and cycle rows, so the numbers can be recomputed from the output files.

use corridor_core::agent::{CycleFlag, CycleReport};
use corridor_core::geometry::{shape_distance, Point2};
use corridor_core::optimizer::{PlanStatus, SolveRecord};
use serde::{Deserialize, Serialize};

use crate::run::Sample;
use crate::scenario::Scenario;

/// Tolerance for derivative box checks on samples.
pub const LIMIT_TOL: f64 = 1e-6;

/// One line of the cycle diagnostics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRow {
    pub agent: usize,
    pub cycle: u64,
    pub t: f64,
    pub status: PlanStatus,
    pub continuity: f64,
    pub wall_time_us: u64,
    pub solves: Vec<SolveRecord>,
    pub flags: Vec<CycleFlag>,
}

impl CycleRow {
    pub fn from_report(agent: usize, r: &CycleReport) -> Self {
        Self {
            agent,
            cycle: r.cycle,
            t: r.t,
            status: r.status,
            continuity: r.continuity,
            wall_time_us: r.wall_time_us,
            solves: r.solves.clone(),
            flags: r.flags.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct TimeStats {
    pub count: usize,
    pub p50_us: u64,
    pub p95_us: u64,
    pub max_us: u64,
}

impl TimeStats {
    /// Nearest-rank percentiles.
    pub fn from_values(mut v: Vec<u64>) -> Self {
        if v.is_empty() {
            return Self::default();
        }
        v.sort_unstable();
        let rank = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Self { count: v.len(), p50_us: rank(0.5), p95_us: rank(0.95), max_us: *v.last().unwrap() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionKind {
    Peer,
    Obstacle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub t: f64,
    pub kind: CollisionKind,
    pub a: usize,
    /// Peer index or obstacle index.
    pub b: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub samples: usize,
    /// Smallest footprint-to-footprint distance over all pairs and samples.
    pub min_pairwise_distance: Option<f64>,
    pub min_obstacle_clearance: Option<f64>,
    pub goal_errors: Vec<Option<f64>>,
    /// Per agent, for each waypoint whose stamp falls inside the run.
    pub waypoint_errors: Vec<Vec<f64>>,
    pub limit_violations: usize,
    pub solve_time_stats: TimeStats,
    pub cycle_time_stats: TimeStats,
    pub collision_events: Vec<CollisionEvent>,
    pub relaxed_cycles: usize,
    pub fallback_cycles: usize,
    pub max_continuity: f64,
}

impl RunMetrics {
    /// Exit condition of the CLI.
    pub fn is_clean(&self) -> bool {
        self.collision_events.is_empty() && self.fallback_cycles == 0
    }
}

fn sample_at(samples: &[Sample], sample_dt: f64, t: f64) -> Option<&Sample> {
    if samples.is_empty() {
        return None;
    }
    let k = ((t / sample_dt).round().max(0.0) as usize).min(samples.len() - 1);
    Some(&samples[k])
}

pub fn compute_metrics(scenario: &Scenario, sample_dt: f64, samples: &[Vec<Sample>], cycles: &[CycleRow]) -> RunMetrics {
    let shapes: Vec<_> = scenario.agents.iter().map(|a| a.config.footprint().expect("validated footprint")).collect();
    let obstacles = scenario.world.obstacles();
    let steps = samples.iter().map(|s| s.len()).min().unwrap_or(0);
    let mut min_pair: Option<f64> = None;
    let mut min_obs: Option<f64> = None;
    let mut events = Vec::new();
    let mut violations = 0;
    for k in 0..steps {
        let bodies: Vec<_> = (0..samples.len()).map(|i| shapes[i].shape_at(samples[i][k].position)).collect();
        let t = samples[0][k].t;
        for i in 0..bodies.len() {
            for j in i + 1..bodies.len() {
                let d = shape_distance(&bodies[i], &bodies[j]);
                min_pair = Some(min_pair.map_or(d, |m| m.min(d)));
                if d <= 0.0 {
                    events.push(CollisionEvent { t, kind: CollisionKind::Peer, a: i, b: j, distance: d });
                }
            }
            for (o, shape) in obstacles.iter().enumerate() {
                let d = shape_distance(&bodies[i], shape);
                min_obs = Some(min_obs.map_or(d, |m| m.min(d)));
                if d <= 0.0 {
                    events.push(CollisionEvent { t, kind: CollisionKind::Obstacle, a: i, b: o, distance: d });
                }
            }
            let s = &samples[i][k];
            for lim in &scenario.agents[i].config.limits {
                let v = match lim.order {
                    1 => s.velocity,
                    2 => s.acceleration,
                    _ => continue,
                };
                if !lim.contains(v, LIMIT_TOL) {
                    violations += 1;
                }
            }
        }
    }
    let mut goal_errors = Vec::new();
    let mut waypoint_errors = Vec::new();
    for (i, a) in scenario.agents.iter().enumerate() {
        let s = &samples[i];
        let stop = a.task.end_velocity == Point2::ORIGIN;
        let at = match a.task.goal_time {
            Some(tg) if stop => sample_at(s, sample_dt, tg + 1.0),
            Some(tg) => sample_at(s, sample_dt, tg),
            None => s.last(),
        };
        goal_errors.push(at.map(|x| x.position.distance(a.task.goal)));
        let last_t = s.last().map_or(f64::NEG_INFINITY, |x| x.t);
        waypoint_errors.push(
            a.task
                .waypoints
                .iter()
                .filter(|w| w.time <= last_t + 1e-9)
                .filter_map(|w| sample_at(s, sample_dt, w.time).map(|x| x.position.distance(w.position)))
                .collect(),
        );
    }
    RunMetrics {
        samples: steps,
        min_pairwise_distance: min_pair,
        min_obstacle_clearance: min_obs,
        goal_errors,
        waypoint_errors,
        limit_violations: violations,
        solve_time_stats: TimeStats::from_values(cycles.iter().flat_map(|c| c.solves.iter().map(|s| s.solve_time_us)).collect()),
        cycle_time_stats: TimeStats::from_values(cycles.iter().map(|c| c.wall_time_us).collect()),
        collision_events: events,
        relaxed_cycles: cycles.iter().filter(|c| c.status == PlanStatus::Relaxed).count(),
        fallback_cycles: cycles.iter().filter(|c| c.status == PlanStatus::Fallback).count(),
        max_continuity: cycles.iter().map(|c| c.continuity).fold(0.0, f64::max),
    }
}
