//! Generated scenarios: open swap, intersection, unstructured clutter and a
//! walled-in room that forces the planner's fallbacks.

use std::f64::consts::PI;

use corridor_core::agent::{AgentConfig, BusConfig};
use corridor_core::geometry::{shape_distance, Point2, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scenario::{AgentSpec, BoundsSpec, ObstacleSpec, ScenarioFile, StartSpec, WaypointSpec, WorldSpec};

pub const BUILTIN_NAMES: [&str; 4] = ["open", "intersection", "unstructured", "walled_in"];

pub fn builtin_scenarios() -> &'static [&'static str] {
    &BUILTIN_NAMES
}

/// Builds a builtin by name. `agents` overrides the default agent count
/// where the generator supports it.
pub fn builtin(name: &str, seed: u64, agents: Option<usize>) -> Option<ScenarioFile> {
    Some(match name {
        "open" => open_swap(&SwapParams { agents: agents.unwrap_or(8), ..SwapParams::default() }, seed),
        "intersection" => intersection(&IntersectionParams::default(), seed, agents.unwrap_or(6)),
        "unstructured" => unstructured(&UnstructuredParams { agents: agents.unwrap_or(4), ..UnstructuredParams::default() }, seed),
        "walled_in" => walled_in(),
        _ => return None,
    })
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn stop_agent(start: Point2, heading_deg: f64, goal: Point2, goal_time: Option<f64>) -> AgentSpec {
    AgentSpec {
        start: Some(StartSpec { position: [start.x, start.y], heading_deg }),
        spawn: None,
        velocity: [0.0, 0.0],
        order: None,
        footprint: None,
        waypoints: Vec::new(),
        goal: [goal.x, goal.y],
        goal_time,
        end_velocity: [0.0, 0.0],
    }
}

fn bounds(h: f64) -> BoundsSpec {
    BoundsSpec { min: [-h, -h], max: [h, h] }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwapParams {
    pub agents: usize,
    pub radius: f64,
    pub goal_time: f64,
    /// Per-agent angular jitter, radians; breaks the perfect symmetry.
    pub jitter: f64,
}

impl Default for SwapParams {
    fn default() -> Self {
        Self { agents: 8, radius: 5.0, goal_time: 12.0, jitter: 0.05 }
    }
}

/// Agents evenly spaced on a circle, each heading for its antipode.
pub fn open_swap(p: &SwapParams, seed: u64) -> ScenarioFile {
    let mut rng = rng_for(seed, 1);
    let n = p.agents.max(1);
    let rotation = rng.random_range(0.0..2.0 * PI / n as f64);
    let agents = (0..n)
        .map(|i| {
            let a = rotation + 2.0 * PI * i as f64 / n as f64 + rng.random_range(-p.jitter..=p.jitter);
            let start = Point2::from_angle(a) * p.radius;
            stop_agent(start, (a.to_degrees() + 180.0).rem_euclid(360.0).floor(), -start, Some(p.goal_time))
        })
        .collect();
    ScenarioFile {
        name: "open".into(),
        seed,
        duration: p.goal_time + 1.2,
        world: WorldSpec { bounds: bounds(30.0), obstacles: Vec::new() },
        bus: BusConfig::default(),
        agent_defaults: AgentConfig::default(),
        agents,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntersectionParams {
    /// Free width of each corridor.
    pub corridor_width: f64,
    /// Distance from the crossing center to the outer edge of the walls.
    pub arm_length: f64,
    /// Distance from the center at which agents start.
    pub start_distance: f64,
    pub goal_time: f64,
}

impl Default for IntersectionParams {
    fn default() -> Self {
        Self { corridor_width: 4.0, arm_length: 14.0, start_distance: 8.0, goal_time: 10.0 }
    }
}

/// The four corner walls of a crossing with corridors along both axes.
pub fn intersection_walls(p: &IntersectionParams) -> Vec<ObstacleSpec> {
    let inner = 0.5 * p.corridor_width;
    let half = 0.5 * (p.arm_length - inner);
    let c = inner + half;
    [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
        .iter()
        .map(|&(sx, sy)| ObstacleSpec::Square { center: [sx * c, sy * c], half, angle_deg: 0.0 })
        .collect()
}

/// Fourth-order agents crossing in lanes. Agents 4 and 5 follow a lane
/// leader and finish with a nonzero velocity along their corridor.
pub fn intersection(p: &IntersectionParams, seed: u64, agents: usize) -> ScenarioFile {
    let mut rng = rng_for(seed, 2);
    let lane = 0.25 * p.corridor_width;
    let d = p.start_distance;
    // (start, goal, end velocity)
    let routes = [
        (Point2::new(-d, -lane), Point2::new(d, -lane), Point2::ORIGIN),
        (Point2::new(d, lane), Point2::new(-d, lane), Point2::ORIGIN),
        (Point2::new(lane, -d), Point2::new(lane, d), Point2::ORIGIN),
        (Point2::new(-lane, d), Point2::new(-lane, -d), Point2::ORIGIN),
        (Point2::new(-d - 2.5, -lane), Point2::new(d - 3.0, -lane), Point2::new(0.8, 0.0)),
        (Point2::new(lane, -d - 2.5), Point2::new(lane, d - 3.0), Point2::new(0.0, 0.8)),
    ];
    let list = (0..agents.min(routes.len()))
        .map(|i| {
            let (s, g, v) = routes[i];
            let along = (g - s).normalized().unwrap_or(Point2::new(1.0, 0.0));
            let s = s + along * rng.random_range(-0.3..=0.3);
            let mut spec =
                stop_agent(s, along.angle().to_degrees().rem_euclid(360.0).floor(), g, Some(p.goal_time + rng.random_range(-0.5..=0.5)));
            spec.order = Some(4);
            spec.end_velocity = [v.x, v.y];
            spec
        })
        .collect();
    let mut defaults = AgentConfig::default();
    defaults.order = 4;
    ScenarioFile {
        name: "intersection".into(),
        seed,
        duration: p.goal_time + 1.5,
        world: WorldSpec { bounds: bounds(30.0), obstacles: intersection_walls(p) },
        bus: BusConfig::default(),
        agent_defaults: defaults,
        agents: list,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnstructuredParams {
    pub agents: usize,
    pub obstacles: usize,
    /// Obstacle centers are drawn in `±extent` on both axes.
    pub extent: f64,
    pub min_size: f64,
    pub max_size: f64,
    /// Minimum distance between obstacle boundaries.
    pub clearance: f64,
    /// Minimum distance from obstacles to starts, goals and waypoints.
    pub keep_out: f64,
    pub goal_time: f64,
}

impl Default for UnstructuredParams {
    fn default() -> Self {
        Self { agents: 4, obstacles: 10, extent: 7.0, min_size: 0.3, max_size: 1.0, clearance: 1.5, keep_out: 1.2, goal_time: 16.0 }
    }
}

fn random_obstacle(rng: &mut ChaCha8Rng, p: &UnstructuredParams) -> ObstacleSpec {
    let center = [rng.random_range(-p.extent..=p.extent), rng.random_range(-p.extent..=p.extent)];
    let angle_deg = rng.random_range(0.0..90.0);
    match rng.random_range(0..3u8) {
        0 => ObstacleSpec::Circle { center, radius: rng.random_range(p.min_size..=p.max_size) },
        1 => ObstacleSpec::Square { center, half: rng.random_range(p.min_size..=p.max_size), angle_deg },
        _ => ObstacleSpec::Box {
            center,
            half_extents: [rng.random_range(p.min_size..=p.max_size), rng.random_range(p.min_size..=p.max_size)],
            angle_deg,
        },
    }
}

/// Agents cross a field of random shapes from west to east, passing two
/// waypoints each.
pub fn unstructured(p: &UnstructuredParams, seed: u64) -> ScenarioFile {
    let mut rng = rng_for(seed, 3);
    let n = p.agents.max(1);
    let edge = p.extent + 3.0;
    let spacing = 2.0 * p.extent / n as f64;
    let mut agents = Vec::with_capacity(n);
    let mut anchors = Vec::new();
    for i in 0..n {
        let y0 = -p.extent + spacing * (i as f64 + 0.5);
        let y1 = y0;
        let start = Point2::new(-edge, y0);
        let goal = Point2::new(edge, y1);
        let jitter = 0.2 * spacing;
        let w1 = Point2::new(-0.35 * p.extent, y0 + rng.random_range(-jitter..=jitter));
        let w2 = Point2::new(0.35 * p.extent, y1 + rng.random_range(-jitter..=jitter));
        anchors.extend([start, goal, w1, w2]);
        let mut spec = stop_agent(start, 0.0, goal, Some(p.goal_time));
        spec.waypoints = vec![WaypointSpec { time: None, position: [w1.x, w1.y] }, WaypointSpec { time: None, position: [w2.x, w2.y] }];
        agents.push(spec);
    }
    let obstacles = place_obstacles(&mut rng, p, &anchors);
    ScenarioFile {
        name: "unstructured".into(),
        seed,
        duration: p.goal_time + 1.5,
        world: WorldSpec { bounds: bounds(30.0), obstacles },
        bus: BusConfig::default(),
        agent_defaults: AgentConfig::default(),
        agents,
    }
}

/// Rejection sampling of non-overlapping shapes. Gives up after a fixed
/// number of draws, so a crowded configuration yields fewer shapes.
pub fn place_obstacles(rng: &mut ChaCha8Rng, p: &UnstructuredParams, anchors: &[Point2]) -> Vec<ObstacleSpec> {
    let mut specs = Vec::new();
    let mut shapes: Vec<Shape> = Vec::new();
    for _ in 0..20_000 {
        if specs.len() == p.obstacles {
            break;
        }
        let spec = random_obstacle(rng, p);
        let Ok(shape) = spec.to_shape() else { continue };
        if anchors.iter().any(|&a| shape.distance(a) < p.keep_out || shape.contains(a)) {
            continue;
        }
        if shapes.iter().any(|s| shape_distance(s, &shape) < p.clearance) {
            continue;
        }
        shapes.push(shape);
        specs.push(spec);
    }
    specs
}

/// One agent in a closed room. It starts faster than its velocity bound,
/// so the first plans only satisfy the limits at segment transitions; a
/// waypoint outside the room later makes every plan infeasible and the
/// agent holds its last trajectory.
pub fn walled_in() -> ScenarioFile {
    let (inner, t) = (3.0, 0.5);
    let c = inner + 0.5 * t;
    let len = inner + t;
    let walls = vec![
        ObstacleSpec::Box { center: [c, 0.0], half_extents: [0.5 * t, len], angle_deg: 0.0 },
        ObstacleSpec::Box { center: [-c, 0.0], half_extents: [0.5 * t, len], angle_deg: 0.0 },
        ObstacleSpec::Box { center: [0.0, c], half_extents: [inner, 0.5 * t], angle_deg: 0.0 },
        ObstacleSpec::Box { center: [0.0, -c], half_extents: [inner, 0.5 * t], angle_deg: 0.0 },
    ];
    let mut spec = stop_agent(Point2::new(-1.0, 0.0), 0.0, Point2::new(0.0, 0.0), None);
    spec.velocity = [2.5, 0.0];
    spec.waypoints = vec![WaypointSpec { time: Some(6.0), position: [6.0, 0.0] }];
    ScenarioFile {
        name: "walled_in".into(),
        seed: 0,
        duration: 8.0,
        world: WorldSpec { bounds: bounds(30.0), obstacles: walls },
        bus: BusConfig::default(),
        agent_defaults: AgentConfig::default(),
        agents: vec![spec],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::resolve;

    #[test]
    fn intersection_corridors_are_wide_enough() {
        let s = resolve(intersection(&IntersectionParams::default(), 1, 6)).unwrap();
        let obs = s.world.obstacles();
        assert_eq!(obs.len(), 4);
        // Probe both corridors: every point with |x| < 2 or |y| < 2 is free.
        for k in -140..=140 {
            let u = k as f64 * 0.1;
            for v in [-1.999, 0.0, 1.999] {
                for q in [Point2::new(u, v), Point2::new(v, u)] {
                    assert!(obs.iter().all(|o| !o.contains(q)), "{q:?}");
                }
            }
        }
        assert!(s.agents.iter().all(|a| a.config.order == 4));
        assert_eq!(s.agents.iter().filter(|a| a.task.end_velocity != Point2::ORIGIN).count(), 2);
    }

    #[test]
    fn unstructured_is_seeded_and_spaced() {
        let p = UnstructuredParams::default();
        let a = unstructured(&p, 5);
        assert_eq!(a, unstructured(&p, 5));
        assert_ne!(a.world.obstacles, unstructured(&p, 6).world.obstacles);
        let shapes: Vec<Shape> = a.world.obstacles.iter().map(|o| o.to_shape().unwrap()).collect();
        assert_eq!(shapes.len(), p.obstacles);
        for i in 0..shapes.len() {
            let c = shapes[i].center();
            assert!(c.x.abs() <= p.extent && c.y.abs() <= p.extent);
            for j in i + 1..shapes.len() {
                assert!(shape_distance(&shapes[i], &shapes[j]) >= p.clearance);
            }
        }
        let s = resolve(a).unwrap();
        assert!(s.agents.iter().all(|a| a.task.waypoints.len() == 2));
    }

    #[test]
    fn every_builtin_resolves() {
        for name in builtin_scenarios() {
            for seed in 0..3 {
                resolve(builtin(name, seed, None).unwrap()).unwrap();
            }
        }
        assert!(builtin("nope", 0, None).is_none());
    }

    #[test]
    fn swap_goals_are_antipodal() {
        let f = open_swap(&SwapParams::default(), 4);
        assert_eq!(f.agents.len(), 8);
        for a in &f.agents {
            let s = a.start.as_ref().unwrap().position;
            assert!((s[0].hypot(s[1]) - 5.0).abs() < 1e-9);
            assert_eq!(a.goal, [-s[0], -s[1]]);
        }
    }
}
