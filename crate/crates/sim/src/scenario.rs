//! Scenario files: JSON with a published schema (`schema/scenario.schema.json`).

use std::path::Path;

use corridor_core::agent::{AgentConfig, AgentTask, BusConfig};
use corridor_core::geometry::{shape_distance, Point2, Shape};
use corridor_core::optimizer::Waypoint;
use corridor_core::sensor::{Bounds, Pose2, World};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    /// serde_json reports the line and column of the offending token.
    #[error("scenario schema violation: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

type Xy = [f64; 2];

fn pt(p: Xy) -> Point2 {
    Point2::new(p[0], p[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub duration: f64,
    #[serde(default)]
    pub world: WorldSpec,
    #[serde(default)]
    pub bus: BusConfig,
    /// Configuration shared by every agent before per-agent overrides.
    #[serde(default)]
    pub agent_defaults: AgentConfig,
    pub agents: Vec<AgentSpec>,
}

fn default_name() -> String {
    "scenario".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    #[serde(default = "default_bounds")]
    pub bounds: BoundsSpec,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self { bounds: default_bounds(), obstacles: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub min: Xy,
    pub max: Xy,
}

fn default_bounds() -> BoundsSpec {
    BoundsSpec { min: [-30.0, -30.0], max: [30.0, 30.0] }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleSpec {
    Circle {
        center: Xy,
        radius: f64,
    },
    /// Rectangle given by center, half extents and rotation.
    Box {
        center: Xy,
        half_extents: Xy,
        #[serde(default)]
        angle_deg: f64,
    },
    Square {
        center: Xy,
        half: f64,
        #[serde(default)]
        angle_deg: f64,
    },
    Triangle {
        corners: [Xy; 3],
    },
}

impl ObstacleSpec {
    pub fn to_shape(&self) -> Result<Shape, ScenarioError> {
        let r = match self {
            ObstacleSpec::Circle { center, radius } => Shape::circle(pt(*center), *radius),
            ObstacleSpec::Box { center, half_extents, angle_deg } => {
                Shape::oriented_box(pt(*center), half_extents[0], half_extents[1], angle_deg.to_radians())
            }
            ObstacleSpec::Square { center, half, angle_deg } => Shape::oriented_box(pt(*center), *half, *half, angle_deg.to_radians()),
            ObstacleSpec::Triangle { corners } => Shape::triangle([pt(corners[0]), pt(corners[1]), pt(corners[2])]),
        };
        r.map_err(|e| invalid(format!("obstacle: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSpec {
    pub position: Xy,
    #[serde(default)]
    pub heading_deg: f64,
}

/// Uniform random start inside a square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnSpec {
    #[serde(default = "spawn_min")]
    pub min: f64,
    #[serde(default = "spawn_max")]
    pub max: f64,
}

fn spawn_min() -> f64 {
    -10.0
}

fn spawn_max() -> f64 {
    10.0
}

impl Default for SpawnSpec {
    fn default() -> Self {
        Self { min: spawn_min(), max: spawn_max() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointSpec {
    #[serde(default)]
    pub time: Option<f64>,
    pub position: Xy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<StartSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spawn: Option<SpawnSpec>,
    #[serde(default)]
    pub velocity: Xy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub footprint: Option<Vec<f64>>,
    #[serde(default)]
    pub waypoints: Vec<WaypointSpec>,
    pub goal: Xy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_time: Option<f64>,
    #[serde(default)]
    pub end_velocity: Xy,
}

/// A fully resolved agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSetup {
    pub config: AgentConfig,
    pub task: AgentTask,
    pub start: Pose2,
    pub velocity: Point2,
}

/// A validated scenario ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration: f64,
    pub world: World,
    pub bus: BusConfig,
    pub agents: Vec<AgentSetup>,
    /// The file form with spawns drawn and waypoint times filled in.
    pub resolved: ScenarioFile,
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text)?;
    resolve(file)
}

fn footprint_shape(cfg: &AgentConfig, p: Point2) -> Result<Shape, ScenarioError> {
    Ok(cfg.footprint().map_err(|e| invalid(e.to_string()))?.shape_at(p))
}

/// Draws a random start for `index` that keeps clear of obstacles and of
/// the starts already placed.
fn draw_spawn(spec: &SpawnSpec, seed: u64, index: usize, clear: impl Fn(Point2) -> bool) -> Result<StartSpec, ScenarioError> {
    if !(spec.min < spec.max) {
        return Err(invalid(format!("agent {index}: spawn min must be below max")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    for _ in 0..10_000 {
        let p = [rng.random_range(spec.min..=spec.max), rng.random_range(spec.min..=spec.max)];
        let heading = rng.random_range(0..360u32) as f64;
        if clear(pt(p)) {
            return Ok(StartSpec { position: p, heading_deg: heading });
        }
    }
    Err(invalid(format!("agent {index}: no free spawn position found")))
}

/// Snaps to the grid of `sample_dt`.
fn snap(t: f64, sample_dt: f64) -> f64 {
    (t / sample_dt).round() * sample_dt
}

/// Fills missing waypoint times by distributing the time between known
/// anchors along path length; a trailing stretch without a later anchor
/// moves at `cruise` m/s. All times are snapped to the sample grid.
fn fill_waypoint_times(spec: &AgentSpec, start: Point2, cruise: f64, sample_dt: f64, index: usize) -> Result<Vec<Waypoint>, ScenarioError> {
    let n = spec.waypoints.len();
    // Anchor list: start, waypoints, goal.
    let mut pos = vec![start];
    let mut times: Vec<Option<f64>> = vec![Some(0.0)];
    for w in &spec.waypoints {
        pos.push(pt(w.position));
        times.push(w.time);
    }
    pos.push(pt(spec.goal));
    times.push(spec.goal_time);
    let mut arc = vec![0.0];
    for k in 1..pos.len() {
        arc.push(arc[k - 1] + pos[k].distance(pos[k - 1]));
    }
    let mut filled = times.clone();
    let mut k = 1;
    while k <= n {
        if filled[k].is_some() {
            k += 1;
            continue;
        }
        let prev = (0..k).rev().find(|&j| filled[j].is_some()).expect("start is anchored");
        let next = (k + 1..pos.len()).find(|&j| times[j].is_some());
        let t_prev = filled[prev].unwrap();
        match next {
            Some(j) => {
                let t_next = times[j].unwrap();
                let span = (arc[j] - arc[prev]).max(1e-9);
                for i in k..j {
                    filled[i] = Some(t_prev + (t_next - t_prev) * (arc[i] - arc[prev]) / span);
                }
                k = j;
            }
            None => {
                for i in k..=n {
                    filled[i] = Some(t_prev + (arc[i] - arc[prev]) / cruise);
                }
                k = n + 1;
            }
        }
    }
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        out.push(Waypoint { time: snap(filled[i].unwrap(), sample_dt), position: pos[i] });
    }
    let mut last = 0.0;
    for w in &out {
        if w.time <= last {
            return Err(invalid(format!("agent {index}: waypoint times must be increasing and positive")));
        }
        last = w.time;
    }
    if let Some(tg) = spec.goal_time {
        if tg <= last {
            return Err(invalid(format!("agent {index}: goal time must follow the last waypoint")));
        }
    }
    Ok(out)
}

/// Validates a parsed file, draws random spawns and fills waypoint times.
pub fn resolve(mut file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    if !(file.duration >= 0.0 && file.duration.is_finite()) {
        return Err(invalid("duration must be finite and non-negative"));
    }
    if file.agents.is_empty() {
        return Err(invalid("at least one agent is required"));
    }
    file.bus.validate().map_err(invalid)?;
    let b = file.world.bounds;
    if !(b.min[0] < b.max[0] && b.min[1] < b.max[1]) {
        return Err(invalid("world bounds are empty"));
    }
    let bounds = Bounds::new(pt(b.min), pt(b.max));
    let obstacles = file.world.obstacles.iter().map(|o| o.to_shape()).collect::<Result<Vec<_>, _>>()?;
    let world = World::new(obstacles.clone(), bounds).map_err(|e| invalid(e.to_string()))?;

    let mut setups: Vec<AgentSetup> = Vec::new();
    let mut placed: Vec<Shape> = Vec::new();
    for (i, spec) in file.agents.iter_mut().enumerate() {
        let mut config = file.agent_defaults.clone();
        if let Some(order) = spec.order {
            config.order = order;
        }
        if let Some(fp) = &spec.footprint {
            config.footprint_size = fp.clone();
        }
        config.validate().map_err(|e| invalid(format!("agent {i}: {e}")))?;
        let start = match (&spec.start, &spec.spawn) {
            (Some(s), None) => s.clone(),
            (None, Some(sp)) => {
                let cfg = config.clone();
                let s = draw_spawn(sp, file.seed, i, |p| {
                    let Ok(me) = footprint_shape(&cfg, p) else { return false };
                    bounds.contains(p)
                        && obstacles.iter().all(|o| shape_distance(&me, o) > 0.5)
                        && placed.iter().all(|o| shape_distance(&me, o) > 0.5)
                })?;
                spec.start = Some(s.clone());
                spec.spawn = None;
                s
            }
            _ => return Err(invalid(format!("agent {i}: give exactly one of start or spawn"))),
        };
        let p = pt(start.position);
        if !bounds.contains(p) {
            return Err(invalid(format!("agent {i}: start outside world bounds")));
        }
        let me = footprint_shape(&config, p)?;
        if let Some(j) = placed.iter().position(|o| shape_distance(&me, o) <= 0.0) {
            return Err(invalid(format!("agent {i}: start overlaps agent {j}")));
        }
        if obstacles.iter().any(|o| shape_distance(&me, o) <= 0.0) {
            return Err(invalid(format!("agent {i}: start overlaps an obstacle")));
        }
        placed.push(me);
        let cruise = config
            .limits
            .iter()
            .find(|l| l.order == 1)
            .map(|l| 0.5 * l.upper.x.abs().min(l.upper.y.abs()).min(l.lower.x.abs()).min(l.lower.y.abs()))
            .filter(|v| *v > 0.0)
            .unwrap_or(1.0);
        let waypoints = fill_waypoint_times(spec, p, cruise, config.sample_dt, i)?;
        if let Some(tg) = spec.goal_time {
            if !(tg > 0.0) {
                return Err(invalid(format!("agent {i}: goal time must be positive")));
            }
        }
        for (w, ws) in waypoints.iter().zip(spec.waypoints.iter_mut()) {
            ws.time = Some(w.time);
        }
        setups.push(AgentSetup {
            task: AgentTask { goal: pt(spec.goal), goal_time: spec.goal_time, end_velocity: pt(spec.end_velocity), waypoints },
            start: Pose2::new(p, start.heading_deg.to_radians()),
            velocity: pt(spec.velocity),
            config,
        });
    }
    Ok(Scenario { name: file.name.clone(), seed: file.seed, duration: file.duration, world, bus: file.bus, agents: setups, resolved: file })
}
