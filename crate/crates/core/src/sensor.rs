//! Range-finder simulation against a static obstacle world.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::geometry::{ray_cast, Point2, Shape};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SensorError {
    #[error("pose ({x}, {y}) outside world bounds")]
    PoseOutOfBounds { x: f64, y: f64 },
    #[error("obstacle center outside world bounds")]
    ObstacleOutOfBounds,
    #[error("invalid lidar configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("beam has no return")]
    NoReturn,
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Point2,
    pub max: Point2,
}

impl Bounds {
    pub fn new(min: Point2, max: Point2) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    obstacles: Vec<Shape>,
    bounds: Bounds,
}

impl World {
    pub fn new(obstacles: Vec<Shape>, bounds: Bounds) -> Result<Self, SensorError> {
        if obstacles.iter().any(|s| !bounds.contains(s.center())) {
            return Err(SensorError::ObstacleOutOfBounds);
        }
        Ok(Self { obstacles, bounds })
    }

    pub fn obstacles(&self) -> &[Shape] {
        &self.obstacles
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarConfig {
    pub angular_resolution: f64,
    pub max_range: f64,
    pub rate: f64,
    pub fov: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self { angular_resolution: TAU / 360.0, max_range: 5.0, rate: 5.0, fov: TAU }
    }
}

impl LidarConfig {
    pub fn validate(&self) -> Result<(), SensorError> {
        if !(self.angular_resolution > 0.0) {
            return Err(SensorError::InvalidConfig("angular resolution must be positive"));
        }
        if !(self.max_range > 0.0) {
            return Err(SensorError::InvalidConfig("max range must be positive"));
        }
        if !(self.rate > 0.0) {
            return Err(SensorError::InvalidConfig("rate must be positive"));
        }
        if !(self.fov > 0.0 && self.fov <= TAU + 1e-12) {
            return Err(SensorError::InvalidConfig("fov must lie in (0, 2π]"));
        }
        Ok(())
    }

    pub fn beam_count(&self) -> usize {
        (self.fov / self.angular_resolution + 1e-9).floor() as usize
    }

    /// Time for one full rotation.
    pub fn sweep_duration(&self) -> f64 {
        1.0 / self.rate
    }
}

/// Planar pose: world-frame position and heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub position: Point2,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(position: Point2, heading: f64) -> Self {
        Self { position, heading }
    }
}

/// One sweep. `ranges[k]` is `None` when beam `k` saw nothing within range.
/// Beam `k` points at world angle `angle_start + k·angle_increment` and fired
/// at `stamp + k·beam_interval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub stamp: f64,
    pub angle_start: f64,
    pub angle_increment: f64,
    pub beam_interval: f64,
    pub max_range: f64,
    pub full_circle: bool,
    pub ranges: Vec<Option<f64>>,
}

impl Scan {
    pub fn beam_angle(&self, k: usize) -> f64 {
        self.angle_start + k as f64 * self.angle_increment
    }

    pub fn beam_stamp(&self, k: f64) -> f64 {
        self.stamp + k * self.beam_interval
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }
}

fn cast_all(world: &World, origin: Point2, angle: f64, max_range: f64) -> Option<f64> {
    world
        .obstacles
        .iter()
        .filter(|s| s.center().distance(origin) - s.size_scale() <= max_range)
        .filter_map(|s| ray_cast(origin, angle, s, max_range))
        .min_by(f64::total_cmp)
}

/// Every beam cast from one fixed pose.
pub fn simulate_scan(world: &World, pose: Pose2, cfg: &LidarConfig, stamp: f64) -> Result<Scan, SensorError> {
    simulate_sweep(world, |_| pose, cfg, stamp)
}

/// Beam `k` is cast from `pose_at(stamp + k·beam_interval)`, so a moving
/// robot produces the same smear as a rotating sensor would.
pub fn simulate_sweep(world: &World, pose_at: impl Fn(f64) -> Pose2, cfg: &LidarConfig, stamp: f64) -> Result<Scan, SensorError> {
    cfg.validate()?;
    let n = cfg.beam_count();
    let beam_interval = cfg.sweep_duration() / n.max(1) as f64;
    let start = pose_at(stamp);
    if !world.bounds.contains(start.position) {
        return Err(SensorError::PoseOutOfBounds { x: start.position.x, y: start.position.y });
    }
    let ranges = (0..n)
        .map(|k| {
            let pose = if k == 0 { start } else { pose_at(stamp + k as f64 * beam_interval) };
            let angle = start.heading + k as f64 * cfg.angular_resolution;
            cast_all(world, pose.position, angle, cfg.max_range)
        })
        .collect();
    Ok(Scan {
        stamp,
        angle_start: start.heading,
        angle_increment: cfg.angular_resolution,
        beam_interval,
        max_range: cfg.max_range,
        full_circle: (n as f64 * cfg.angular_resolution) >= TAU - 1e-9,
        ranges,
    })
}

/// World position of a return of length `range` along `beam_angle` from
/// `robot_position`.
pub fn scan_point_position(range: Option<f64>, beam_angle: f64, robot_position: Point2) -> Result<Point2, SensorError> {
    let l = range.ok_or(SensorError::NoReturn)?;
    Ok(Point2::new(l * beam_angle.cos() + robot_position.x, l * beam_angle.sin() + robot_position.y))
}
