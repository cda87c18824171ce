//! One robot's receding-horizon loop over a simulated clock.
//!
//! Each cycle: read the tracked state, process a pending scan into staged
//! obstacles, fold the previous cycle's staged obstacles into the map and
//! rebuild the moving volume, ingest peer broadcasts, build safe regions,
//! plan, commit.

mod bus;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use bus::{Bus, BusConfig, BusMessage};

use crate::geometry::{Point2, Shape};
use crate::optimizer::{
    plan_with_fallback, DerivativeLimit, PlanError, PlanRequest, PlanStatus, PlannerConfig, RowTag, Side, SolveRecord, Waypoint, Weights,
};
use crate::perception::{
    build_moving_volume, classify_cluster_with, segment_scan_with, ClassifyConfig, LocalMap, MovingVolume, PositionAt, SegmentConfig,
};
use crate::prediction::{footprint_from_size, Footprint, PeerState, PeerTracker, PredictionConfig, PredictionError};
use crate::safe_region::{build_safe_regions, RegionConfig, SafeRegion, SliceFlag};
use crate::sensor::{LidarConfig, Pose2, Scan};
use crate::spline::{SplineError, TrajectorySpline};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("invalid agent configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Footprint(#[from] PredictionError),
    #[error(transparent)]
    Spline(#[from] SplineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Integrator order `n`; splines have degree `n + 1`.
    pub order: usize,
    /// One to three body lengths, meters.
    pub footprint_size: Vec<f64>,
    pub limits: Vec<DerivativeLimit>,
    pub plan_rate: f64,
    pub broadcast_rate: f64,
    pub lidar: LidarConfig,
    pub weights: Weights,
    pub horizon: f64,
    pub sample_dt: f64,
    pub planner: PlannerConfig,
    pub region: RegionConfig,
    pub prediction: PredictionConfig,
    pub segment: SegmentConfig,
    pub classify: ClassifyConfig,
    /// Shapes farther than this from the robot leave the local map.
    pub map_radius: f64,
    /// Shapes within this distance of a slice center enter the slice.
    pub window_radius: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            order: 2,
            footprint_size: vec![0.3],
            limits: vec![DerivativeLimit::symmetric(1, 2.0), DerivativeLimit::symmetric(2, 2.0)],
            plan_rate: 25.0,
            broadcast_rate: 10.0,
            lidar: LidarConfig::default(),
            weights: Weights::default(),
            horizon: 4.0,
            sample_dt: 0.1,
            planner: PlannerConfig::default(),
            region: RegionConfig::default(),
            prediction: PredictionConfig::default(),
            segment: SegmentConfig::default(),
            classify: ClassifyConfig::default(),
            map_radius: 15.0,
            window_radius: 7.5,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.order == 0 || self.order > 6 {
            return Err(AgentError::Config("order must be in 1..=6"));
        }
        if !(self.plan_rate > 0.0 && self.broadcast_rate > 0.0) {
            return Err(AgentError::Config("rates must be positive"));
        }
        if !(self.sample_dt > 0.0 && self.horizon > 0.0) {
            return Err(AgentError::Config("horizon and sample_dt must be positive"));
        }
        if (self.sample_dt * (self.horizon / self.sample_dt).round() - self.horizon).abs() > 1e-9 {
            return Err(AgentError::Config("horizon must be a whole number of sample_dt steps"));
        }
        self.weights.validate().map_err(AgentError::Config)?;
        self.lidar.validate().map_err(|_| AgentError::Config("lidar"))?;
        footprint_from_size(&self.footprint_size)?;
        Ok(())
    }

    pub fn footprint(&self) -> Result<Footprint, AgentError> {
        Ok(footprint_from_size(&self.footprint_size)?)
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig { horizon: self.horizon, sample_dt: self.sample_dt, ..self.planner }
    }
}

/// Where the robot should go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTask {
    pub goal: Point2,
    pub goal_time: Option<f64>,
    pub end_velocity: Point2,
    pub waypoints: Vec<Waypoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub stamp: f64,
    /// Position and derivatives up to order `n - 1`.
    pub derivatives: Vec<Point2>,
}

impl AgentState {
    pub fn position(&self) -> Point2 {
        self.derivatives[0]
    }

    pub fn derivative(&self, order: usize) -> Point2 {
        self.derivatives.get(order).copied().unwrap_or(Point2::ORIGIN)
    }
}

/// State after executing `traj` exactly from `from` to `to`.
pub fn ideal_track(traj: &TrajectorySpline, from: f64, to: f64, order: usize) -> Result<AgentState, SplineError> {
    let (lo, hi) = traj.domain();
    if from > to || from < lo - 1e-9 || to > hi + 1e-9 {
        return Err(SplineError::OutOfDomain { t: to, lo, hi });
    }
    let derivatives = (0..order).map(|k| traj.evaluate(to, k)).collect::<Result<Vec<_>, _>>()?;
    Ok(AgentState { stamp: to, derivatives })
}

/// Committed trajectories in order; each one is executed from its commit
/// time until the next commit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExecutedPath {
    segments: Vec<(f64, TrajectorySpline)>,
}

impl ExecutedPath {
    pub fn commit(&mut self, t: f64, traj: TrajectorySpline) {
        self.segments.push((t, traj));
    }

    /// Drops segments that ended before `t`.
    pub fn forget_before(&mut self, t: f64) {
        let keep_from = self.segments.iter().rposition(|(s, _)| *s <= t).unwrap_or(0);
        self.segments.drain(..keep_from);
    }

    pub fn segment_at(&self, t: f64) -> Option<&TrajectorySpline> {
        let idx = self.segments.iter().rposition(|(s, _)| *s <= t + 1e-12).unwrap_or(0);
        self.segments.get(idx).map(|(_, tr)| tr)
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

impl PositionAt for ExecutedPath {
    fn position_at(&self, t: f64) -> Point2 {
        self.segment_at(t).map(|tr| tr.position_clamped(t)).unwrap_or(Point2::ORIGIN)
    }
}

/// Order in which stages (2) and (3) run within a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StageOrder {
    #[default]
    DetectFirst,
    MapFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CycleFlag {
    StalePeers { count: usize },
    PeerConflict { slices: usize },
    ReusedSlices { slices: usize },
    DroppedSlices { slices: usize },
    PlanFallback { reason: String },
    ScanRejected { reason: String },
}

/// Outcome of one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle: u64,
    pub t: f64,
    pub status: PlanStatus,
    pub solves: Vec<SolveRecord>,
    pub flags: Vec<CycleFlag>,
    /// Position jump between the old and new plans at the commit instant.
    pub continuity: f64,
    pub map_shapes: usize,
    pub peers: usize,
    pub wall_time_us: u64,
}

#[derive(Debug, Clone)]
pub struct Agent {
    cfg: AgentConfig,
    task: AgentTask,
    footprint: Footprint,
    heading: f64,
    trajectory: TrajectorySpline,
    executed: ExecutedPath,
    state: AgentState,
    map: LocalMap,
    staged: Vec<(Shape, Vec<Point2>)>,
    pending_scan: Option<Scan>,
    tracker: PeerTracker,
    regions: Option<SafeRegion>,
    volume: MovingVolume,
    warm: Vec<(RowTag, Side)>,
    cycle: u64,
    next_broadcast: f64,
    stage_order: StageOrder,
}

impl Agent {
    /// Agent resting at `start` (or moving at `velocity`) at time `t_start`.
    pub fn new(cfg: AgentConfig, task: AgentTask, start: Pose2, velocity: Point2, t_start: f64) -> Result<Self, AgentError> {
        cfg.validate()?;
        let footprint = cfg.footprint()?;
        let degree = cfg.order + 1;
        let segments = (cfg.horizon / cfg.planner.t_segment).ceil() as usize;
        let trajectory = if velocity.norm() == 0.0 {
            TrajectorySpline::stationary(start.position, degree, t_start, cfg.planner.t_segment, segments)
        } else {
            TrajectorySpline::constant_velocity(start.position, velocity, degree, t_start, cfg.planner.t_segment, segments)
        };
        let state = ideal_track(&trajectory, t_start, t_start, cfg.order)?;
        let mut executed = ExecutedPath::default();
        executed.commit(t_start, trajectory.clone());
        Ok(Self {
            map: LocalMap::new(start.position, cfg.map_radius),
            tracker: PeerTracker::new(cfg.prediction),
            footprint,
            heading: start.heading,
            trajectory,
            executed,
            state,
            staged: Vec::new(),
            pending_scan: None,
            regions: None,
            volume: MovingVolume::default(),
            warm: Vec::new(),
            cycle: 0,
            next_broadcast: t_start,
            stage_order: StageOrder::default(),
            cfg,
            task,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn task(&self) -> &AgentTask {
        &self.task
    }

    pub fn footprint(&self) -> Footprint {
        self.footprint
    }

    pub fn trajectory(&self) -> &TrajectorySpline {
        &self.trajectory
    }

    pub fn executed(&self) -> &ExecutedPath {
        &self.executed
    }

    pub fn state(&self) -> &AgentState {
        &self.state
    }

    pub fn map(&self) -> &LocalMap {
        &self.map
    }

    pub fn tracker(&self) -> &PeerTracker {
        &self.tracker
    }

    pub fn regions(&self) -> Option<&SafeRegion> {
        self.regions.as_ref()
    }

    pub fn set_stage_order(&mut self, order: StageOrder) {
        self.stage_order = order;
    }

    /// Pose at `t` along what was actually executed.
    pub fn pose_at(&self, t: f64) -> Pose2 {
        Pose2::new(self.executed.position_at(t), self.heading)
    }

    /// Hands over a completed scan for the next cycle.
    pub fn receive_scan(&mut self, scan: Scan) {
        self.pending_scan = Some(scan);
    }

    pub fn broadcast_due(&self, now: f64) -> bool {
        now + 1e-9 >= self.next_broadcast
    }

    /// Current state as a peer message; schedules the next broadcast.
    pub fn broadcast(&mut self, now: f64) -> PeerState {
        let period = 1.0 / self.cfg.broadcast_rate;
        while self.next_broadcast <= now + 1e-9 {
            self.next_broadcast += period;
        }
        let s = ideal_track(&self.trajectory, now, now, self.trajectory.degree().min(3)).unwrap_or_else(|_| self.state.clone());
        PeerState {
            stamp: now,
            position: s.derivative(0),
            velocity: s.derivative(1),
            acceleration: s.derivative(2),
            size: self.cfg.footprint_size.clone(),
        }
    }

    /// Stage (2): scan → clusters → shapes, staged for the next map update.
    fn detect(&mut self, flags: &mut Vec<CycleFlag>) -> Vec<(Shape, Vec<Point2>)> {
        let Some(scan) = self.pending_scan.take() else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for mut cluster in segment_scan_with(&scan, &self.cfg.segment) {
            cluster.place_along(&self.executed);
            match classify_cluster_with(&cluster, &self.cfg.classify) {
                Ok(shape) => out.push((shape, cluster.points)),
                Err(e) => flags.push(CycleFlag::ScanRejected { reason: e.to_string() }),
            }
        }
        out
    }

    /// Stage (3): fold staged shapes into the map, rebuild the moving volume.
    fn update_map(&mut self, staged: Vec<(Shape, Vec<Point2>)>, now: f64) {
        for (shape, evidence) in staged {
            self.map.insert_obstacle(shape, &evidence);
        }
        self.map.recenter_map(self.state.position());
        self.volume = build_moving_volume(&self.map, &self.trajectory, now, self.cfg.horizon, self.cfg.sample_dt, self.cfg.window_radius);
    }

    /// Map shapes close enough to any slice center to matter for the
    /// collision cost.
    fn near_obstacles(&self) -> Vec<Shape> {
        let reach = self.cfg.weights.influence_radius() + self.footprint.bounding_radius();
        let mut out: Vec<Shape> = Vec::new();
        for slice in &self.volume.slices {
            for s in &slice.shapes {
                if s.distance(slice.center) <= reach && !out.contains(s) {
                    out.push(s.clone());
                }
            }
        }
        out
    }

    /// Runs one planning cycle at `now`, reading peer messages from `bus`.
    pub fn agent_cycle(&mut self, now: f64, bus: &Bus, me: usize) -> CycleReport {
        let started = Instant::now();
        let mut flags = Vec::new();

        // (1) state from the tracker.
        let from = self.state.stamp;
        self.state = match ideal_track(&self.trajectory, from, now, self.cfg.order) {
            Ok(s) => s,
            Err(_) => {
                self.trajectory = crate::optimizer::hold_previous(&self.trajectory, now, self.cfg.horizon);
                ideal_track(&self.trajectory, from.min(now), now, self.cfg.order).expect("held trajectory covers now")
            }
        };
        self.executed.forget_before(now - 2.0 * self.cfg.lidar.sweep_duration() - 1.0);

        // (2) and (3) on disjoint inputs.
        let previous_staged = std::mem::take(&mut self.staged);
        let fresh = match self.stage_order {
            StageOrder::DetectFirst => {
                let fresh = self.detect(&mut flags);
                self.update_map(previous_staged, now);
                fresh
            }
            StageOrder::MapFirst => {
                self.update_map(previous_staged, now);
                self.detect(&mut flags)
            }
        };
        self.staged = fresh;

        // (4) peers.
        let batch: Vec<PeerState> = bus.drain(me, now).into_iter().map(|m| m.payload).collect();
        self.tracker.ingest(batch);
        self.tracker.forget_silent(now);
        let stale = self.tracker.stale_count(now);
        if stale > 0 {
            flags.push(CycleFlag::StalePeers { count: stale });
        }

        // (5) regions.
        let regions = build_safe_regions(
            &self.volume,
            &self.tracker.tracks,
            &self.footprint,
            self.state.position(),
            &self.cfg.region,
            self.regions.as_ref(),
        );
        let count = |f: SliceFlag| regions.slices.iter().filter(|s| s.flags.contains(&f)).count();
        let (conflict, reused) = (count(SliceFlag::PeerConflict), count(SliceFlag::Reused));
        let dropped = regions.slices.iter().filter(|s| !s.usable()).count();
        if conflict > 0 {
            flags.push(CycleFlag::PeerConflict { slices: conflict });
        }
        if reused > 0 {
            flags.push(CycleFlag::ReusedSlices { slices: reused });
        }
        if dropped > 0 {
            flags.push(CycleFlag::DroppedSlices { slices: dropped });
        }

        // (6) plan.
        let req = PlanRequest {
            t_now: now,
            initial_state: self.state.derivatives.clone(),
            waypoints: self.task.waypoints.clone(),
            goal: self.task.goal,
            goal_time: self.task.goal_time,
            end_velocity: self.task.end_velocity,
            regions,
            near_obstacles: self.near_obstacles(),
            ego_radius: self.footprint.bounding_radius(),
            previous: self.trajectory.clone(),
            limits: self.cfg.limits.clone(),
        };
        let warm = (!self.warm.is_empty()).then_some(self.warm.as_slice());
        let outcome = plan_with_fallback(&req, &self.cfg.weights, &self.cfg.planner_config(), warm);
        if outcome.status == PlanStatus::Fallback {
            let reason = match &outcome.error {
                Some(PlanError::AllSlicesInfeasible) => "all slices infeasible".to_string(),
                Some(e) => e.to_string(),
                None => "both passes infeasible".to_string(),
            };
            flags.push(CycleFlag::PlanFallback { reason });
        }

        // (7) commit.
        let old = self.trajectory.position_clamped(now);
        let continuity = outcome.trajectory.position_clamped(now).distance(old);
        self.trajectory = outcome.trajectory;
        self.warm = outcome.active;
        self.executed.commit(now, self.trajectory.clone());
        self.regions = Some(req.regions);
        let report = CycleReport {
            cycle: self.cycle,
            t: now,
            status: outcome.status,
            solves: outcome.records,
            flags,
            continuity,
            map_shapes: self.map.len(),
            peers: self.tracker.tracks.len(),
            wall_time_us: started.elapsed().as_micros() as u64,
        };
        self.cycle += 1;
        report
    }
}
