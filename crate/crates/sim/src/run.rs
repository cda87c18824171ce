//! The global clock: scans, agent cycles, broadcasts and τ-grid sampling.

use corridor_core::agent::{Agent, AgentError, Bus, CycleReport};
use corridor_core::geometry::Point2;
use corridor_core::sensor::simulate_sweep;
use corridor_core::spline::TrajectorySpline;

use crate::scenario::Scenario;

/// Flat-output state of one agent at one grid instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub position: Point2,
    pub velocity: Point2,
    pub acceleration: Point2,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Run the agent cycles of one tick on scoped threads.
    pub parallel: bool,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub sample_dt: f64,
    /// Per agent, in time order.
    pub samples: Vec<Vec<Sample>>,
    pub reports: Vec<Vec<CycleReport>>,
    pub dropped_messages: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("agent {index}: {source}")]
    Agent { index: usize, source: AgentError },
    #[error("agents must share plan rate and sample_dt")]
    MixedClocks,
}

fn eval(tr: &TrajectorySpline, t: f64, order: usize) -> Point2 {
    let (a, b) = tr.domain();
    tr.evaluate(t.clamp(a, b), order).unwrap_or(Point2::ORIGIN)
}

fn sample(tr: &TrajectorySpline, t: f64) -> Sample {
    Sample {
        t,
        position: eval(tr, t, 0),
        velocity: eval(tr, t, 1),
        acceleration: if tr.degree() >= 2 { eval(tr, t, 2) } else { Point2::ORIGIN },
    }
}

struct Slot {
    agent: Agent,
    next_scan: f64,
    reports: Vec<CycleReport>,
}

fn step(slot: &mut Slot, index: usize, now: f64, scenario: &Scenario, bus: &Bus) {
    let lidar = slot.agent.config().lidar;
    if now + 1e-9 >= slot.next_scan {
        let a = &slot.agent;
        // Ground-truth world only: peers are not visible to the lidar.
        match simulate_sweep(&scenario.world, |t| a.pose_at(t), &lidar, now - lidar.sweep_duration()) {
            Ok(scan) => slot.agent.receive_scan(scan),
            Err(_) => {}
        }
        slot.next_scan += lidar.sweep_duration();
    }
    slot.reports.push(slot.agent.agent_cycle(now, bus, index));
}

/// Advances the clock from 0 to the scenario duration.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<RunRecord, RunError> {
    let first = &scenario.agents[0].config;
    let (rate, sample_dt) = (first.plan_rate, first.sample_dt);
    if scenario.agents.iter().any(|a| a.config.plan_rate != rate || a.config.sample_dt != sample_dt) {
        return Err(RunError::MixedClocks);
    }
    let mut slots = Vec::with_capacity(scenario.agents.len());
    for (index, s) in scenario.agents.iter().enumerate() {
        let agent =
            Agent::new(s.config.clone(), s.task.clone(), s.start, s.velocity, 0.0).map_err(|source| RunError::Agent { index, source })?;
        slots.push(Slot { next_scan: s.config.lidar.sweep_duration(), agent, reports: Vec::new() });
    }
    let n = slots.len();
    let bus = Bus::new(n, scenario.bus, scenario.seed);
    let mut samples = vec![Vec::new(); n];
    let dt = 1.0 / rate;
    let duration = scenario.duration;
    let mut next_sample = 0u64;
    let mut tick = 0u64;
    while duration > 0.0 && (tick as f64) * dt <= duration + 1e-9 {
        let now = tick as f64 * dt;
        if opts.parallel {
            std::thread::scope(|sc| {
                for (i, slot) in slots.iter_mut().enumerate() {
                    let bus = &bus;
                    sc.spawn(move || step(slot, i, now, scenario, bus));
                }
            });
        } else {
            for (i, slot) in slots.iter_mut().enumerate() {
                step(slot, i, now, scenario, &bus);
            }
        }
        for (i, slot) in slots.iter_mut().enumerate() {
            if slot.agent.broadcast_due(now) {
                let msg = slot.agent.broadcast(now);
                bus.publish(i, msg);
            }
        }
        loop {
            let t = next_sample as f64 * sample_dt;
            if t >= now + dt - 1e-9 || t > duration + 1e-9 {
                break;
            }
            for (i, slot) in slots.iter().enumerate() {
                samples[i].push(sample(slot.agent.trajectory(), t));
            }
            next_sample += 1;
        }
        tick += 1;
    }
    Ok(RunRecord { sample_dt, samples, reports: slots.into_iter().map(|s| s.reports).collect(), dropped_messages: bus.dropped_count() })
}
