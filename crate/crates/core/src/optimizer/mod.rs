//! Per-cycle trajectory optimization.

pub mod cost;
pub mod plan;
pub mod qp;

pub use cost::{
    collision_cost_closed_form, collision_cost_offset, collision_kernel, end_cost, end_time_heuristic, quadratize_collision,
    quadratize_collision_onto, CollisionQuadratic, Weights, DISTANCE_FLOOR,
};
pub use plan::{
    assemble_qp, hold_previous, plan_with_fallback, resolve_goal_time, AssembledQp, DerivativeLimit, DynamicRows, PlanError, PlanOutcome,
    PlanRequest, PlanStatus, PlannerConfig, RowTag, SolveRecord, Waypoint,
};
pub use qp::{solve_qp, solve_qp_with, QpError, QpProblem, QpSettings, QpSolution, QpStatus, Side};
