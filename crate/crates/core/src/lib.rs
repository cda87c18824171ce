//! Decentralized receding-horizon trajectory planning for planar robots.
//!
//! Each agent turns range scans into primitive obstacle shapes, keeps a
//! robot-centric local map, predicts anonymous peers from broadcast states,
//! builds convex safe regions along its previous plan and solves a B-spline
//! quadratic program every cycle.

pub mod agent;
pub mod geometry;
pub mod optimizer;
pub mod perception;
pub mod prediction;
pub mod quadrature;
pub mod safe_region;
pub mod sensor;
pub mod spline;
