//! From range scans to a local obstacle map.

mod classify;
mod map;
mod segment;

pub use classify::{
    classify_cluster, classify_cluster_with, classify_points, fit_line, fit_rectangle, fit_rectangle_with, fit_residual, ClassifyConfig,
};
pub use map::{build_moving_volume, merge_shapes, shape_record, slice_steps, LocalMap, MapKey, MovingVolume, VolumeSlice};
pub use segment::{compensate_motion, segment_scan, segment_scan_with, Cluster, PositionAt, Return, SegmentConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerceptionError {
    #[error("cluster needs at least two points")]
    TooFewPoints,
    #[error("points are coincident or otherwise degenerate")]
    Degenerate,
    #[error("points are not collinear within tolerance")]
    NotCollinear,
}
