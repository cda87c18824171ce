//! Planar primitives shared by perception, safe-region construction and the
//! range-finder simulator. All quantities are meters / radians in `f64`.

mod point;
mod polytope;
mod shape;

pub use point::Point2;
pub use polytope::{polytope_contains, ConvexPolytope, Halfplane};
pub use shape::closest_on_segment;
pub use shape::{
    circle_from_three_points, distance_point_to_shape, ray_cast, segment_shape_intersection, shape_distance, supporting_halfplane, Shape,
    ShapeKind,
};

/// Slack allowed when testing halfplane membership.
pub const CONTAINS_TOL: f64 = 1e-9;
/// How far a point may sit from a shape outline and still count as on it.
pub const ON_BOUNDARY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("invalid shape: {0}")]
    InvalidShape(&'static str),
    #[error("halfplane normal is zero or non-finite")]
    DegenerateHalfplane,
    #[error("point is not on the shape boundary")]
    NotOnBoundary,
    #[error("reference point is not outside the shape")]
    NotExterior,
    #[error("no supporting line through the boundary point separates the exterior point")]
    NotSeparable,
    #[error("segment does not intersect the shape")]
    SegmentMissesShape,
}

/// Convex hull (Andrew's monotone chain), counter-clockwise, no collinear points.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && (lower[lower.len() - 1] - lower[lower.len() - 2]).cross(p - lower[lower.len() - 1]) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && (upper[upper.len() - 1] - upper[upper.len() - 2]).cross(p - upper[upper.len() - 1]) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Whether a convex shape and a polytope share any point (sampled test:
/// shape center and outline samples against the polytope, polytope
/// vertices against the shape).
pub fn shape_intersects_polytope(shape: &Shape, poly: &ConvexPolytope) -> bool {
    if poly.contains(shape.center()) {
        return true;
    }
    if shape.boundary_samples(32).into_iter().any(|p| poly.contains(p)) {
        return true;
    }
    poly.vertices().into_iter().any(|v| shape.contains(v))
}
