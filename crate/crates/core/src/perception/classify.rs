use serde::{Deserialize, Serialize};

use super::{Cluster, PerceptionError};
use crate::geometry::{circle_from_three_points, convex_hull, distance_point_to_shape, Point2, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    /// Circles at least this large are treated as straight lines.
    pub radius_threshold: f64,
    /// Allowed radial miss of a point against the fitted circle.
    pub fit_tol: f64,
    /// Allowed perpendicular miss of a point against a fitted line.
    pub line_tol: f64,
    pub max_iterations: usize,
    /// Side of the square used for two-point clusters, and the minimum
    /// thickness of any fitted box.
    pub min_side: f64,
    /// Two straight legs closer than this to perpendicular form a box
    /// corner rather than a triangle (radians).
    pub right_angle_tol: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            radius_threshold: 100.0,
            fit_tol: 0.05,
            line_tol: 0.03,
            max_iterations: 5,
            min_side: 0.1,
            right_angle_tol: 10f64.to_radians(),
        }
    }
}

/// Least-squares line: centroid, unit direction, max perpendicular residual.
pub fn fit_line(points: &[Point2]) -> (Point2, Point2, f64) {
    let n = points.len() as f64;
    let c = points.iter().fold(Point2::ORIGIN, |a, &p| a + p) / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = *p - c;
        sxx += d.x * d.x;
        syy += d.y * d.y;
        sxy += d.x * d.y;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let dir = Point2::from_angle(angle);
    let normal = dir.perp();
    let residual = points.iter().map(|p| normal.dot(*p - c).abs()).fold(0.0, f64::max);
    (c, dir, residual)
}

fn line_residual_two_point(points: &[Point2], a: Point2, b: Point2) -> f64 {
    let Some(dir) = (b - a).normalized() else {
        return f64::INFINITY;
    };
    let n = dir.perp();
    points.iter().map(|p| n.dot(*p - a).abs()).fold(0.0, f64::max)
}

/// Square erected on the far side of the segment through the extreme points,
/// with side equal to the segment length (at least `cfg.min_side`). The
/// first edge of the result is the observed face.
pub fn fit_rectangle(points: &[Point2], robot_position: Point2) -> Result<Shape, PerceptionError> {
    fit_rectangle_with(points, robot_position, &ClassifyConfig::default())
}

pub fn fit_rectangle_with(points: &[Point2], robot_position: Point2, cfg: &ClassifyConfig) -> Result<Shape, PerceptionError> {
    if points.len() < 2 {
        return Err(PerceptionError::TooFewPoints);
    }
    let (a, b) = extreme_pair(points);
    if a.distance(b) <= 1e-12 {
        return Err(PerceptionError::Degenerate);
    }
    if line_residual_two_point(points, a, b) > cfg.line_tol {
        return Err(PerceptionError::NotCollinear);
    }
    let dir = (b - a).normalized().unwrap();
    let len = a.distance(b);
    let (a, b) = if len < cfg.min_side {
        let mid = a.lerp(b, 0.5);
        (mid - dir * (0.5 * cfg.min_side), mid + dir * (0.5 * cfg.min_side))
    } else {
        (a, b)
    };
    let side = a.distance(b);
    // interior lies left of a→b for counter-clockwise corners
    let (a, b) = if (b - a).perp().dot(a.lerp(b, 0.5) - robot_position) >= 0.0 { (a, b) } else { (b, a) };
    let away = (b - a).perp().normalized().unwrap();
    let corners = [a, b, b + away * side, a + away * side];
    let center = corners.iter().fold(Point2::ORIGIN, |s, &p| s + p) / 4.0;
    Ok(Shape::Square { center, corners })
}

/// The two points farthest apart along the principal direction.
fn extreme_pair(points: &[Point2]) -> (Point2, Point2) {
    let (c, dir, _) = fit_line(points);
    let mut lo = (f64::INFINITY, points[0]);
    let mut hi = (f64::NEG_INFINITY, points[0]);
    for p in points {
        let s = dir.dot(*p - c);
        if s < lo.0 {
            lo = (s, *p);
        }
        if s > hi.0 {
            hi = (s, *p);
        }
    }
    (lo.1, hi.1)
}

/// Box around `points` with its first axis along `angle`. Extents thinner
/// than `min_side` grow on the side facing away from the robot.
fn oriented_bounds(points: &[Point2], angle: f64, robot: Point2, min_side: f64) -> Result<Shape, PerceptionError> {
    let u = Point2::from_angle(angle);
    let v = u.perp();
    let span = |axis: Point2| {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            let s = axis.dot(*p);
            lo = lo.min(s);
            hi = hi.max(s);
        }
        let r = axis.dot(robot);
        if hi - lo < min_side {
            if r <= 0.5 * (lo + hi) {
                hi = lo + min_side;
            } else {
                lo = hi - min_side;
            }
        }
        (lo, hi)
    };
    let (u0, u1) = span(u);
    let (v0, v1) = span(v);
    let center = u * (0.5 * (u0 + u1)) + v * (0.5 * (v0 + v1));
    Shape::oriented_box(center, 0.5 * (u1 - u0), 0.5 * (v1 - v0), angle).map_err(|_| PerceptionError::Degenerate)
}

/// Dyadic index levels used by the consistency recursion: level `i` holds
/// the midpoints of the intervals of level `i - 1`.
fn level_triples(n: usize, level: usize) -> Vec<(usize, usize, usize)> {
    let parts = 1usize << (level - 1);
    let at = |j: usize| ((j as f64) * (n - 1) as f64 / parts as f64).round() as usize;
    (0..parts)
        .filter_map(|j| {
            let (a, b) = (at(j), at(j + 1));
            let m = (a + b) / 2;
            (m > a && m < b).then_some((a, m, b))
        })
        .collect()
}

enum Verdict {
    Circle(Point2, f64),
    LineLike,
    Polygon,
}

fn circle_recursion(points: &[Point2], robot: Point2, cfg: &ClassifyConfig) -> Verdict {
    let n = points.len();
    let (first, mid, last) = (points[0], points[(n - 1) / 2], points[n - 1]);
    let Some((c, r)) = circle_from_three_points(first, mid, last).filter(|&(_, r)| r < cfg.radius_threshold) else {
        return Verdict::LineLike;
    };
    // A convex obstacle shows its near side: the center must lie beyond the arc.
    if (c - robot).norm() <= (mid - robot).norm() {
        return Verdict::Polygon;
    }
    let fits = |p: Point2| (p.distance(c) - r).abs() <= cfg.fit_tol;
    for level in 2..=cfg.max_iterations {
        let triples = level_triples(n, level);
        if triples.is_empty() {
            break;
        }
        for (a, m, b) in triples {
            let sub = circle_from_three_points(points[a], points[m], points[b]);
            if sub.is_none_or(|(_, rs)| rs >= cfg.radius_threshold) || !fits(points[m]) {
                return Verdict::Polygon;
            }
        }
    }
    if points.iter().all(|&p| fits(p)) {
        Verdict::Circle(c, r)
    } else {
        Verdict::Polygon
    }
}

/// Two straight legs meeting at a corner become a box (right angle) or a
/// triangle; anything else gets the principal-axis bounding box.
fn polygon_fit(points: &[Point2], robot: Point2, cfg: &ClassifyConfig) -> Result<Shape, PerceptionError> {
    let n = points.len();
    let (first, last) = (points[0], points[n - 1]);
    let chord = (last - first).normalized();
    if let Some(dir) = chord {
        let normal = dir.perp();
        let (k, _) = points.iter().enumerate().map(|(i, p)| (i, normal.dot(*p - first).abs())).fold((0, -1.0), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        });
        if k > 0 && k < n - 1 {
            // The farthest point may sit on either leg; give it to the one
            // it fits better.
            let split = |a: usize, b: usize| {
                let (l1, l2) = (&points[..a], &points[b..]);
                (l1.len() >= 2 && l2.len() >= 2).then(|| (fit_line(l1), fit_line(l2), l1.len(), l2.len()))
            };
            let worst = |f: &((Point2, Point2, f64), (Point2, Point2, f64), usize, usize)| f.0 .2.max(f.1 .2);
            let candidates = [split(k + 1, k), split(k + 1, k + 1), split(k, k)];
            let best = candidates.into_iter().flatten().min_by(|a, b| worst(a).total_cmp(&worst(b)));
            if let Some(((c1, d1, r1), (c2, d2, r2), len1, len2)) = best {
                let det = d1.cross(d2);
                if r1 <= cfg.line_tol && r2 <= cfg.line_tol && det.abs() > 1e-9 {
                    let s = (c2 - c1).cross(d2) / det;
                    let corner = c1 + d1 * s;
                    let hull = convex_hull(points);
                    let near_hull = hull.len() >= 3 && hull_distance(&hull, corner) <= cfg.fit_tol;
                    let convex_toward_robot = (corner - robot).norm() < (first.lerp(last, 0.5) - robot).norm();
                    if near_hull && convex_toward_robot {
                        let cos = d1.dot(d2).abs();
                        if cos < cfg.right_angle_tol.sin() {
                            let (long, _) = if len1 >= len2 { (d1, d2) } else { (d2, d1) };
                            return oriented_bounds(points, long.angle(), robot, cfg.min_side);
                        }
                        if let Ok(t) = Shape::triangle([first, corner, last]) {
                            return Ok(t);
                        }
                    }
                }
            }
        }
    }
    oriented_bounds(points, min_area_angle(points), robot, cfg.min_side)
}

/// Orientation of the smallest-area box around `points` among the hull
/// edge directions. A principal-axis box of an L-shaped return would stick
/// out past the corner toward the robot.
fn min_area_angle(points: &[Point2]) -> f64 {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return fit_line(points).1.angle();
    }
    let area = |angle: f64| {
        let u = Point2::from_angle(angle);
        let v = u.perp();
        let extent = |axis: Point2| {
            let (lo, hi) = hull.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(axis.dot(*p)), hi.max(axis.dot(*p))));
            hi - lo
        };
        extent(u) * extent(v)
    };
    (0..hull.len())
        .filter_map(|i| (hull[(i + 1) % hull.len()] - hull[i]).normalized().map(|d| d.angle()))
        .map(|a| (area(a), a))
        .fold((f64::INFINITY, 0.0), |best, cur| if cur.0 < best.0 { cur } else { best })
        .1
}

fn hull_distance(hull: &[Point2], p: Point2) -> f64 {
    let inside = (0..hull.len()).all(|i| (hull[(i + 1) % hull.len()] - hull[i]).cross(p - hull[i]) >= 0.0);
    if inside {
        return 0.0;
    }
    (0..hull.len())
        .map(|i| crate::geometry::closest_on_segment(p, hull[i], hull[(i + 1) % hull.len()]).distance(p))
        .fold(f64::INFINITY, f64::min)
}

/// Shape primitive for a cluster whose points were projected from
/// `cluster.origin`.
pub fn classify_cluster(cluster: &Cluster) -> Result<Shape, PerceptionError> {
    classify_cluster_with(cluster, &ClassifyConfig::default())
}

pub fn classify_cluster_with(cluster: &Cluster, cfg: &ClassifyConfig) -> Result<Shape, PerceptionError> {
    classify_points(&cluster.points, cluster.origin, cfg)
}

pub fn classify_points(points: &[Point2], robot: Point2, cfg: &ClassifyConfig) -> Result<Shape, PerceptionError> {
    if points.len() < 2 {
        return Err(PerceptionError::TooFewPoints);
    }
    if points.iter().all(|p| p.distance(points[0]) <= 1e-12) {
        return Err(PerceptionError::Degenerate);
    }
    if points.len() == 2 {
        let mid = points[0].lerp(points[1], 0.5);
        let dir = (points[1] - points[0]).normalized().unwrap();
        let h = dir * (0.5 * cfg.min_side);
        return fit_rectangle_with(&[mid - h, mid + h], robot, cfg);
    }
    match circle_recursion(points, robot, cfg) {
        Verdict::Circle(c, r) => Shape::circle(c, r).map_err(|_| PerceptionError::Degenerate),
        Verdict::LineLike => match fit_rectangle_with(points, robot, cfg) {
            Ok(s) => Ok(s),
            Err(PerceptionError::NotCollinear) => polygon_fit(points, robot, cfg),
            Err(e) => Err(e),
        },
        Verdict::Polygon => polygon_fit(points, robot, cfg),
    }
}

/// Mean distance from `points` to the outline of `shape`.
pub fn fit_residual(shape: &Shape, points: &[Point2]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    points
        .iter()
        .map(|&p| match shape {
            Shape::Circle { center, radius } => (p.distance(*center) - radius).abs(),
            _ => {
                if shape.contains(p) {
                    shape.nearest_boundary_point(p).distance(p)
                } else {
                    distance_point_to_shape(p, shape)
                }
            }
        })
        .sum::<f64>()
        / points.len() as f64
}
