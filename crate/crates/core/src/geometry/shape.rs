use serde::{Deserialize, Serialize};

use super::{GeometryError, Halfplane, Point2, ON_BOUNDARY_TOL};

/// A detected or ground-truth obstacle primitive.
///
/// Polygon corners are stored counter-clockwise. For squares and rectangles
/// `center` is the mean of the corners; a triangle's center is its centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Shape {
    Circle { center: Point2, radius: f64 },
    Square { center: Point2, corners: [Point2; 4] },
    Rectangle { center: Point2, corners: [Point2; 4] },
    Triangle { corners: [Point2; 3] },
}

/// Which primitive a [`Shape`] is, without its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Circle,
    Square,
    Rectangle,
    Triangle,
}

impl ShapeKind {
    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Square => "square",
            ShapeKind::Rectangle => "rectangle",
            ShapeKind::Triangle => "triangle",
        }
    }
}

fn signed_area(pts: &[Point2]) -> f64 {
    let n = pts.len();
    (0..n).map(|i| pts[i].cross(pts[(i + 1) % n])).sum::<f64>() / 2.0
}

fn is_convex_ccw(pts: &[Point2]) -> bool {
    let n = pts.len();
    (0..n).all(|i| {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let c = pts[(i + 2) % n];
        (b - a).cross(c - b) > 0.0
    })
}

fn check_finite(pts: &[Point2]) -> Result<(), GeometryError> {
    if pts.iter().all(|p| p.is_finite()) {
        Ok(())
    } else {
        Err(GeometryError::NonFinite)
    }
}

impl Shape {
    pub fn circle(center: Point2, radius: f64) -> Result<Self, GeometryError> {
        check_finite(&[center])?;
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GeometryError::InvalidShape("circle radius must be positive"));
        }
        Ok(Shape::Circle { center, radius })
    }

    /// Convex quadrilateral, reordered counter-clockwise if needed.
    pub fn rectangle(corners: [Point2; 4]) -> Result<Self, GeometryError> {
        let corners = Self::ccw_quad(corners)?;
        let center = corners.iter().fold(Point2::ORIGIN, |a, &p| a + p) / 4.0;
        Ok(Shape::Rectangle { center, corners })
    }

    /// Like [`Shape::rectangle`] but also requires equal sides (1e-6 relative).
    pub fn square(corners: [Point2; 4]) -> Result<Self, GeometryError> {
        let corners = Self::ccw_quad(corners)?;
        let sides: Vec<f64> = (0..4).map(|i| corners[i].distance(corners[(i + 1) % 4])).collect();
        let max = sides.iter().cloned().fold(0.0, f64::max);
        let min = sides.iter().cloned().fold(f64::INFINITY, f64::min);
        if max - min > 1e-6 * max {
            return Err(GeometryError::InvalidShape("square sides differ"));
        }
        let center = corners.iter().fold(Point2::ORIGIN, |a, &p| a + p) / 4.0;
        Ok(Shape::Square { center, corners })
    }

    pub fn triangle(corners: [Point2; 3]) -> Result<Self, GeometryError> {
        check_finite(&corners)?;
        let mut c = corners;
        let area = signed_area(&c);
        let scale = c.iter().map(|p| p.norm_squared()).fold(1.0, f64::max);
        if area.abs() <= 1e-12 * scale {
            return Err(GeometryError::InvalidShape("degenerate triangle"));
        }
        if area < 0.0 {
            c.swap(1, 2);
        }
        Ok(Shape::Triangle { corners: c })
    }

    /// Rectangle (or square, when the half extents agree) centered at
    /// `center`, with its first axis rotated by `angle`.
    pub fn oriented_box(center: Point2, half_x: f64, half_y: f64, angle: f64) -> Result<Self, GeometryError> {
        if !(half_x > 0.0 && half_y > 0.0) {
            return Err(GeometryError::InvalidShape("box extents must be positive"));
        }
        let u = Point2::from_angle(angle);
        let v = u.perp();
        let corners = [
            center - u * half_x - v * half_y,
            center + u * half_x - v * half_y,
            center + u * half_x + v * half_y,
            center - u * half_x + v * half_y,
        ];
        if (half_x - half_y).abs() <= 1e-6 * half_x.max(half_y) {
            // Snap to an exact square so the side check cannot fail on rounding.
            let h = 0.5 * (half_x + half_y);
            let corners = [center - u * h - v * h, center + u * h - v * h, center + u * h + v * h, center - u * h + v * h];
            Ok(Shape::Square { center, corners })
        } else {
            Ok(Shape::Rectangle { center, corners })
        }
    }

    /// Axis-aligned square `center ± half`.
    pub fn axis_square(center: Point2, half: f64) -> Result<Self, GeometryError> {
        Self::oriented_box(center, half, half, 0.0)
    }

    fn ccw_quad(corners: [Point2; 4]) -> Result<[Point2; 4], GeometryError> {
        check_finite(&corners)?;
        let mut c = corners;
        if signed_area(&c) < 0.0 {
            c.reverse();
        }
        if !is_convex_ccw(&c) {
            return Err(GeometryError::InvalidShape("quadrilateral is not convex"));
        }
        Ok(c)
    }

    pub fn kind(&self) -> ShapeKind {
        match self {
            Shape::Circle { .. } => ShapeKind::Circle,
            Shape::Square { .. } => ShapeKind::Square,
            Shape::Rectangle { .. } => ShapeKind::Rectangle,
            Shape::Triangle { .. } => ShapeKind::Triangle,
        }
    }

    pub fn center(&self) -> Point2 {
        match self {
            Shape::Circle { center, .. } | Shape::Square { center, .. } | Shape::Rectangle { center, .. } => *center,
            Shape::Triangle { corners } => (corners[0] + corners[1] + corners[2]) / 3.0,
        }
    }

    /// Polygon corners, or `None` for circles.
    pub fn polygon(&self) -> Option<&[Point2]> {
        match self {
            Shape::Circle { .. } => None,
            Shape::Square { corners, .. } | Shape::Rectangle { corners, .. } => Some(corners),
            Shape::Triangle { corners } => Some(corners),
        }
    }

    /// Radius of the smallest center-anchored circle containing the shape.
    pub fn size_scale(&self) -> f64 {
        match self {
            Shape::Circle { radius, .. } => *radius,
            _ => {
                let c = self.center();
                self.polygon().unwrap().iter().map(|p| p.distance(c)).fold(0.0, f64::max)
            }
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Shape::Circle { radius, .. } => std::f64::consts::PI * radius * radius,
            _ => signed_area(self.polygon().unwrap()),
        }
    }

    pub fn translated(&self, d: Point2) -> Shape {
        match self {
            Shape::Circle { center, radius } => Shape::Circle { center: *center + d, radius: *radius },
            Shape::Square { center, corners } => Shape::Square { center: *center + d, corners: corners.map(|p| p + d) },
            Shape::Rectangle { center, corners } => Shape::Rectangle { center: *center + d, corners: corners.map(|p| p + d) },
            Shape::Triangle { corners } => Shape::Triangle { corners: corners.map(|p| p + d) },
        }
    }

    /// Edges as (start, end, outward unit normal).
    pub fn edges(&self) -> Vec<(Point2, Point2, Point2)> {
        match self.polygon() {
            None => Vec::new(),
            Some(v) => (0..v.len())
                .map(|i| {
                    let a = v[i];
                    let b = v[(i + 1) % v.len()];
                    let e = b - a;
                    let n = Point2::new(e.y, -e.x).normalized().unwrap_or(Point2::new(1.0, 0.0));
                    (a, b, n)
                })
                .collect(),
        }
    }

    /// Inside or on the boundary.
    pub fn contains(&self, p: Point2) -> bool {
        match self {
            Shape::Circle { center, radius } => p.distance(*center) <= *radius + 1e-12,
            _ => self.edges().iter().all(|(a, _, n)| n.dot(p - *a) <= 1e-12),
        }
    }

    /// Closest point on the boundary to `p` (inside or outside).
    pub fn nearest_boundary_point(&self, p: Point2) -> Point2 {
        match self {
            Shape::Circle { center, radius } => {
                let dir = (p - *center).normalized().unwrap_or(Point2::new(1.0, 0.0));
                *center + dir * *radius
            }
            _ => {
                let mut best = p;
                let mut best_d = f64::INFINITY;
                for (a, b, _) in self.edges() {
                    let q = closest_on_segment(p, a, b);
                    let d = q.distance(p);
                    if d < best_d {
                        best_d = d;
                        best = q;
                    }
                }
                best
            }
        }
    }

    pub fn distance(&self, p: Point2) -> f64 {
        distance_point_to_shape(p, self)
    }

    pub fn on_boundary(&self, p: Point2, tol: f64) -> bool {
        match self {
            Shape::Circle { center, radius } => (p.distance(*center) - radius).abs() <= tol,
            _ => self.nearest_boundary_point(p).distance(p) <= tol,
        }
    }

    /// `n` points spread along the boundary (arc length for polygons,
    /// evenly in angle for circles). Polygon corners are always included.
    pub fn boundary_samples(&self, n: usize) -> Vec<Point2> {
        match self {
            Shape::Circle { center, radius } => {
                (0..n).map(|k| *center + Point2::from_angle(k as f64 * std::f64::consts::TAU / n as f64) * *radius).collect()
            }
            _ => {
                let edges = self.edges();
                let perimeter: f64 = edges.iter().map(|(a, b, _)| a.distance(*b)).sum();
                let mut out: Vec<Point2> = edges.iter().map(|(a, _, _)| *a).collect();
                let extra = n.saturating_sub(out.len());
                for k in 0..extra {
                    let mut s = (k as f64 + 0.5) * perimeter / extra as f64;
                    for (a, b, _) in &edges {
                        let len = a.distance(*b);
                        if s <= len {
                            out.push(a.lerp(*b, s / len));
                            break;
                        }
                        s -= len;
                    }
                }
                out
            }
        }
    }

    /// Support function: `max_{p in shape} dir · p`.
    pub fn support(&self, dir: Point2) -> f64 {
        match self {
            Shape::Circle { center, radius } => dir.dot(*center) + radius * dir.norm(),
            _ => self.polygon().unwrap().iter().map(|p| dir.dot(*p)).fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

pub fn closest_on_segment(p: Point2, a: Point2, b: Point2) -> Point2 {
    let e = b - a;
    let len2 = e.norm_squared();
    if len2 <= 0.0 {
        return a;
    }
    let t = ((p - a).dot(e) / len2).clamp(0.0, 1.0);
    a + e * t
}

/// Circle through three points using the closed-form center. `None` when
/// the denominator vanishes (collinear or coincident points).
///
/// The points are put in lexicographic order first and the computation is
/// carried out relative to their centroid, so every permutation of the
/// arguments gives bit-identical output.
pub fn circle_from_three_points(p1: Point2, p2: Point2, p3: Point2) -> Option<(Point2, f64)> {
    let mut pts = [p1, p2, p3];
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let [p1, p2, p3] = pts;
    let origin = (p1 + p2 + p3) / 3.0;
    let (a, b, c) = (p1 - origin, p2 - origin, p3 - origin);
    let denom = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
    let scale = a.norm_squared().max(b.norm_squared()).max(c.norm_squared());
    if !(denom.abs() > 1e-14 * scale) {
        return None;
    }
    let (sa, sb, sc) = (a.norm_squared(), b.norm_squared(), c.norm_squared());
    let cx = (sa * (b.y - c.y) + sb * (c.y - a.y) + sc * (a.y - b.y)) / denom;
    let cy = (sa * (c.x - b.x) + sb * (a.x - c.x) + sc * (b.x - a.x)) / denom;
    let center_local = Point2::new(cx, cy);
    let radius = (center_local.distance(a) + center_local.distance(b) + center_local.distance(c)) / 3.0;
    Some((center_local + origin, radius))
}

/// Euclidean distance from `p` to the obstacle set, zero inside.
pub fn distance_point_to_shape(p: Point2, s: &Shape) -> f64 {
    match s {
        Shape::Circle { center, radius } => (p.distance(*center) - radius).max(0.0),
        _ => {
            if s.contains(p) {
                0.0
            } else {
                s.nearest_boundary_point(p).distance(p)
            }
        }
    }
}

/// Halfplane through `boundary_point` that excludes the shape and keeps
/// `exterior_point` inside: the tangent for circles, the extended edge line
/// for polygons.
pub fn supporting_halfplane(s: &Shape, boundary_point: Point2, exterior_point: Point2) -> Result<Halfplane, GeometryError> {
    if !s.on_boundary(boundary_point, ON_BOUNDARY_TOL) {
        return Err(GeometryError::NotOnBoundary);
    }
    if s.contains(exterior_point) {
        return Err(GeometryError::NotExterior);
    }
    let outward = match s {
        Shape::Circle { center, .. } => {
            let o = (boundary_point - *center).normalized().ok_or(GeometryError::NotOnBoundary)?;
            if o.dot(exterior_point - boundary_point) <= 0.0 {
                return Err(GeometryError::NotSeparable);
            }
            o
        }
        _ => {
            let mut best: Option<(f64, Point2)> = None;
            for (a, b, n) in s.edges() {
                if closest_on_segment(boundary_point, a, b).distance(boundary_point) > ON_BOUNDARY_TOL {
                    continue;
                }
                let score = n.dot(exterior_point - a);
                if score > 0.0 && best.is_none_or(|(bs, _)| score > bs) {
                    best = Some((score, n));
                }
            }
            best.ok_or(GeometryError::NotSeparable)?.1
        }
    };
    // Interior {outward · p >= outward · b}, written in the `normal · p <= offset` form.
    let anchor = match s {
        Shape::Circle { center, radius } => *center + outward * *radius,
        _ => boundary_point,
    };
    Ok(Halfplane { normal: -outward, offset: -outward.dot(anchor) })
}

/// First boundary crossing on the segment `a → b`, nearest to `a`.
pub fn segment_shape_intersection(a: Point2, b: Point2, s: &Shape) -> Result<Point2, GeometryError> {
    let d = b - a;
    match s {
        Shape::Circle { center, radius } => {
            let f = a - *center;
            let qa = d.norm_squared();
            if qa <= 0.0 {
                return Err(GeometryError::SegmentMissesShape);
            }
            let qb = f.dot(d);
            let qc = f.norm_squared() - radius * radius;
            let disc = qb * qb - qa * qc;
            if disc < 0.0 {
                return Err(GeometryError::SegmentMissesShape);
            }
            let sq = disc.sqrt();
            let t1 = (-qb - sq) / qa;
            let t2 = (-qb + sq) / qa;
            let t = if (0.0..=1.0).contains(&t1) {
                t1
            } else if (0.0..=1.0).contains(&t2) {
                t2
            } else {
                return Err(GeometryError::SegmentMissesShape);
            };
            Ok(a + d * t)
        }
        _ => {
            let mut t_in = 0.0f64;
            let mut t_out = 1.0f64;
            for (v, _, n) in s.edges() {
                let num = n.dot(a - v);
                let den = n.dot(d);
                if den.abs() < 1e-15 {
                    if num > 0.0 {
                        return Err(GeometryError::SegmentMissesShape);
                    }
                    continue;
                }
                let t = -num / den;
                if den < 0.0 {
                    t_in = t_in.max(t);
                } else {
                    t_out = t_out.min(t);
                }
            }
            if t_in > t_out + 1e-15 {
                return Err(GeometryError::SegmentMissesShape);
            }
            Ok(a + d * t_in)
        }
    }
}

/// Distance along the ray at `angle` to the first boundary hit within
/// `(0, max_range]`.
pub fn ray_cast(origin: Point2, angle: f64, s: &Shape, max_range: f64) -> Option<f64> {
    let d = Point2::from_angle(angle);
    const EPS: f64 = 1e-12;
    let t = match s {
        Shape::Circle { center, radius } => {
            let f = origin - *center;
            let b = f.dot(d);
            let c = f.norm_squared() - radius * radius;
            let disc = b * b - c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let (t1, t2) = (-b - sq, -b + sq);
            if t1 > EPS {
                t1
            } else if t2 > EPS {
                t2
            } else {
                return None;
            }
        }
        _ => {
            let mut best = f64::INFINITY;
            for (a, b, _) in s.edges() {
                let e = b - a;
                let denom = d.cross(e);
                if denom.abs() < 1e-15 {
                    continue;
                }
                let w = a - origin;
                let t = w.cross(e) / denom;
                let u = w.cross(d) / denom;
                if t > EPS && (-1e-12..=1.0 + 1e-12).contains(&u) && t < best {
                    best = t;
                }
            }
            best
        }
    };
    (t <= max_range).then_some(t)
}

fn polygons_overlap(a: &[Point2], b: &[Point2]) -> bool {
    let axes = |poly: &[Point2]| -> Vec<Point2> {
        (0..poly.len())
            .map(|i| {
                let e = poly[(i + 1) % poly.len()] - poly[i];
                Point2::new(e.y, -e.x)
            })
            .collect::<Vec<_>>()
    };
    for axis in axes(a).into_iter().chain(axes(b)) {
        let (amin, amax) = project(a, axis);
        let (bmin, bmax) = project(b, axis);
        if amax < bmin || bmax < amin {
            return false;
        }
    }
    true
}

fn project(poly: &[Point2], axis: Point2) -> (f64, f64) {
    poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let v = p.dot(axis);
        (lo.min(v), hi.max(v))
    })
}

/// Gap between two shapes; zero when they touch or overlap.
pub fn shape_distance(a: &Shape, b: &Shape) -> f64 {
    match (a, b) {
        (Shape::Circle { center: c1, radius: r1 }, Shape::Circle { center: c2, radius: r2 }) => (c1.distance(*c2) - r1 - r2).max(0.0),
        (Shape::Circle { center, radius }, poly) | (poly, Shape::Circle { center, radius }) => {
            (distance_point_to_shape(*center, poly) - radius).max(0.0)
        }
        _ => {
            let pa = a.polygon().unwrap();
            let pb = b.polygon().unwrap();
            if polygons_overlap(pa, pb) {
                return 0.0;
            }
            let d1 = pa.iter().map(|p| distance_point_to_shape(*p, b)).fold(f64::INFINITY, f64::min);
            let d2 = pb.iter().map(|p| distance_point_to_shape(*p, a)).fold(f64::INFINITY, f64::min);
            d1.min(d2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Shape {
        Shape::axis_square(Point2::new(0.5, 0.5), 0.5).unwrap()
    }

    fn close(a: Point2, b: Point2, tol: f64) -> bool {
        a.distance(b) <= tol
    }

    #[test]
    fn symmetric_three_point_circle() {
        let (c, r) = circle_from_three_points(Point2::new(0.0, 1.0), Point2::new(1.0, 0.0), Point2::new(2.0, 1.0)).unwrap();
        assert!(close(c, Point2::new(1.0, 1.0), 1e-12));
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_points_have_no_circle() {
        assert!(circle_from_three_points(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(2.0, 0.0)).is_none());
        let p = Point2::new(1.0, 1.0);
        assert!(circle_from_three_points(p, p, p).is_none());
    }

    #[test]
    fn recovers_constructed_circle() {
        let c = Point2::new(3.0, -2.0);
        let pts: Vec<Point2> = [0.3, 2.0, 4.4].iter().map(|&a| c + Point2::from_angle(a) * 0.7).collect();
        let (cc, r) = circle_from_three_points(pts[0], pts[1], pts[2]).unwrap();
        assert!(close(cc, c, 1e-9));
        assert!((r - 0.7).abs() < 1e-9);
    }

    #[test]
    fn distance_examples() {
        let circ = Shape::circle(Point2::ORIGIN, 1.0).unwrap();
        assert!((distance_point_to_shape(Point2::new(3.0, 0.0), &circ) - 2.0).abs() < 1e-12);
        assert_eq!(distance_point_to_shape(Point2::new(0.3, 0.6), &unit_square()), 0.0);
        let d = distance_point_to_shape(Point2::new(2.0, 2.0), &unit_square());
        // dense boundary sampling oracle
        let oracle = unit_square().boundary_samples(40_000).iter().map(|q| q.distance(Point2::new(2.0, 2.0))).fold(f64::INFINITY, f64::min);
        assert!((d - 2f64.sqrt()).abs() < 1e-12);
        assert!((d - oracle).abs() < 1e-4);
    }

    #[test]
    fn tangent_halfplane_at_axis_point() {
        let circ = Shape::circle(Point2::ORIGIN, 1.0).unwrap();
        let h = supporting_halfplane(&circ, Point2::new(1.0, 0.0), Point2::new(3.0, 0.0)).unwrap();
        assert!(close(h.normal, Point2::new(-1.0, 0.0), 1e-12));
        assert!((h.offset + 1.0).abs() < 1e-12);
        assert!(h.contains(Point2::new(3.0, 0.0)));
        assert!(!h.contains(Point2::new(0.5, 0.0)));
    }

    #[test]
    fn rectangle_edge_halfplane_is_collinear_with_edge() {
        let rect = Shape::oriented_box(Point2::new(0.0, 0.0), 2.0, 1.0, 0.0).unwrap();
        let h = supporting_halfplane(&rect, Point2::new(0.5, 1.0), Point2::new(0.5, 3.0)).unwrap();
        assert!(close(h.normal, Point2::new(0.0, -1.0), 1e-12));
        for x in [-2.0, 0.0, 2.0] {
            assert!(h.signed_distance(Point2::new(x, 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_point_off_boundary() {
        let circ = Shape::circle(Point2::ORIGIN, 1.0).unwrap();
        assert_eq!(supporting_halfplane(&circ, Point2::new(2.0, 0.0), Point2::new(3.0, 0.0)), Err(GeometryError::NotOnBoundary));
    }

    #[test]
    fn segment_intersections() {
        let circ = Shape::circle(Point2::ORIGIN, 1.0).unwrap();
        let p = segment_shape_intersection(Point2::new(3.0, 0.0), Point2::ORIGIN, &circ).unwrap();
        assert!(close(p, Point2::new(1.0, 0.0), 1e-12));

        let p = segment_shape_intersection(Point2::new(2.0, 2.0), Point2::new(0.5, 0.5), &unit_square()).unwrap();
        assert!(close(p, Point2::new(1.0, 1.0), 1e-12));

        let tri = Shape::triangle([Point2::new(-1.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)]).unwrap();
        let a = Point2::new(0.0, 5.0);
        let p = segment_shape_intersection(a, tri.center(), &tri).unwrap();
        // brute-force oracle: intersect with each edge, keep the nearest
        let mut best = f64::INFINITY;
        for (e0, e1, _) in tri.edges() {
            for k in 0..=100_000 {
                let q = e0.lerp(e1, k as f64 / 100_000.0);
                if (q.x - a.x).abs() < 1e-9 {
                    best = best.min(a.distance(q));
                }
            }
        }
        assert!((a.distance(p) - best).abs() < 1e-6);
        assert!(tri.on_boundary(p, 1e-9));
    }

    #[test]
    fn segment_miss_is_an_error() {
        let circ = Shape::circle(Point2::ORIGIN, 1.0).unwrap();
        assert!(segment_shape_intersection(Point2::new(3.0, 3.0), Point2::new(3.0, 5.0), &circ).is_err());
    }

    #[test]
    fn ray_cast_examples() {
        let circ = Shape::circle(Point2::ORIGIN, 1.0).unwrap();
        assert!((ray_cast(Point2::new(-3.0, 0.0), 0.0, &circ, 10.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(ray_cast(Point2::new(-3.0, 0.0), std::f64::consts::PI, &circ, 10.0).is_none());
        assert!(ray_cast(Point2::new(-3.0, 0.0), 0.0, &circ, 1.5).is_none());
    }

    #[test]
    fn oblique_ray_matches_marching() {
        let rect = Shape::oriented_box(Point2::new(2.0, 1.0), 1.0, 0.4, 0.3).unwrap();
        let origin = Point2::new(-1.0, -0.5);
        let angle = 0.45;
        let hit = ray_cast(origin, angle, &rect, 10.0).unwrap();
        let dir = Point2::from_angle(angle);
        let mut t = 0.0;
        while t < 10.0 && !rect.contains(origin + dir * t) {
            t += 1e-4;
        }
        assert!((hit - t).abs() < 1e-3);
    }

    #[test]
    fn shape_constructors_validate() {
        assert!(Shape::circle(Point2::ORIGIN, 0.0).is_err());
        let bow = [Point2::new(0.0, 0.0), Point2::new(1.0, 1.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)];
        assert!(Shape::rectangle(bow).is_err());
        let cw = [Point2::new(0.0, 0.0), Point2::new(0.0, 1.0), Point2::new(1.0, 1.0), Point2::new(1.0, 0.0)];
        let sq = Shape::square(cw).unwrap();
        assert!(signed_area(sq.polygon().unwrap()) > 0.0);
        let long = [Point2::new(0.0, 0.0), Point2::new(2.0, 0.0), Point2::new(2.0, 1.0), Point2::new(0.0, 1.0)];
        assert!(Shape::square(long).is_err());
    }

    #[test]
    fn shape_distances() {
        let a = Shape::circle(Point2::ORIGIN, 1.0).unwrap();
        let b = Shape::circle(Point2::new(3.0, 0.0), 1.0).unwrap();
        assert!((shape_distance(&a, &b) - 1.0).abs() < 1e-12);
        let s = Shape::axis_square(Point2::new(3.0, 0.0), 0.5).unwrap();
        assert!((shape_distance(&a, &s) - 1.5).abs() < 1e-12);
        let t = Shape::axis_square(Point2::new(3.5, 0.0), 0.5).unwrap();
        assert_eq!(shape_distance(&s, &t), 0.0);
        let u = Shape::axis_square(Point2::new(5.0, 0.0), 0.5).unwrap();
        assert!((shape_distance(&s, &u) - 1.0).abs() < 1e-12);
    }
}
