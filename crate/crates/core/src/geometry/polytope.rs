use serde::{Deserialize, Serialize};

use super::{GeometryError, Point2, CONTAINS_TOL};

/// `{p : normal · p <= offset}` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halfplane {
    pub normal: Point2,
    pub offset: f64,
}

impl Halfplane {
    /// Normalizes `normal` and scales `offset` to match.
    pub fn new(normal: Point2, offset: f64) -> Result<Self, GeometryError> {
        let n = normal.norm();
        if !(n > 1e-12) || !n.is_finite() || !offset.is_finite() {
            return Err(GeometryError::DegenerateHalfplane);
        }
        Ok(Self { normal: normal / n, offset: offset / n })
    }

    /// Halfplane whose boundary passes through `point` and whose interior
    /// lies opposite to `outward`.
    pub fn through(point: Point2, outward: Point2) -> Result<Self, GeometryError> {
        let n = outward.normalized().ok_or(GeometryError::DegenerateHalfplane)?;
        Ok(Self { normal: n, offset: n.dot(point) })
    }

    /// Positive outside, negative inside.
    #[inline]
    pub fn signed_distance(&self, p: Point2) -> f64 {
        self.normal.dot(p) - self.offset
    }

    #[inline]
    pub fn contains(&self, p: Point2) -> bool {
        self.signed_distance(p) <= CONTAINS_TOL
    }

    pub fn shifted(&self, delta: f64) -> Self {
        Self { normal: self.normal, offset: self.offset + delta }
    }
}

/// Intersection of halfplanes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolytope {
    halfplanes: Vec<Halfplane>,
    empty: bool,
}

impl ConvexPolytope {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_halfplanes(planes: impl IntoIterator<Item = Halfplane>) -> Self {
        let mut poly = Self::new();
        for h in planes {
            poly.push(h);
        }
        poly
    }

    /// Axis-aligned box `center ± half_width`.
    pub fn axis_box(center: Point2, half_width: f64) -> Self {
        let planes = [
            (Point2::new(1.0, 0.0), center.x + half_width),
            (Point2::new(-1.0, 0.0), -(center.x - half_width)),
            (Point2::new(0.0, 1.0), center.y + half_width),
            (Point2::new(0.0, -1.0), -(center.y - half_width)),
        ];
        Self::from_halfplanes(planes.into_iter().map(|(n, o)| Halfplane { normal: n, offset: o }))
    }

    /// Appends a halfplane. Exact duplicates are ignored.
    pub fn push(&mut self, h: Halfplane) {
        if !self.halfplanes.contains(&h) {
            self.halfplanes.push(h);
        }
    }

    pub fn halfplanes(&self) -> &[Halfplane] {
        &self.halfplanes
    }

    pub fn halfplanes_mut(&mut self) -> &mut Vec<Halfplane> {
        &mut self.halfplanes
    }

    pub fn len(&self) -> usize {
        self.halfplanes.len()
    }

    pub fn is_empty_set(&self) -> bool {
        self.empty
    }

    pub fn set_empty(&mut self, empty: bool) {
        self.empty = empty;
    }

    pub fn contains(&self, p: Point2) -> bool {
        polytope_contains(self, p)
    }

    /// Largest signed distance over all planes; `<= 0` means inside.
    pub fn max_violation(&self, p: Point2) -> f64 {
        self.halfplanes.iter().map(|h| h.signed_distance(p)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Vertices of the (bounded) intersection in counter-clockwise order.
    /// Empty when the intersection is empty, unbounded in a way that leaves
    /// no pairwise corners, or degenerate.
    pub fn vertices(&self) -> Vec<Point2> {
        let hs = &self.halfplanes;
        let mut pts: Vec<Point2> = Vec::new();
        for i in 0..hs.len() {
            for j in (i + 1)..hs.len() {
                let (a, b) = (hs[i], hs[j]);
                let det = a.normal.cross(b.normal);
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = (a.offset * b.normal.y - b.offset * a.normal.y) / det;
                let y = (a.normal.x * b.offset - b.normal.x * a.offset) / det;
                let p = Point2::new(x, y);
                if hs.iter().all(|h| h.signed_distance(p) <= 1e-7) {
                    pts.push(p);
                }
            }
        }
        if pts.is_empty() {
            return pts;
        }
        let c = pts.iter().fold(Point2::ORIGIN, |acc, &p| acc + p) / pts.len() as f64;
        pts.sort_by(|p, q| (*p - c).angle().total_cmp(&(*q - c).angle()));
        pts.dedup_by(|p, q| p.distance(*q) < 1e-9);
        if pts.len() > 1 && pts[0].distance(pts[pts.len() - 1]) < 1e-9 {
            pts.pop();
        }
        pts
    }

    /// Recomputes the empty flag from the vertex set.
    pub fn refresh_empty(&mut self) -> bool {
        self.empty = self.vertices().len() < 3;
        self.empty
    }
}

/// True iff `normal_k · p <= offset_k + 1e-9` for every plane.
pub fn polytope_contains(poly: &ConvexPolytope, p: Point2) -> bool {
    poly.halfplanes.iter().all(|h| h.contains(p))
}
