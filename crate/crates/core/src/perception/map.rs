use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{fit_residual, PositionAt};
use crate::geometry::{distance_point_to_shape, shape_distance, Point2, Shape};

pub type MapKey = (i64, i64);

/// Robot-centric obstacle store bucketed by rounded offset from `origin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMap {
    table: BTreeMap<MapKey, Vec<Shape>>,
    origin: Point2,
    map_radius: f64,
}

impl LocalMap {
    pub fn new(origin: Point2, map_radius: f64) -> Self {
        Self { table: BTreeMap::new(), origin, map_radius }
    }

    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn map_radius(&self) -> f64 {
        self.map_radius
    }

    pub fn key_for(&self, p: Point2) -> MapKey {
        ((p.x - self.origin.x).round() as i64, (p.y - self.origin.y).round() as i64)
    }

    pub fn table(&self) -> &BTreeMap<MapKey, Vec<Shape>> {
        &self.table
    }

    pub fn shapes(&self) -> impl Iterator<Item = &Shape> {
        self.table.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.table.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn take_at(&mut self, key: MapKey, idx: usize) -> Shape {
        let bucket = self.table.get_mut(&key).expect("bucket exists");
        let s = bucket.remove(idx);
        if bucket.is_empty() {
            self.table.remove(&key);
        }
        s
    }

    fn find_overlap(&self, shape: &Shape) -> Option<(MapKey, usize)> {
        for (key, bucket) in &self.table {
            for (i, s) in bucket.iter().enumerate() {
                let close = s.center().distance(shape.center()) <= s.size_scale().max(shape.size_scale());
                if close || shape_distance(s, shape) <= 0.0 {
                    return Some((*key, i));
                }
            }
        }
        None
    }

    /// Adds a detection. Detections that touch an existing shape, or whose
    /// centers fall within the larger size scale, count as the same obstacle.
    /// Overlapping detections of the same kind merge into
    /// one bounding shape; for different kinds the one that better explains
    /// `evidence` (the points the new shape was fitted to) survives.
    pub fn insert_obstacle(&mut self, shape: Shape, evidence: &[Point2]) {
        if self.shapes().any(|s| nearly_equal(s, &shape)) {
            return;
        }
        let mut current = shape;
        while let Some((key, idx)) = self.find_overlap(&current) {
            let existing = &self.table[&key][idx];
            if existing.kind() == current.kind() {
                let existing = self.take_at(key, idx);
                current = merge_shapes(&existing, &current);
            } else if fit_residual(existing, evidence) <= fit_residual(&current, evidence) {
                return;
            } else {
                self.take_at(key, idx);
            }
        }
        let key = self.key_for(current.center());
        self.table.entry(key).or_default().push(current);
    }

    /// Re-keys every shape around `new_origin` and forgets shapes whose
    /// centers are beyond `map_radius`.
    pub fn recenter_map(&mut self, new_origin: Point2) {
        self.origin = new_origin;
        let old = std::mem::take(&mut self.table);
        for s in old.into_values().flatten() {
            if s.center().distance(new_origin) <= self.map_radius {
                let key = self.key_for(s.center());
                self.table.entry(key).or_default().push(s);
            }
        }
    }

    /// One record per shape: `variant,center_x,center_y,params…`. Circles
    /// list their radius, polygons their corners.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for s in self.shapes() {
            out.push_str(&shape_record(s));
            out.push('\n');
        }
        out
    }
}

pub fn shape_record(s: &Shape) -> String {
    let c = s.center();
    let mut line = format!("{},{},{}", s.kind().name(), c.x, c.y);
    match s {
        Shape::Circle { radius, .. } => {
            let _ = write!(line, ",{radius}");
        }
        _ => {
            for p in s.polygon().unwrap() {
                let _ = write!(line, ",{},{}", p.x, p.y);
            }
        }
    }
    line
}

fn nearly_equal(a: &Shape, b: &Shape) -> bool {
    const TOL: f64 = 1e-9;
    match (a, b) {
        (Shape::Circle { center: c1, radius: r1 }, Shape::Circle { center: c2, radius: r2 }) => {
            c1.distance(*c2) <= TOL && (r1 - r2).abs() <= TOL
        }
        _ if a.kind() == b.kind() => {
            let (pa, pb) = (a.polygon().unwrap(), b.polygon().unwrap());
            pa.iter().all(|p| pb.iter().any(|q| p.distance(*q) <= TOL))
        }
        _ => false,
    }
}

/// Bounding shape of the same kind as both inputs.
pub fn merge_shapes(a: &Shape, b: &Shape) -> Shape {
    match (a, b) {
        (Shape::Circle { center: c1, radius: r1 }, Shape::Circle { center: c2, radius: r2 }) => {
            let d = c1.distance(*c2);
            if d + r2 <= *r1 {
                return a.clone();
            }
            if d + r1 <= *r2 {
                return b.clone();
            }
            let r = 0.5 * (d + r1 + r2);
            let dir = (*c2 - *c1) / d;
            Shape::Circle { center: *c1 + dir * (r - r1), radius: r }
        }
        (Shape::Triangle { .. }, Shape::Triangle { .. }) => {
            let (big, small) = if a.area() >= b.area() { (a, b) } else { (b, a) };
            let g = big.center();
            let mut scale = 1.0f64;
            for (p0, _, n) in big.edges() {
                let h = n.dot(p0 - g);
                for q in small.polygon().unwrap() {
                    scale = scale.max(n.dot(*q - g) / h);
                }
            }
            let corners: Vec<Point2> = big.polygon().unwrap().iter().map(|p| g + (*p - g) * scale).collect();
            Shape::Triangle { corners: [corners[0], corners[1], corners[2]] }
        }
        _ => merge_boxes(a, b),
    }
}

/// Rectangles and squares: bounding box in the frame of the larger input,
/// whose first edge stays the reference face.
fn merge_boxes(a: &Shape, b: &Shape) -> Shape {
    let (big, small) = if a.area() >= b.area() { (a, b) } else { (b, a) };
    let base = big.polygon().unwrap();
    let o = base[0];
    let u = (base[1] - base[0]).normalized().unwrap_or(Point2::new(1.0, 0.0));
    let w = u.perp();
    let (mut u0, mut u1, mut w0, mut w1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in base.iter().chain(small.polygon().unwrap()) {
        let (pu, pw) = (u.dot(*p - o), w.dot(*p - o));
        u0 = u0.min(pu);
        u1 = u1.max(pu);
        w0 = w0.min(pw);
        w1 = w1.max(pw);
    }
    let square = matches!(big, Shape::Square { .. });
    if square {
        let (su, sw) = (u1 - u0, w1 - w0);
        if sw < su {
            w1 = w0 + su;
        } else {
            let grow = 0.5 * (sw - su);
            u0 -= grow;
            u1 += grow;
        }
    }
    let at = |pu: f64, pw: f64| o + u * pu + w * pw;
    let corners = [at(u0, w0), at(u1, w0), at(u1, w1), at(u0, w1)];
    let center = corners.iter().fold(Point2::ORIGIN, |s, &p| s + p) / 4.0;
    if square {
        Shape::Square { center, corners }
    } else {
        Shape::Rectangle { center, corners }
    }
}

/// Map shapes near the previously planned position at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSlice {
    /// Index on the global time grid: the slice time is `step · τ`.
    pub step: i64,
    pub t: f64,
    pub center: Point2,
    pub shapes: Vec<Shape>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MovingVolume {
    pub slices: Vec<VolumeSlice>,
}

/// Grid steps `k` with `t_now < k·τ ≤ t_now + horizon`.
pub fn slice_steps(t_now: f64, horizon: f64, sample_dt: f64) -> Vec<i64> {
    let first = (t_now / sample_dt + 1e-9).floor() as i64 + 1;
    let count = (horizon / sample_dt).round() as i64;
    (first..first + count).collect()
}

/// For each grid step in the horizon, the map shapes whose outline comes
/// within `window_radius` of `previous` at that time.
pub fn build_moving_volume(
    map: &LocalMap,
    previous: &impl PositionAt,
    t_now: f64,
    horizon: f64,
    sample_dt: f64,
    window_radius: f64,
) -> MovingVolume {
    let slices = slice_steps(t_now, horizon, sample_dt)
        .into_iter()
        .map(|step| {
            let t = step as f64 * sample_dt;
            let center = previous.position_at(t);
            let shapes = map.shapes().filter(|s| distance_point_to_shape(center, s) <= window_radius).cloned().collect();
            VolumeSlice { step, t, center, shapes }
        })
        .collect();
    MovingVolume { slices }
}
