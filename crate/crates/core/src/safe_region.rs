//! Convex free-space regions along the previous plan, one per time step.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geometry::{ray_cast, shape_intersects_polytope, ConvexPolytope, Halfplane, Point2, Shape};
use crate::perception::MovingVolume;
use crate::prediction::{Footprint, PeerTrack};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegionError {
    #[error("seed lies inside an obstacle")]
    SeedInsideObstacle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegionConfig {
    pub n_dirs: usize,
    pub r_max: f64,
    pub max_planes: usize,
    /// Obstacles closer than this to a moving seed get a plane parallel to
    /// the direction of travel, so consecutive slices agree on which side
    /// to pass.
    pub lateral_trigger: f64,
    /// Largest sideways move a parallel plane may demand of the seed.
    pub lateral_max_shift: f64,
    /// Extra clearance added around every peer footprint.
    pub peer_margin: f64,
    /// Peers only contract slices up to this far past the first slice.
    pub peer_horizon: f64,
    /// Clockwise turn of each peer plane's normal, radians. Every agent
    /// applying the same turn makes head-on pairs pass on the right.
    pub peer_turn: f64,
    /// Fraction of the free gap between the ego seed and a peer that is
    /// ceded to the peer. Zero keeps the plane tangent to the peer.
    pub peer_gap_share: f64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            n_dirs: 16,
            r_max: 5.0,
            max_planes: 24,
            lateral_trigger: 0.45,
            lateral_max_shift: 1.2,
            peer_margin: 0.15,
            peer_horizon: 1.0,
            peer_turn: 0.3,
            peer_gap_share: 0.5,
        }
    }
}

/// Why a slice cannot be trusted this cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceFlag {
    /// Seed was inside an obstacle and the previous region was reused.
    Reused,
    /// Seed inside an obstacle and nothing to reuse; the slice is unusable.
    SeedBlocked,
    /// The seed violates a peer plane, so the soft constraint starts active.
    PeerConflict,
    /// Deflation left nothing.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSlice {
    pub step: i64,
    pub t: f64,
    pub seed: Point2,
    pub polytope: ConvexPolytope,
    pub flags: Vec<SliceFlag>,
    /// The trailing halfplanes that came from peers rather than obstacles.
    #[serde(default)]
    pub peer_planes: usize,
}

impl RegionSlice {
    /// Usable as a constraint: not blocked and not empty.
    pub fn usable(&self) -> bool {
        !self.flags.iter().any(|f| matches!(f, SliceFlag::SeedBlocked | SliceFlag::Empty))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SafeRegion {
    pub slices: Vec<RegionSlice>,
}

impl SafeRegion {
    pub fn slice_for_step(&self, step: i64) -> Option<&RegionSlice> {
        self.slices.iter().find(|s| s.step == step)
    }

    /// `time,nx,ny,offset` per halfplane.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for s in &self.slices {
            for h in s.polytope.halfplanes() {
                let _ = writeln!(out, "{},{},{},{}", s.t, h.normal.x, h.normal.y, h.offset);
            }
        }
        out
    }
}

/// Line through the point of `shape` nearest to `seed`, perpendicular to the
/// gap, keeping `seed`. `None` when `seed` touches the shape.
fn nearest_point_plane(shape: &Shape, seed: Point2) -> Option<Halfplane> {
    let q = shape.nearest_boundary_point(seed);
    if shape.contains(seed) {
        return None;
    }
    let n = (q - seed).normalized()?;
    Some(Halfplane { normal: n, offset: n.dot(q) })
}

/// Free region around `seed`: one separating line per obstacle that the
/// directional search or the growing region reaches, clipped to the
/// `r_max` box.
pub fn seed_region(slice: &[Shape], seed: Point2, cfg: &RegionConfig) -> Result<ConvexPolytope, RegionError> {
    seed_region_along(slice, seed, None, cfg)
}

/// Plane parallel to `heading` that keeps `shape` on the side its center
/// lies on. `None` when it would ask the seed to move sideways by more
/// than `max_shift`.
fn lateral_plane(shape: &Shape, seed: Point2, heading: Point2, max_shift: f64) -> Option<Halfplane> {
    let side = heading.perp();
    let n = if side.dot(shape.center() - seed) >= 0.0 { side } else { -side };
    let h = Halfplane { normal: n, offset: -shape.support(-n) };
    (h.signed_distance(seed) <= max_shift).then_some(h)
}

/// As [`seed_region`], with the direction of travel at the seed when known.
pub fn seed_region_along(
    slice: &[Shape],
    seed: Point2,
    heading: Option<Point2>,
    cfg: &RegionConfig,
) -> Result<ConvexPolytope, RegionError> {
    if slice.iter().any(|s| s.contains(seed)) {
        return Err(RegionError::SeedInsideObstacle);
    }
    let mut poly = ConvexPolytope::axis_box(seed, cfg.r_max);
    let mut used = vec![false; slice.len()];
    // Shapes hit first along each search direction, nearest hit first.
    let mut order: Vec<(f64, usize)> = Vec::new();
    for k in 0..cfg.n_dirs {
        let angle = std::f64::consts::TAU * k as f64 / cfg.n_dirs as f64;
        let hit = slice
            .iter()
            .enumerate()
            .filter_map(|(i, s)| ray_cast(seed, angle, s, cfg.r_max).map(|d| (d, i)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((d, i)) = hit {
            if !used[i] {
                used[i] = true;
                order.push((d, i));
            }
        }
    }
    // Everything else in the slice, by distance from the seed.
    let mut rest: Vec<(f64, usize)> = (0..slice.len()).filter(|&i| !used[i]).map(|i| (slice[i].distance(seed), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    rest.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (_, i) in order.into_iter().chain(rest) {
        if !shape_intersects_polytope(&slice[i], &poly) {
            continue;
        }
        let lateral = heading
            .filter(|_| slice[i].distance(seed) < cfg.lateral_trigger)
            .and_then(|hd| lateral_plane(&slice[i], seed, hd, cfg.lateral_max_shift));
        if let Some(h) = lateral.or_else(|| nearest_point_plane(&slice[i], seed)) {
            poly.push(h);
        }
    }
    trim_planes(&mut poly, seed, cfg.max_planes);
    Ok(poly)
}

/// Keeps the four box planes and the planes nearest to `seed`.
fn trim_planes(poly: &mut ConvexPolytope, seed: Point2, max_planes: usize) {
    let planes = poly.halfplanes_mut();
    if planes.len() <= max_planes {
        return;
    }
    let (bbox, mut others): (Vec<Halfplane>, Vec<Halfplane>) = {
        let mut b = Vec::new();
        let mut o = Vec::new();
        for (i, h) in planes.drain(..).enumerate() {
            if i < 4 {
                b.push(h);
            } else {
                o.push(h);
            }
        }
        (b, o)
    };
    others.sort_by(|a, b| (-a.signed_distance(seed)).total_cmp(&(-b.signed_distance(seed))));
    others.truncate(max_planes.saturating_sub(bbox.len()));
    planes.extend(bbox);
    planes.extend(others);
}

/// Outcome of one peer contraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contraction {
    Unchanged,
    Contracted,
    /// The seed sits inside the inflated peer; a separating line was still
    /// added so the optimizer is pushed away from the peer.
    SeedInside,
}

/// Cuts the peer's inflated footprint out of `polytope`.
pub fn contract_for_peer(
    polytope: &mut ConvexPolytope,
    seed: Point2,
    peer_position: Point2,
    fp: &Footprint,
    margin: f64,
    retreat_toward: Point2,
) -> Contraction {
    let inflated = inflate(fp, margin);
    let body = inflated.shape_at(peer_position);
    if !shape_intersects_polytope(&body, polytope) {
        return Contraction::Unchanged;
    }
    let d = seed - peer_position;
    if body.contains(seed) {
        let away = (retreat_toward - peer_position).normalized().or_else(|| d.normalized()).unwrap_or(Point2::new(1.0, 0.0));
        let n = -away;
        polytope.push(Halfplane { normal: n, offset: n.dot(peer_position) - inflated.support(n) });
        return Contraction::SeedInside;
    }
    let n = (peer_position - seed).normalized().expect("seed outside footprint");
    let h = Halfplane { normal: n, offset: n.dot(peer_position) - inflated.support(n) };
    if h.contains(seed) {
        polytope.push(h);
    } else if let Some(h) = nearest_point_plane(&body, seed) {
        polytope.push(h);
    }
    Contraction::Contracted
}

fn inflate(fp: &Footprint, margin: f64) -> Footprint {
    match *fp {
        Footprint::Circle { radius } => Footprint::Circle { radius: radius + margin },
        Footprint::Square { half_extent } => Footprint::Square { half_extent: half_extent + margin },
    }
}

/// Turns the most recently added plane's normal clockwise by `angle` and
/// keeps it tangent to the inflated peer. Left alone if the turned plane
/// would cut off the seed.
pub fn turn_peer_plane(polytope: &mut ConvexPolytope, seed: Point2, peer_position: Point2, fp: &Footprint, margin: f64, angle: f64) {
    let inflated = inflate(fp, margin);
    if let Some(h) = polytope.halfplanes_mut().last_mut() {
        let n = h.normal.rotate(-angle);
        let turned = Halfplane { normal: n, offset: n.dot(peer_position) - inflated.support(n) };
        if turned.contains(seed) {
            *h = turned;
        }
    }
}

/// Moves the most recently added plane toward the seed by `share` of the
/// free gap between the deflated seed and the plane.
pub fn cede_gap(polytope: &mut ConvexPolytope, seed: Point2, ego: &Footprint, share: f64) {
    if let Some(h) = polytope.halfplanes_mut().last_mut() {
        let gap = h.offset - h.normal.dot(seed) - ego.support(h.normal);
        if gap > 0.0 {
            h.offset -= share * gap;
        }
    }
}

/// Pulls every plane in by the ego footprint's extent along its normal.
/// Returns `true` when the result is empty.
pub fn deflate_for_ego(polytope: &mut ConvexPolytope, ego: &Footprint) -> bool {
    for h in polytope.halfplanes_mut() {
        h.offset -= ego.support(h.normal);
    }
    polytope.refresh_empty()
}

/// Seeds, contracts and deflates one region per moving-volume slice.
/// A slice whose seed is inside an obstacle reuses `previous`'s region for
/// the same time step when there is one.
pub fn build_safe_regions(
    volume: &MovingVolume,
    tracks: &[PeerTrack],
    ego: &Footprint,
    ego_position: Point2,
    cfg: &RegionConfig,
    previous: Option<&SafeRegion>,
) -> SafeRegion {
    let t_first = volume.slices.first().map_or(0.0, |s| s.t);
    let vs_all = &volume.slices;
    let slices = vs_all
        .iter()
        .enumerate()
        .map(|(j, vs)| {
            let mut flags = Vec::new();
            let seed = vs.center;
            let before = vs_all[j.saturating_sub(1)].center;
            let after = vs_all[(j + 1).min(vs_all.len() - 1)].center;
            let heading = (after - before).normalized().filter(|_| after.distance(before) > 1e-6);
            let mut peer_planes = 0;
            let polytope = match seed_region_along(&vs.shapes, seed, heading, cfg) {
                Ok(mut poly) => {
                    let own = poly.len();
                    let peers = if vs.t - t_first <= cfg.peer_horizon + 1e-9 { tracks } else { &[] };
                    let mut inside = false;
                    for tr in peers {
                        let p = tr.predict_position(vs.t);
                        let r = contract_for_peer(&mut poly, seed, p, &tr.footprint(), cfg.peer_margin, ego_position);
                        if r == Contraction::Contracted && cfg.peer_turn != 0.0 {
                            turn_peer_plane(&mut poly, seed, p, &tr.footprint(), cfg.peer_margin, cfg.peer_turn);
                        }
                        if r != Contraction::Unchanged {
                            cede_gap(&mut poly, seed, ego, cfg.peer_gap_share);
                        }
                        inside |= r == Contraction::SeedInside;
                    }
                    peer_planes = poly.len() - own;
                    deflate_for_ego(&mut poly, ego);
                    if inside || poly.halfplanes()[own..].iter().any(|h| !h.contains(seed)) {
                        flags.push(SliceFlag::PeerConflict);
                    }
                    // Peer planes are soft, so only the obstacle part decides emptiness.
                    let mut hard = ConvexPolytope::from_halfplanes(poly.halfplanes()[..own].iter().copied());
                    if hard.refresh_empty() {
                        flags.push(SliceFlag::Empty);
                    }
                    poly.refresh_empty();
                    poly
                }
                Err(RegionError::SeedInsideObstacle) => match previous.and_then(|p| p.slice_for_step(vs.step)).filter(|s| s.usable()) {
                    Some(old) => {
                        flags.push(SliceFlag::Reused);
                        peer_planes = old.peer_planes;
                        old.polytope.clone()
                    }
                    None => {
                        flags.push(SliceFlag::SeedBlocked);
                        ConvexPolytope::new()
                    }
                },
            };
            RegionSlice { step: vs.step, t: vs.t, seed, polytope, flags, peer_planes }
        })
        .collect();
    SafeRegion { slices }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::VolumeSlice;
    use crate::prediction::{PeerState, PredictionConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> RegionConfig {
        RegionConfig::default()
    }

    /// Pure tangent planes: no turn, no gap sharing, every slice in reach.
    fn tangent_cfg() -> RegionConfig {
        RegionConfig { peer_turn: 0.0, peer_gap_share: 0.0, peer_horizon: f64::INFINITY, ..RegionConfig::default() }
    }

    #[test]
    fn empty_slice_is_the_box() {
        let p = seed_region(&[], Point2::new(1.0, 2.0), &cfg()).unwrap();
        assert_eq!(p, ConvexPolytope::axis_box(Point2::new(1.0, 2.0), 5.0));
    }

    #[test]
    fn circle_gives_tangent() {
        let c = Shape::circle(Point2::new(3.0, 0.0), 1.0).unwrap();
        let p = seed_region(&[c], Point2::ORIGIN, &cfg()).unwrap();
        assert_eq!(p.len(), 5);
        assert!(p.contains(Point2::new(1.9, 0.0)));
        assert!(!p.contains(Point2::new(2.1, 0.0)));
    }

    #[test]
    fn four_squares_box_in_the_seed() {
        let shapes: Vec<Shape> = [(2.0, 0.0), (-2.0, 0.0), (0.0, 2.0), (0.0, -2.0)]
            .iter()
            .map(|&(x, y)| Shape::axis_square(Point2::new(x, y), 0.5).unwrap())
            .collect();
        let p = seed_region(&shapes, Point2::ORIGIN, &cfg()).unwrap();
        assert_eq!(p.len(), 8);
        // dense grid: every contained point is obstacle free, and the inner
        // square |x|,|y| < 1.5 is all contained
        for i in -60..=60 {
            for j in -60..=60 {
                let q = Point2::new(i as f64 * 0.05, j as f64 * 0.05);
                if p.contains(q) {
                    assert!(shapes.iter().all(|s| !s.contains(q) || s.on_boundary(q, 1e-9)));
                }
                if q.x.abs() < 1.49 && q.y.abs() < 1.49 {
                    assert!(p.contains(q));
                }
            }
        }
    }

    #[test]
    fn seed_inside_obstacle_is_an_error() {
        let c = Shape::circle(Point2::ORIGIN, 1.0).unwrap();
        assert_eq!(seed_region(&[c], Point2::new(0.1, 0.0), &cfg()), Err(RegionError::SeedInsideObstacle));
    }

    #[test]
    fn random_slices_exclude_every_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let shapes: Vec<Shape> = (0..rng.random_range(1..12))
                .map(|_| {
                    let c = Point2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
                    if rng.random_bool(0.5) {
                        Shape::circle(c, rng.random_range(0.1..1.0)).unwrap()
                    } else {
                        Shape::oriented_box(c, rng.random_range(0.1..1.0), rng.random_range(0.1..1.0), rng.random_range(0.0..3.0)).unwrap()
                    }
                })
                .collect();
            let seed = Point2::ORIGIN;
            if shapes.iter().any(|s| s.contains(seed)) {
                continue;
            }
            let poly = seed_region(&shapes, seed, &cfg()).unwrap();
            assert!(poly.contains(seed));
            assert!(poly.len() <= 24);
            for s in &shapes {
                for q in s.boundary_samples(64) {
                    assert!(poly.max_violation(q) >= -1e-9, "{s:?}");
                }
            }
        }
    }

    #[test]
    fn distant_peer_leaves_region_alone() {
        let mut poly = ConvexPolytope::axis_box(Point2::ORIGIN, 5.0);
        let before = poly.clone();
        let r =
            contract_for_peer(&mut poly, Point2::ORIGIN, Point2::new(10.0, 0.0), &Footprint::Circle { radius: 0.3 }, 0.0, Point2::ORIGIN);
        assert_eq!(r, Contraction::Unchanged);
        assert_eq!(poly, before);
    }

    #[test]
    fn circle_peer_contracts_at_tangent() {
        let mut poly = ConvexPolytope::axis_box(Point2::ORIGIN, 5.0);
        let r =
            contract_for_peer(&mut poly, Point2::ORIGIN, Point2::new(2.0, 0.0), &Footprint::Circle { radius: 0.3 }, 0.0, Point2::ORIGIN);
        assert_eq!(r, Contraction::Contracted);
        assert!(poly.contains(Point2::new(1.6, 0.0)));
        assert!(!poly.contains(Point2::new(1.8, 0.0)));
        let h = poly.halfplanes().last().unwrap();
        assert!((h.offset - 1.7).abs() < 1e-12);
    }

    #[test]
    fn square_peer_uses_support_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let e = rng.random_range(0.1..0.5);
            let fp = Footprint::Square { half_extent: e };
            let peer = Point2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
            let seed = Point2::ORIGIN;
            let body = fp.shape_at(peer);
            if body.contains(seed) {
                continue;
            }
            let mut poly = ConvexPolytope::axis_box(seed, 5.0);
            let before = poly.clone();
            let r = contract_for_peer(&mut poly, seed, peer, &fp, 0.0, seed);
            if r == Contraction::Unchanged {
                continue;
            }
            let h = *poly.halfplanes().last().unwrap();
            let n = (peer - seed).normalized().unwrap();
            let support_offset = n.dot(peer) - e * (n.x.abs() + n.y.abs());
            if h.normal.distance(n) < 1e-12 {
                assert!((h.offset - support_offset).abs() < 1e-12);
            }
            assert!(poly.contains(seed));
            for q in body.boundary_samples(64) {
                assert!(poly.max_violation(q) >= -1e-9);
            }
            // subset of the pre-contraction region
            for _ in 0..100 {
                let q = Point2::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
                if poly.contains(q) {
                    assert!(before.contains(q));
                }
            }
        }
        // axis direction: plane at peer.x − e
        let mut poly = ConvexPolytope::axis_box(Point2::ORIGIN, 5.0);
        contract_for_peer(&mut poly, Point2::ORIGIN, Point2::new(2.0, 0.0), &Footprint::Square { half_extent: 0.4 }, 0.0, Point2::ORIGIN);
        assert!((poly.halfplanes().last().unwrap().offset - 1.6).abs() < 1e-12);
    }

    #[test]
    fn swallowed_seed_is_reported() {
        let mut poly = ConvexPolytope::axis_box(Point2::ORIGIN, 5.0);
        let r = contract_for_peer(
            &mut poly,
            Point2::ORIGIN,
            Point2::new(0.1, 0.0),
            &Footprint::Circle { radius: 0.3 },
            0.0,
            Point2::new(-1.0, 0.0),
        );
        assert_eq!(r, Contraction::SeedInside);
        assert!(!poly.contains(Point2::ORIGIN));
        assert!(poly.contains(Point2::new(-0.3, 0.0)));
    }

    #[test]
    fn deflation_examples() {
        let mut poly = ConvexPolytope::axis_box(Point2::ORIGIN, 1.0);
        assert!(!deflate_for_ego(&mut poly, &Footprint::Circle { radius: 0.1 }));
        assert!(poly.halfplanes().iter().all(|h| (h.offset - 0.9).abs() < 1e-12));
        assert!(deflate_for_ego(&mut poly, &Footprint::Circle { radius: 1.0 }));
        assert!(poly.is_empty_set());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shapes: Vec<Shape> = (0..6)
            .map(|_| Shape::circle(Point2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)), 0.4).unwrap())
            .filter(|s| !s.contains(Point2::ORIGIN))
            .collect();
        let orig = seed_region(&shapes, Point2::ORIGIN, &cfg()).unwrap();
        let mut small = orig.clone();
        deflate_for_ego(&mut small, &Footprint::Square { half_extent: 0.2 });
        for _ in 0..1000 {
            let q = Point2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            if small.contains(q) {
                assert!(orig.contains(q));
                // the whole ego square fits in the original region
                for c in (Footprint::Square { half_extent: 0.2 }).shape_at(q).polygon().unwrap() {
                    assert!(orig.max_violation(*c) <= 1e-9);
                }
            }
        }
    }

    fn static_track(p: Point2) -> PeerTrack {
        PeerTrack::new(
            PeerState { stamp: 0.0, position: p, velocity: Point2::ORIGIN, acceleration: Point2::ORIGIN, size: vec![0.3] },
            PredictionConfig::default(),
        )
    }

    fn volume(seeds: &[Point2]) -> MovingVolume {
        MovingVolume {
            slices: seeds
                .iter()
                .enumerate()
                .map(|(k, &c)| VolumeSlice { step: k as i64 + 1, t: 0.1 * (k + 1) as f64, center: c, shapes: vec![] })
                .collect(),
        }
    }

    #[test]
    fn empty_world_gives_deflated_boxes() {
        let vol = volume(&[Point2::ORIGIN; 5]);
        let ego = Footprint::Circle { radius: 0.2 };
        let r = build_safe_regions(&vol, &[], &ego, Point2::ORIGIN, &cfg(), None);
        for s in &r.slices {
            let mut expected = ConvexPolytope::axis_box(Point2::ORIGIN, 5.0);
            deflate_for_ego(&mut expected, &ego);
            assert_eq!(s.polytope, expected);
            assert!(s.flags.is_empty());
        }
    }

    #[test]
    fn static_peer_gives_same_plane_every_slice() {
        let vol = volume(&[Point2::ORIGIN; 10]);
        let tr = static_track(Point2::new(2.0, 0.0));
        let ego = Footprint::Circle { radius: 0.2 };
        let mut c = tangent_cfg();
        c.peer_margin = 0.0;
        let r = build_safe_regions(&vol, &[tr], &ego, Point2::ORIGIN, &c, None);
        for s in &r.slices {
            let h = s.polytope.halfplanes().last().unwrap();
            assert!(h.normal.distance(Point2::new(1.0, 0.0)) < 1e-12);
            assert!((h.offset - (2.0 - 0.3 - 0.2)).abs() < 1e-12);
            assert_eq!(s.peer_planes, 1);
        }
    }

    #[test]
    fn peer_plane_turns_clockwise_and_keeps_clearance() {
        let vol = volume(&[Point2::ORIGIN; 3]);
        let tr = static_track(Point2::new(2.0, 0.0));
        let ego = Footprint::Circle { radius: 0.2 };
        let c = RegionConfig { peer_margin: 0.0, peer_gap_share: 0.0, ..cfg() };
        let r = build_safe_regions(&vol, &[tr], &ego, Point2::ORIGIN, &c, None);
        for s in &r.slices {
            let h = s.polytope.halfplanes().last().unwrap();
            assert!((h.normal.angle() + c.peer_turn).abs() < 1e-12);
            // Tangent to the inflated peer (0.3) after ego deflation (0.2).
            let gap = h.normal.dot(Point2::new(2.0, 0.0)) - h.offset;
            assert!((gap - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn turn_skipped_when_it_would_exclude_the_seed() {
        let mut poly = ConvexPolytope::axis_box(Point2::ORIGIN, 5.0);
        let fp = Footprint::Circle { radius: 0.3 };
        // Peer close ahead and to the left: a large clockwise turn would put
        // the seed outside the tangent plane, so the plane stays as it was.
        let peer = Point2::new(0.35, 0.3);
        let n = peer.normalized().unwrap();
        poly.push(Halfplane { normal: n, offset: n.dot(peer) - 0.3 });
        let before = *poly.halfplanes().last().unwrap();
        turn_peer_plane(&mut poly, Point2::ORIGIN, peer, &fp, 0.0, 1.4);
        assert_eq!(*poly.halfplanes().last().unwrap(), before);
        turn_peer_plane(&mut poly, Point2::ORIGIN, peer, &fp, 0.0, 0.2);
        let after = *poly.halfplanes().last().unwrap();
        assert!((after.normal.angle() - (n.angle() - 0.2)).abs() < 1e-12);
        assert!(after.contains(Point2::ORIGIN));
    }

    #[test]
    fn peers_beyond_reach_horizon_are_ignored() {
        let mut vol = volume(&[Point2::ORIGIN; 20]);
        for (k, s) in vol.slices.iter_mut().enumerate() {
            s.t = 0.1 * (k + 1) as f64;
        }
        let tr = static_track(Point2::new(2.0, 0.0));
        let c = cfg();
        let r = build_safe_regions(&vol, &[tr], &Footprint::Circle { radius: 0.2 }, Point2::ORIGIN, &c, None);
        for s in &r.slices {
            let expect = usize::from(s.t - 0.1 <= c.peer_horizon + 1e-9);
            assert_eq!(s.peer_planes, expect, "t {}", s.t);
        }
    }

    #[test]
    fn crossing_peer_rotates_the_plane() {
        let state = |t: f64| PeerState {
            stamp: t,
            position: Point2::new(2.0, -3.0 + t),
            velocity: Point2::new(0.0, 1.0),
            acceleration: Point2::ORIGIN,
            size: vec![0.3],
        };
        let mut tr = PeerTrack::new(state(0.0), PredictionConfig::default());
        for k in 1..10 {
            tr.push(state(0.1 * k as f64));
        }
        let seeds: Vec<Point2> = vec![Point2::ORIGIN; 40];
        let mut vol = volume(&seeds);
        for (k, s) in vol.slices.iter_mut().enumerate() {
            s.t = 0.9 + 0.1 * (k + 1) as f64;
        }
        let r = build_safe_regions(&vol, &[tr], &Footprint::Circle { radius: 0.2 }, Point2::ORIGIN, &tangent_cfg(), None);
        let angles: Vec<f64> = r.slices.iter().map(|s| s.polytope.halfplanes().last().unwrap().normal.angle()).collect();
        assert!(angles.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn blocked_seed_reuses_previous_region() {
        let blocker = Shape::circle(Point2::ORIGIN, 1.0).unwrap();
        let mut vol = volume(&[Point2::ORIGIN; 3]);
        for s in &mut vol.slices {
            s.shapes.push(blocker.clone());
        }
        let ego = Footprint::Circle { radius: 0.1 };
        let fresh = build_safe_regions(&vol, &[], &ego, Point2::ORIGIN, &cfg(), None);
        assert!(fresh.slices.iter().all(|s| s.flags == vec![SliceFlag::SeedBlocked] && !s.usable()));
        let prev = build_safe_regions(&volume(&[Point2::new(3.0, 0.0); 3]), &[], &ego, Point2::ORIGIN, &cfg(), None);
        let reused = build_safe_regions(&vol, &[], &ego, Point2::ORIGIN, &cfg(), Some(&prev));
        for (a, b) in reused.slices.iter().zip(&prev.slices) {
            assert_eq!(a.flags, vec![SliceFlag::Reused]);
            assert_eq!(a.polytope, b.polytope);
        }
    }
}
