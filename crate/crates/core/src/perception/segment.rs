use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::sensor::{scan_point_position, Scan};
use crate::spline::TrajectorySpline;

/// Anything that can report where the robot was at a given time.
pub trait PositionAt {
    fn position_at(&self, t: f64) -> Point2;
}

impl PositionAt for TrajectorySpline {
    fn position_at(&self, t: f64) -> Point2 {
        self.position_clamped(t)
    }
}

impl<P: PositionAt + ?Sized> PositionAt for &P {
    fn position_at(&self, t: f64) -> Point2 {
        (**self).position_at(t)
    }
}

/// A single return kept in sensor terms so it can be re-projected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Return {
    pub beam: usize,
    pub range: f64,
    pub angle: f64,
    /// Time the beam was fired.
    #[serde(default)]
    pub stamp: f64,
}

/// A run of consecutive returns believed to come from one obstacle.
///
/// Segmentation projects `points` from the world origin. [`Cluster::place`]
/// re-projects them from one robot position, [`Cluster::place_along`] from
/// the robot position at each beam's own time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub returns: Vec<Return>,
    pub points: Vec<Point2>,
    pub median_stamp: f64,
    pub origin: Point2,
}

impl Cluster {
    pub fn place(&mut self, origin: Point2) {
        self.origin = origin;
        self.points = self.returns.iter().map(|r| scan_point_position(Some(r.range), r.angle, origin).expect("finite return")).collect();
    }

    /// Projects every return from the robot position at its own beam time,
    /// and records the median-time position as the viewpoint.
    pub fn place_along(&mut self, path: &impl PositionAt) {
        self.origin = compensate_motion(self, path);
        self.points = self
            .returns
            .iter()
            .map(|r| scan_point_position(Some(r.range), r.angle, path.position_at(r.stamp)).expect("finite return"))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

/// Segmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    /// Consecutive returns whose projected points are farther apart than
    /// this start a new cluster even without a gap of misses.
    pub jump_threshold: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self { jump_threshold: 0.6 }
    }
}

/// Splits a scan into clusters of consecutive returns, dropping singletons.
/// Runs that cross index 0 of a full-circle scan are joined.
pub fn segment_scan(scan: &Scan) -> Vec<Cluster> {
    segment_scan_with(scan, &SegmentConfig::default())
}

pub fn segment_scan_with(scan: &Scan, cfg: &SegmentConfig) -> Vec<Cluster> {
    let n = scan.len();
    let point = |k: usize| scan_point_position(scan.ranges[k], scan.beam_angle(k), Point2::ORIGIN).ok();
    let linked = |a: usize, b: usize| match (point(a), point(b)) {
        (Some(p), Some(q)) => p.distance(q) <= cfg.jump_threshold,
        _ => false,
    };

    // Find a break to start from so wrap-around runs are seen whole.
    let start = if scan.full_circle && n > 0 {
        match (0..n).find(|&k| !linked((k + n - 1) % n, k)) {
            Some(k) => k,
            // Every beam linked to its neighbour: one closed ring.
            None => return vec![build_cluster(scan, (0..n).collect())],
        }
    } else {
        0
    };

    let mut out = Vec::new();
    let mut run: Vec<usize> = Vec::new();
    for step in 0..n {
        let k = (start + step) % n;
        if scan.ranges[k].is_none() {
            flush(scan, &mut run, &mut out);
            continue;
        }
        if let Some(&prev) = run.last() {
            if !linked(prev, k) {
                flush(scan, &mut run, &mut out);
            }
        }
        run.push(k);
    }
    flush(scan, &mut run, &mut out);
    out
}

fn flush(scan: &Scan, run: &mut Vec<usize>, out: &mut Vec<Cluster>) {
    if run.len() >= 2 {
        out.push(build_cluster(scan, std::mem::take(run)));
    } else {
        run.clear();
    }
}

fn build_cluster(scan: &Scan, beams: Vec<usize>) -> Cluster {
    let n = scan.len();
    // Beam times increase with index; a wrapped run continues into the
    // next sweep, so unwrap indices before taking the median.
    let mut unwrapped: Vec<f64> = Vec::with_capacity(beams.len());
    let mut offset = 0usize;
    for (i, &b) in beams.iter().enumerate() {
        if i > 0 && b < beams[i - 1] {
            offset += n;
        }
        unwrapped.push((b + offset) as f64);
    }
    let mid = unwrapped.len() / 2;
    let median = if unwrapped.len() % 2 == 1 { unwrapped[mid] } else { 0.5 * (unwrapped[mid - 1] + unwrapped[mid]) };
    let returns: Vec<Return> = beams
        .iter()
        .map(|&b| Return {
            beam: b,
            range: scan.ranges[b].expect("run holds finite returns"),
            angle: scan.beam_angle(b),
            stamp: scan.beam_stamp(b as f64),
        })
        .collect();
    let mut c = Cluster { returns, points: Vec::new(), median_stamp: scan.beam_stamp(median), origin: Point2::ORIGIN };
    c.place(Point2::ORIGIN);
    c
}

/// Robot position at the cluster's median beam time.
pub fn compensate_motion(cluster: &Cluster, previous: &impl PositionAt) -> Point2 {
    previous.position_at(cluster.median_stamp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan_of(ranges: Vec<Option<f64>>, full: bool) -> Scan {
        Scan {
            stamp: 1.0,
            angle_start: 0.0,
            angle_increment: std::f64::consts::TAU / 360.0,
            beam_interval: 0.2 / 360.0,
            max_range: 5.0,
            full_circle: full,
            ranges,
        }
    }

    fn beams(c: &Cluster) -> Vec<usize> {
        c.returns.iter().map(|r| r.beam).collect()
    }

    #[test]
    fn runs_become_clusters() {
        let s = scan_of(vec![None, Some(2.0), Some(2.1), Some(2.2), None, Some(3.0), Some(3.1), None], false);
        let cfg = SegmentConfig { jump_threshold: 10.0 };
        let cs = segment_scan_with(&s, &cfg);
        assert_eq!(cs.len(), 2);
        assert_eq!(beams(&cs[0]), vec![1, 2, 3]);
        assert_eq!(beams(&cs[1]), vec![5, 6]);
        assert!((cs[0].median_stamp - s.beam_stamp(2.0)).abs() < 1e-15);
    }

    #[test]
    fn all_misses_give_nothing() {
        assert!(segment_scan(&scan_of(vec![None; 360], true)).is_empty());
    }

    #[test]
    fn singletons_are_dropped() {
        let s = scan_of(vec![None, Some(2.0), None, Some(2.0), Some(2.0), None], false);
        let cs = segment_scan(&s);
        assert_eq!(cs.len(), 1);
        assert_eq!(beams(&cs[0]), vec![3, 4]);
    }

    #[test]
    fn wrap_around_run_is_joined() {
        let mut r = vec![None; 360];
        for k in (355..360).chain(0..4) {
            r[k] = Some(2.0);
        }
        for k in 100..110 {
            r[k] = Some(3.0);
        }
        let cs = segment_scan(&scan_of(r.clone(), true));
        // oracle: walk the ring from a known miss and collect circular runs
        let mut runs: Vec<Vec<usize>> = Vec::new();
        let mut cur = Vec::new();
        for step in 0..=360 {
            let k = (200 + step) % 360;
            if r[k].is_some() {
                cur.push(k);
            } else if !cur.is_empty() {
                runs.push(std::mem::take(&mut cur));
            }
        }
        let mut got: Vec<Vec<usize>> = cs.iter().map(beams).collect();
        got.sort();
        runs.sort();
        assert_eq!(got, runs);
        let wrapped = cs.iter().find(|c| c.len() == 9).unwrap();
        // median of the unwrapped indices 355..363 is 359
        assert!((wrapped.median_stamp - (1.0 + 359.0 * 0.2 / 360.0)).abs() < 1e-12);
    }

    #[test]
    fn partial_fov_does_not_wrap() {
        let mut r = vec![None; 10];
        r[0] = Some(1.0);
        r[1] = Some(1.0);
        r[9] = Some(1.0);
        r[8] = Some(1.0);
        assert_eq!(segment_scan(&scan_of(r, false)).len(), 2);
    }

    #[test]
    fn range_jump_splits_a_run() {
        let s = scan_of(vec![None, Some(2.0), Some(2.0), Some(4.0), Some(4.0), None, None, None], false);
        assert_eq!(segment_scan(&s).len(), 2);
    }

    struct Line;
    impl PositionAt for Line {
        fn position_at(&self, t: f64) -> Point2 {
            Point2::new(2.0 * t, 1.0)
        }
    }

    #[test]
    fn compensation_samples_the_previous_path() {
        let s = scan_of(vec![None, Some(2.0), Some(2.0), Some(2.0), None, None, None, None], false);
        let c = &segment_scan(&s)[0];
        let p = compensate_motion(c, &Line);
        assert!(p.distance(Point2::new(2.0 * c.median_stamp, 1.0)) < 1e-15);
        let still = TrajectorySpline::stationary(Point2::new(3.0, -1.0), 3, 0.0, 1.0, 4);
        assert_eq!(compensate_motion(c, &still), Point2::new(3.0, -1.0));
        let line = TrajectorySpline::constant_velocity(Point2::ORIGIN, Point2::new(1.0, 0.0), 3, 0.0, 1.0, 4);
        let mut halfway = c.clone();
        halfway.median_stamp = 2.0;
        assert!(compensate_motion(&halfway, &line).distance(Point2::new(2.0, 0.0)) < 1e-12);
        // before the domain clamps to the start
        halfway.median_stamp = -5.0;
        assert!(compensate_motion(&halfway, &line).distance(Point2::ORIGIN) < 1e-12);
    }

    #[test]
    fn placement_uses_each_beam_pose() {
        let s = scan_of(vec![None, Some(2.0), Some(2.5), Some(3.0), None, None, None, None], false);
        let mut c = segment_scan(&s)[0].clone();
        c.place_along(&Line);
        assert!(c.origin.distance(Line.position_at(c.median_stamp)) < 1e-15);
        for (p, r) in c.points.iter().zip(&c.returns) {
            let from = Line.position_at(r.stamp);
            assert!((p.distance(from) - r.range).abs() < 1e-12);
            assert!(((*p - from).angle() - r.angle).abs() < 1e-12);
        }
        // The first and last beams are fired from different places.
        let first = Line.position_at(c.returns[0].stamp);
        let last = Line.position_at(c.returns[2].stamp);
        assert!(first.distance(last) > 1e-4);
    }
}
