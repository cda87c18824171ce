//! Forecasting anonymous peers from their broadcast states.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::geometry::{Point2, Shape};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictionError {
    #[error("query time {t} precedes state stamp {stamp}")]
    BeforeStamp { t: f64, stamp: f64 },
    #[error("size list must hold 1 to 3 positive lengths")]
    BadSize,
    #[error("state carries non-finite values")]
    NonFinite,
}

/// A peer's self-reported state. Carries no identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerState {
    pub stamp: f64,
    pub position: Point2,
    pub velocity: Point2,
    pub acceleration: Point2,
    pub size: Vec<f64>,
}

impl PeerState {
    pub fn validate(&self) -> Result<(), PredictionError> {
        let finite = self.stamp.is_finite() && self.position.is_finite() && self.velocity.is_finite() && self.acceleration.is_finite();
        if !finite {
            return Err(PredictionError::NonFinite);
        }
        footprint_from_size(&self.size).map(|_| ())
    }
}

/// Rotation-invariant extent of a robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Footprint {
    Circle {
        radius: f64,
    },
    /// Axis-aligned square `center ± half_extent`.
    Square {
        half_extent: f64,
    },
}

impl Footprint {
    /// Placed at `center`.
    pub fn shape_at(&self, center: Point2) -> Shape {
        match *self {
            Footprint::Circle { radius } => Shape::Circle { center, radius },
            Footprint::Square { half_extent } => Shape::axis_square(center, half_extent).expect("positive extent"),
        }
    }

    /// Support function of the footprint centered at the origin.
    pub fn support(&self, dir: Point2) -> f64 {
        match *self {
            Footprint::Circle { radius } => radius * dir.norm(),
            Footprint::Square { half_extent } => half_extent * (dir.x.abs() + dir.y.abs()),
        }
    }

    /// Radius of the enclosing circle.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Footprint::Circle { radius } => radius,
            Footprint::Square { half_extent } => half_extent * std::f64::consts::SQRT_2,
        }
    }
}

/// One length: sphere; two: cylinder; both become a circle of the largest
/// length. Three lengths: a box, covered by a square of half-extent √2·max.
pub fn footprint_from_size(size: &[f64]) -> Result<Footprint, PredictionError> {
    if size.is_empty() || size.len() > 3 || size.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(PredictionError::BadSize);
    }
    let max = size.iter().cloned().fold(0.0, f64::max);
    Ok(if size.len() == 3 { Footprint::Square { half_extent: std::f64::consts::SQRT_2 * max } } else { Footprint::Circle { radius: max } })
}

/// Tunables for tracking and forecasting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionConfig {
    pub window: usize,
    pub jerk_penalty: f64,
    pub w_velocity: f64,
    pub w_acceleration: f64,
    pub gate: f64,
    /// Use `½·a·Δt²` in the bootstrap forecast instead of `a·Δt²`.
    pub physical_half_factor: bool,
    /// How far past the newest state the jerk penalty integrates.
    pub horizon: f64,
    /// A track without news for this long is reported stale.
    pub stale_after: f64,
    /// A track without news for this long is forgotten.
    pub forget_after: f64,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            window: 20,
            jerk_penalty: 1e-3,
            w_velocity: 0.5,
            w_acceleration: 0.1,
            gate: 1.0,
            physical_half_factor: false,
            horizon: 4.0,
            stale_after: 0.5,
            forget_after: 5.0,
        }
    }
}

fn accel_factor(half: bool) -> f64 {
    if half {
        0.5
    } else {
        1.0
    }
}

/// `P + v·Δt + a·Δt²` (or `½·a·Δt²` with the half factor).
pub fn predict_constant_accel(s: &PeerState, t: f64) -> Result<Point2, PredictionError> {
    predict_constant_accel_with(s, t, false)
}

pub fn predict_constant_accel_with(s: &PeerState, t: f64, half: bool) -> Result<Point2, PredictionError> {
    if t < s.stamp - 1e-12 {
        return Err(PredictionError::BeforeStamp { t, stamp: s.stamp });
    }
    let dt = t - s.stamp;
    Ok(s.position + s.velocity * dt + s.acceleration * (accel_factor(half) * dt * dt))
}

/// Per-axis quintic coefficients in time shifted by `t_shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quintic {
    pub t_shift: f64,
    pub x: [f64; 6],
    pub y: [f64; 6],
}

fn horner(c: &[f64; 6], s: f64, order: usize) -> f64 {
    let mut acc = 0.0;
    for j in (order..6).rev() {
        let mut f = 1.0;
        for k in 0..order {
            f *= (j - k) as f64;
        }
        acc = acc * s + f * c[j];
    }
    acc
}

impl Quintic {
    pub fn evaluate(&self, t: f64, order: usize) -> Point2 {
        let s = t - self.t_shift;
        Point2::new(horner(&self.x, s, order), horner(&self.y, s, order))
    }

    /// `∫_{t1}^{t2} ‖third derivative‖² dt`.
    pub fn jerk_energy(&self, t1: f64, t2: f64) -> f64 {
        let g = jerk_gram(t1 - self.t_shift, t2 - self.t_shift);
        let q = |c: &[f64; 6]| {
            let v = SVector::<f64, 6>::from_column_slice(c);
            (v.transpose() * g * v)[(0, 0)]
        };
        q(&self.x) + q(&self.y)
    }
}

/// `∫_a^b d³(Σβ_j s^j) d³(Σβ_k s^k) ds` as a 6×6 matrix over β.
fn jerk_gram(a: f64, b: f64) -> SMatrix<f64, 6, 6> {
    let c = [0.0, 0.0, 0.0, 6.0, 24.0, 60.0];
    let mut g = SMatrix::<f64, 6, 6>::zeros();
    for j in 3..6 {
        for k in 3..6 {
            let p = (j + k - 6) as i32;
            g[(j, k)] = c[j] * c[k] * (b.powi(p + 1) - a.powi(p + 1)) / (p + 1) as f64;
        }
    }
    g
}

/// Least squares over position, velocity and acceleration of every window
/// state plus `λ·∫_{t1}^{t2}‖jerk‖²`. Time is shifted to start at `t1` and
/// scaled internally for conditioning. `None` when the normal matrix is
/// numerically singular.
pub fn fit_quintic(window: &[PeerState], t1: f64, t2: f64, penalty: f64) -> Option<Quintic> {
    if window.is_empty() || !(t2 > t1) {
        return None;
    }
    let time_scale = (t2 - t1).max(1.0);
    let rows = 3 * window.len();
    let mut a = DMatrix::<f64>::zeros(rows, 6);
    let mut bx = DVector::<f64>::zeros(rows);
    let mut by = DVector::<f64>::zeros(rows);
    for (i, s) in window.iter().enumerate() {
        let u = (s.stamp - t1) / time_scale;
        for j in 0..6 {
            let jf = j as f64;
            a[(3 * i, j)] = u.powi(j as i32);
            if j >= 1 {
                a[(3 * i + 1, j)] = jf * u.powi(j as i32 - 1) / time_scale;
            }
            if j >= 2 {
                a[(3 * i + 2, j)] = jf * (jf - 1.0) * u.powi(j as i32 - 2) / (time_scale * time_scale);
            }
        }
        bx[3 * i] = s.position.x;
        by[3 * i] = s.position.y;
        bx[3 * i + 1] = s.velocity.x;
        by[3 * i + 1] = s.velocity.y;
        bx[3 * i + 2] = s.acceleration.x;
        by[3 * i + 2] = s.acceleration.y;
    }
    // jerk in real time is jerk in scaled time over σ³, and dt = σ·du
    let jg = jerk_gram(0.0, (t2 - t1) / time_scale) * (penalty / time_scale.powi(5));
    let mut normal = a.transpose() * &a;
    for r in 0..6 {
        for c in 0..6 {
            normal[(r, c)] += jg[(r, c)];
        }
    }
    let chol = normal.clone().cholesky()?;
    let diag: Vec<f64> = (0..6).map(|k| chol.l_dirty()[(k, k)]).collect();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if !(lo > 0.0) || (lo / hi).powi(2) < 1e-13 {
        return None;
    }
    let gx = chol.solve(&(a.transpose() * bx));
    let gy = chol.solve(&(a.transpose() * by));
    let unscale = |g: &DVector<f64>| {
        let mut out = [0.0; 6];
        for j in 0..6 {
            out[j] = g[j] / time_scale.powi(j as i32);
        }
        out
    };
    Some(Quintic { t_shift: t1, x: unscale(&gx), y: unscale(&gy) })
}

/// States believed to come from one peer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerTrack {
    window: VecDeque<PeerState>,
    coeffs: Option<Quintic>,
    last_fit_stamp: f64,
    cfg: PredictionConfig,
}

impl PeerTrack {
    pub fn new(first: PeerState, cfg: PredictionConfig) -> Self {
        let stamp = first.stamp;
        let mut window = VecDeque::with_capacity(cfg.window);
        window.push_back(first);
        Self { window, coeffs: None, last_fit_stamp: stamp, cfg }
    }

    pub fn window(&self) -> impl Iterator<Item = &PeerState> {
        self.window.iter()
    }

    pub fn latest(&self) -> &PeerState {
        self.window.back().expect("track never empty")
    }

    pub fn coeffs(&self) -> Option<&Quintic> {
        self.coeffs.as_ref()
    }

    pub fn last_fit_stamp(&self) -> f64 {
        self.last_fit_stamp
    }

    pub fn config(&self) -> &PredictionConfig {
        &self.cfg
    }

    pub fn footprint(&self) -> Footprint {
        footprint_from_size(&self.latest().size).unwrap_or(Footprint::Circle { radius: 0.0 })
    }

    pub fn is_stale(&self, now: f64) -> bool {
        now - self.latest().stamp > self.cfg.stale_after
    }

    /// Appends a state (ignored unless strictly newer) and refits.
    pub fn push(&mut self, s: PeerState) {
        if s.stamp <= self.latest().stamp {
            return;
        }
        self.window.push_back(s);
        while self.window.len() > self.cfg.window {
            self.window.pop_front();
        }
        self.refit();
    }

    pub fn refit(&mut self) {
        if self.window.len() < 2 {
            self.coeffs = None;
            return;
        }
        let states: Vec<PeerState> = self.window.iter().cloned().collect();
        let t1 = states[0].stamp;
        let t2 = self.latest().stamp + self.cfg.horizon;
        self.coeffs = fit_quintic(&states, t1, t2, self.cfg.jerk_penalty);
        self.last_fit_stamp = self.latest().stamp;
    }

    fn bootstrap(&self, t: f64, order: usize) -> Point2 {
        let s = self.latest();
        let dt = (t - s.stamp).max(0.0);
        let k = accel_factor(self.cfg.physical_half_factor);
        match order {
            0 => s.position + s.velocity * dt + s.acceleration * (k * dt * dt),
            1 => s.velocity + s.acceleration * (2.0 * k * dt),
            _ => s.acceleration * (2.0 * k),
        }
    }

    pub fn predict(&self, t: f64, order: usize) -> Point2 {
        match &self.coeffs {
            Some(q) => q.evaluate(t, order),
            None => self.bootstrap(t, order),
        }
    }

    pub fn predict_position(&self, t: f64) -> Point2 {
        self.predict(t, 0)
    }

    pub fn predict_velocity(&self, t: f64) -> Point2 {
        self.predict(t, 1)
    }

    pub fn predict_acceleration(&self, t: f64) -> Point2 {
        self.predict(t, 2)
    }

    /// How well `incoming` continues this track; lower is better.
    pub fn score(&self, incoming: &PeerState) -> f64 {
        let t = incoming.stamp;
        self.predict_position(t).distance(incoming.position)
            + self.cfg.w_velocity * self.predict_velocity(t).distance(incoming.velocity)
            + self.cfg.w_acceleration * self.predict_acceleration(t).distance(incoming.acceleration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Association {
    Track(usize),
    NewTrack,
}

/// Best-scoring track under the gate; ties go to the lowest index.
pub fn associate(tracks: &[PeerTrack], incoming: &PeerState, gate: f64) -> Association {
    let mut best: Option<(f64, usize)> = None;
    for (i, tr) in tracks.iter().enumerate() {
        let s = tr.score(incoming);
        if s < gate && best.is_none_or(|(bs, _)| s < bs) {
            best = Some((s, i));
        }
    }
    best.map_or(Association::NewTrack, |(_, i)| Association::Track(i))
}

/// Assigns a batch of messages at once, greedily by score, each track and
/// each message used at most once.
pub fn associate_batch(tracks: &[PeerTrack], incoming: &[PeerState], gate: f64) -> Vec<Association> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (m, msg) in incoming.iter().enumerate() {
        for (i, tr) in tracks.iter().enumerate() {
            let s = tr.score(msg);
            if s < gate {
                pairs.push((s, i, m));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![Association::NewTrack; incoming.len()];
    let mut track_used = vec![false; tracks.len()];
    let mut msg_used = vec![false; incoming.len()];
    for (_, i, m) in pairs {
        if !track_used[i] && !msg_used[m] {
            track_used[i] = true;
            msg_used[m] = true;
            out[m] = Association::Track(i);
        }
    }
    out
}

/// The set of tracks one agent maintains.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeerTracker {
    pub tracks: Vec<PeerTrack>,
    pub cfg: PredictionConfig,
}

impl PeerTracker {
    pub fn new(cfg: PredictionConfig) -> Self {
        Self { tracks: Vec::new(), cfg }
    }

    /// Folds in one batch of messages; returns how many were matched to
    /// existing tracks. Messages are taken in stamp order for determinism.
    pub fn ingest(&mut self, mut batch: Vec<PeerState>) -> usize {
        batch.retain(|s| s.validate().is_ok());
        batch.sort_by(|a, b| a.stamp.total_cmp(&b.stamp));
        let assoc = associate_batch(&self.tracks, &batch, self.cfg.gate);
        let mut matched = 0;
        for (msg, a) in batch.into_iter().zip(assoc) {
            match a {
                Association::Track(i) => {
                    self.tracks[i].push(msg);
                    matched += 1;
                }
                Association::NewTrack => self.tracks.push(PeerTrack::new(msg, self.cfg)),
            }
        }
        matched
    }

    pub fn forget_silent(&mut self, now: f64) {
        let limit = self.cfg.forget_after;
        self.tracks.retain(|t| now - t.latest().stamp <= limit);
    }

    pub fn stale_count(&self, now: f64) -> usize {
        self.tracks.iter().filter(|t| t.is_stale(now)).count()
    }
}
