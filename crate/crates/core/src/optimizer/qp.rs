//! Dense dual active-set solver for convex quadratic programs
//! (Goldfarb–Idnani), with warm starting from a previous active set.
//!
//! minimize ½ xᵀHx + Fᵀx  subject to  A_eq x = b_eq,  lower ≤ A_in x ≤ upper.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error("lower bound exceeds upper bound on row {0}")]
    CrossedBounds(usize),
    #[error("objective is not convex")]
    NotConvex,
}

impl QpProblem {
    pub fn new(h: DMatrix<f64>, f: DVector<f64>) -> Self {
        let n = f.len();
        Self {
            h,
            f,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            lower: DVector::zeros(0),
            upper: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        if self.h.nrows() != n || self.h.ncols() != n {
            return Err(QpError::Dimension("H must be n×n"));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return Err(QpError::Dimension("equality block"));
        }
        if self.a_in.ncols() != n || self.a_in.nrows() != self.lower.len() || self.lower.len() != self.upper.len() {
            return Err(QpError::Dimension("inequality block"));
        }
        for i in 0..self.lower.len() {
            if self.lower[i] > self.upper[i] {
                return Err(QpError::CrossedBounds(i));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.f.dot(x)
    }

    /// Largest equality residual and bound violation at `x`.
    pub fn violations(&self, x: &DVector<f64>) -> (f64, f64) {
        let eq = (&self.a_eq * x - &self.b_eq).amax();
        let ax = &self.a_in * x;
        let mut ineq = 0.0f64;
        for i in 0..ax.len() {
            ineq = ineq.max(self.lower[i] - ax[i]).max(ax[i] - self.upper[i]);
        }
        (if self.b_eq.is_empty() { 0.0 } else { eq }, ineq)
    }
}

/// Which side of an inequality row is held tight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Solved,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub status: QpStatus,
    pub x: DVector<f64>,
    pub objective: f64,
    /// Multipliers of the equality rows.
    pub lambda_eq: DVector<f64>,
    /// Net multiplier per inequality row: positive when the lower bound is
    /// active, negative for the upper bound.
    pub lambda_in: DVector<f64>,
    pub active: Vec<(usize, Side)>,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub solve_time_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QpSettings {
    pub max_iter: usize,
    /// A row counts as violated when its scaled residual exceeds this.
    pub feas_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { max_iter: 1000, feas_tol: 1e-9 }
    }
}

/// One-sided constraint n·x ≥ b.
#[derive(Clone)]
struct Row {
    n: DVector<f64>,
    b: f64,
    norm: f64,
    origin: Origin,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Origin {
    Eq(usize),
    In(usize, Side),
}

struct Factor {
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    q: usize,
    r_norm: f64,
}

impl Factor {
    fn d(&self, np: &DVector<f64>) -> DVector<f64> {
        self.j.tr_mul(np)
    }

    fn z(&self, d: &DVector<f64>) -> DVector<f64> {
        let n = d.len();
        let mut z = DVector::zeros(n);
        for k in self.q..n {
            z.axpy(d[k], &self.j.column(k), 1.0);
        }
        z
    }

    fn r_solve(&self, d: &DVector<f64>) -> DVector<f64> {
        let q = self.q;
        let mut r = DVector::zeros(q);
        for i in (0..q).rev() {
            let mut s = d[i];
            for k in i + 1..q {
                s -= self.r[(i, k)] * r[k];
            }
            r[i] = s / self.r[(i, i)];
        }
        r
    }

    /// Appends a column; `false` if it is linearly dependent on the others.
    fn add(&mut self, mut d: DVector<f64>) -> bool {
        let n = d.len();
        let q = self.q;
        for j in ((q + 1)..n).rev() {
            let (mut cc, mut ss) = (d[j - 1], d[j]);
            let h = cc.hypot(ss);
            if h == 0.0 {
                continue;
            }
            d[j] = 0.0;
            ss /= h;
            cc /= h;
            if cc < 0.0 {
                cc = -cc;
                ss = -ss;
                d[j - 1] = -h;
            } else {
                d[j - 1] = h;
            }
            let xny = ss / (1.0 + cc);
            for k in 0..n {
                let t1 = self.j[(k, j - 1)];
                let t2 = self.j[(k, j)];
                self.j[(k, j - 1)] = t1 * cc + t2 * ss;
                self.j[(k, j)] = xny * (t1 + self.j[(k, j - 1)]) - t2;
            }
        }
        if d[q].abs() <= f64::EPSILON * self.r_norm.max(1.0) * 100.0 {
            return false;
        }
        for i in 0..=q {
            self.r[(i, q)] = d[i];
        }
        self.q += 1;
        self.r_norm = self.r_norm.max(d[q].abs());
        true
    }

    /// Removes active column `pos`.
    fn remove(&mut self, pos: usize) {
        let n = self.j.nrows();
        let q = self.q;
        for i in pos..q - 1 {
            for k in 0..n {
                self.r[(k, i)] = self.r[(k, i + 1)];
            }
        }
        for k in 0..n {
            self.r[(k, q - 1)] = 0.0;
        }
        self.q -= 1;
        let q = self.q;
        for j in pos..q {
            let (mut cc, mut ss) = (self.r[(j, j)], self.r[(j + 1, j)]);
            let h = cc.hypot(ss);
            if h == 0.0 {
                continue;
            }
            cc /= h;
            ss /= h;
            self.r[(j + 1, j)] = 0.0;
            if cc < 0.0 {
                self.r[(j, j)] = -h;
                cc = -cc;
                ss = -ss;
            } else {
                self.r[(j, j)] = h;
            }
            let xny = ss / (1.0 + cc);
            for k in j + 1..q {
                let t1 = self.r[(j, k)];
                let t2 = self.r[(j + 1, k)];
                self.r[(j, k)] = t1 * cc + t2 * ss;
                self.r[(j + 1, k)] = xny * (t1 + self.r[(j, k)]) - t2;
            }
            for k in 0..n {
                let t1 = self.j[(k, j)];
                let t2 = self.j[(k, j + 1)];
                self.j[(k, j)] = t1 * cc + t2 * ss;
                self.j[(k, j + 1)] = xny * (self.j[(k, j)] + t1) - t2;
            }
        }
    }
}

/// Positive definite surrogate of H that agrees with H on the equality
/// manifold, with the matching linear term.
fn regularize(p: &QpProblem) -> Result<(DMatrix<f64>, DVector<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>), QpError> {
    let n = p.dim();
    let sym = (&p.h + p.h.transpose()) * 0.5;
    let scale = (0..n).map(|i| sym[(i, i)].abs()).fold(0.0, f64::max).max(1e-12);
    let good = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
        let l = c.l_dirty();
        let (lo, hi) = (0..n).fold((f64::INFINITY, 0.0f64), |(lo, hi), k| (lo.min(l[(k, k)]), hi.max(l[(k, k)])));
        lo > 0.0 && (lo / hi).powi(2) > 1e-13
    };
    if let Some(c) = sym.clone().cholesky().filter(good) {
        return Ok((sym, p.f.clone(), c));
    }
    let mut h = sym.clone();
    let mut f = p.f.clone();
    if p.a_eq.nrows() > 0 {
        let augment = scale;
        h += p.a_eq.tr_mul(&p.a_eq) * augment;
        f -= p.a_eq.tr_mul(&p.b_eq) * augment;
        if let Some(c) = h.clone().cholesky().filter(good) {
            return Ok((h, f, c));
        }
    }
    for k in 0..8 {
        let eps = scale * 1e-10 * 10f64.powi(k);
        let hk = &h + DMatrix::identity(n, n) * eps;
        if let Some(c) = hk.clone().cholesky().filter(good) {
            return Ok((hk, f, c));
        }
    }
    Err(QpError::NotConvex)
}

fn build_rows(p: &QpProblem) -> (Vec<Row>, Vec<Row>) {
    let mut eq = Vec::new();
    for i in 0..p.a_eq.nrows() {
        let n: DVector<f64> = p.a_eq.row(i).transpose();
        let norm = n.norm();
        eq.push(Row { n, b: p.b_eq[i], norm, origin: Origin::Eq(i) });
    }
    let mut ineq = Vec::new();
    for i in 0..p.a_in.nrows() {
        let a: DVector<f64> = p.a_in.row(i).transpose();
        let norm = a.norm();
        if norm == 0.0 {
            continue;
        }
        if p.lower[i].is_finite() {
            ineq.push(Row { n: a.clone(), b: p.lower[i], norm, origin: Origin::In(i, Side::Lower) });
        }
        if p.upper[i].is_finite() {
            ineq.push(Row { n: -a, b: -p.upper[i], norm, origin: Origin::In(i, Side::Upper) });
        }
    }
    (eq, ineq)
}

/// Solves `p`. With `warm_start`, the listed rows seed the active set.
pub fn solve_qp(p: &QpProblem, warm_start: Option<&[(usize, Side)]>) -> Result<QpSolution, QpError> {
    solve_qp_with(p, warm_start, &QpSettings::default())
}

pub fn solve_qp_with(p: &QpProblem, warm_start: Option<&[(usize, Side)]>, settings: &QpSettings) -> Result<QpSolution, QpError> {
    let clock = Instant::now();
    p.validate()?;
    let n = p.dim();
    let (h, f, chol) = regularize(p)?;
    let (eq_rows, in_rows) = build_rows(p);

    // J = L⁻ᵀ
    let l = chol.l();
    let linv = l.solve_lower_triangular(&DMatrix::identity(n, n)).ok_or(QpError::NotConvex)?;
    let mut fac = Factor { j: linv.transpose(), r: DMatrix::zeros(n, n), q: 0, r_norm: 1.0 };

    let mut x = -chol.solve(&f);
    // active[k] indexes into eq_rows (for k < n_eq_active) or in_rows
    let mut active: Vec<Origin> = Vec::new();
    let mut active_idx: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut infeasible = false;

    for (i, row) in eq_rows.iter().enumerate() {
        let d = fac.d(&row.n);
        let z = fac.z(&d);
        let r = fac.r_solve(&d);
        let zn = z.dot(&row.n);
        let resid = row.n.dot(&x) - row.b;
        if zn.abs() <= 1e-14 * row.norm * row.norm {
            // dependent on earlier equalities
            if resid.abs() > 1e-8 * row.norm.max(1.0) {
                infeasible = true;
            }
            continue;
        }
        let t = -resid / zn;
        x.axpy(t, &z, 1.0);
        for k in 0..u.len() {
            u[k] -= t * r[k];
        }
        if fac.add(d) {
            u.push(t);
            active.push(row.origin);
            active_idx.push(i);
        }
    }
    let n_eq_active = active.len();

    let mut iterations = 0usize;
    if let (Some(ws), false) = (warm_start, infeasible) {
        if let Some((xw, uw, rows)) = warm_point(&h, &f, &eq_rows, &in_rows, &active_idx, ws) {
            let mut trial = Factor { j: linv.transpose(), r: DMatrix::zeros(n, n), q: 0, r_norm: 1.0 };
            let mut ok = true;
            for &i in &active_idx {
                ok &= trial.add(trial.d(&eq_rows[i].n));
            }
            for &i in &rows {
                ok &= trial.add(trial.d(&in_rows[i].n));
            }
            if ok {
                fac = trial;
                x = xw;
                u = uw;
                for &i in &rows {
                    active.push(in_rows[i].origin);
                    active_idx.push(i);
                }
            }
        }
    }

    let mut status = if infeasible { QpStatus::Infeasible } else { QpStatus::Solved };
    let is_active = |active: &[Origin], o: Origin| active.contains(&o);

    'outer: while status == QpStatus::Solved {
        iterations += 1;
        if iterations > settings.max_iter {
            status = QpStatus::IterationLimit;
            break;
        }
        // most violated inactive row, scaled by its norm
        let mut worst: Option<(f64, usize)> = None;
        for (i, row) in in_rows.iter().enumerate() {
            let s = (row.n.dot(&x) - row.b) / row.norm;
            if s < -settings.feas_tol && worst.is_none_or(|(ws, _)| s < ws) && !is_active(&active, row.origin) {
                worst = Some((s, i));
            }
        }
        let Some((_, pi)) = worst else { break };
        let np = in_rows[pi].n.clone();
        let mut u_new = 0.0;
        loop {
            let d = fac.d(&np);
            let z = fac.z(&d);
            let r = fac.r_solve(&d);
            // partial step: the first active inequality whose multiplier hits zero
            let mut t1 = f64::INFINITY;
            let mut drop: Option<usize> = None;
            for k in n_eq_active..fac.q {
                if r[k] > 1e-14 {
                    let ratio = u[k] / r[k];
                    if ratio < t1 {
                        t1 = ratio;
                        drop = Some(k);
                    }
                }
            }
            let zn = z.dot(&np);
            let s = np.dot(&x) - in_rows[pi].b;
            let t2 = if z.norm() > 1e-12 * np.norm() && zn > 0.0 { -s / zn } else { f64::INFINITY };
            let t = t1.min(t2);
            if !t.is_finite() {
                status = QpStatus::Infeasible;
                break 'outer;
            }
            if t2.is_infinite() {
                for k in 0..fac.q {
                    u[k] -= t * r[k];
                }
                u_new += t;
                let k = drop.unwrap();
                fac.remove(k);
                u.remove(k);
                active.remove(k);
                active_idx.remove(k);
                iterations += 1;
                if iterations > settings.max_iter {
                    status = QpStatus::IterationLimit;
                    break 'outer;
                }
                continue;
            }
            x.axpy(t, &z, 1.0);
            for k in 0..fac.q {
                u[k] -= t * r[k];
            }
            u_new += t;
            if t == t2 {
                if fac.add(d) {
                    u.push(u_new);
                    active.push(in_rows[pi].origin);
                    active_idx.push(pi);
                } else {
                    status = QpStatus::Infeasible;
                    break 'outer;
                }
                continue 'outer;
            }
            let k = drop.unwrap();
            fac.remove(k);
            u.remove(k);
            active.remove(k);
            active_idx.remove(k);
            iterations += 1;
            if iterations > settings.max_iter {
                status = QpStatus::IterationLimit;
                break 'outer;
            }
        }
    }

    let mut lambda_eq = DVector::zeros(p.a_eq.nrows());
    let mut lambda_in = DVector::zeros(p.a_in.nrows());
    let mut active_out = Vec::new();
    for (k, o) in active.iter().enumerate() {
        match *o {
            Origin::Eq(i) => lambda_eq[i] = u[k],
            Origin::In(i, Side::Lower) => {
                lambda_in[i] += u[k];
                active_out.push((i, Side::Lower));
            }
            Origin::In(i, Side::Upper) => {
                lambda_in[i] -= u[k];
                active_out.push((i, Side::Upper));
            }
        }
    }
    let grad = &p.h * &x + &p.f - p.a_eq.tr_mul(&lambda_eq) - p.a_in.tr_mul(&lambda_in);
    let kkt_residual = if n == 0 { 0.0 } else { grad.amax() };
    let objective = p.objective(&x);
    Ok(QpSolution {
        status,
        x,
        objective,
        lambda_eq,
        lambda_in,
        active: active_out,
        iterations,
        kkt_residual,
        solve_time_us: clock.elapsed().as_micros() as u64,
    })
}

/// Minimizer over the equalities plus the warm rows held tight, dropping
/// rows with negative multipliers until all are non-negative. Returns the
/// point, the multipliers (equalities first) and the surviving rows.
fn warm_point(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    eq_rows: &[Row],
    in_rows: &[Row],
    eq_active: &[usize],
    ws: &[(usize, Side)],
) -> Option<(DVector<f64>, Vec<f64>, Vec<usize>)> {
    let mut rows: Vec<usize> = Vec::new();
    for &(i, side) in ws {
        if let Some(k) = in_rows.iter().position(|r| r.origin == Origin::In(i, side)) {
            if !rows.contains(&k) {
                rows.push(k);
            }
        }
    }
    let n = f.len();
    loop {
        let cons: Vec<&Row> = eq_active.iter().map(|&i| &eq_rows[i]).chain(rows.iter().map(|&i| &in_rows[i])).collect();
        let m = cons.len();
        let mut kkt = DMatrix::zeros(n + m, n + m);
        let mut rhs = DVector::zeros(n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        for (k, c) in cons.iter().enumerate() {
            for j in 0..n {
                kkt[(j, n + k)] = -c.n[j];
                kkt[(n + k, j)] = c.n[j];
            }
            rhs[n + k] = c.b;
        }
        for j in 0..n {
            rhs[j] = -f[j];
        }
        let sol = kkt.lu().solve(&rhs)?;
        if !sol.iter().all(|v| v.is_finite()) {
            return None;
        }
        let lam: Vec<f64> = (0..m).map(|k| sol[n + k]).collect();
        let e = eq_active.len();
        let worst = (e..m).min_by(|&a, &b| lam[a].total_cmp(&lam[b]));
        match worst {
            Some(k) if lam[k] < 0.0 => {
                rows.remove(k - e);
            }
            _ => return Some((sol.rows(0, n).into_owned(), lam, rows)),
        }
    }
}
