//! Dense convex QP solver (Goldfarb-Idnani dual active-set method).
//!
//! Solves
//!
//! ```text
//! min  0.5 x'Hx + f'x
//! s.t. A_eq x  = b_eq
//!      A_in x <= b_in
//! ```
//!
//! The method starts from the unconstrained minimizer and adds violated
//! constraints one at a time, keeping dual feasibility throughout. `H` must
//! be symmetric positive semidefinite; a singular `H` is handled by a
//! proximal-point outer loop.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("problem is infeasible")]
    Infeasible,
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("cost matrix is not positive semidefinite")]
    NotConvex,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem with `n` variables.
    pub fn new(h: DMatrix<f64>, f: DVector<f64>) -> Self {
        let n = f.len();
        Self {
            h,
            f,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_in = a;
        self.b_in = b;
        self
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.f.dot(x)
    }

    fn check(&self) -> Result<(), QpError> {
        let n = self.dim();
        let bad = |m: String| Err(QpError::Dimension(m));
        if self.h.nrows() != n || self.h.ncols() != n {
            return bad(format!("H is {}x{}, expected {n}x{n}", self.h.nrows(), self.h.ncols()));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return bad("equality block".into());
        }
        if self.a_in.ncols() != n || self.a_in.nrows() != self.b_in.len() {
            return bad("inequality block".into());
        }
        let asym = (&self.h - self.h.transpose()).amax();
        if asym > 1e-9 * (1.0 + self.h.amax()) {
            return bad("H is not symmetric".into());
        }
        Ok(())
    }

    /// Largest violation of any constraint at `x`.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let eq = (&self.a_eq * x - &self.b_eq).amax();
        let ineq = (&self.a_in * x - &self.b_in).max().max(0.0);
        if self.b_in.is_empty() {
            eq
        } else {
            eq.max(ineq)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Multipliers of the equality rows (sign follows `H x + f + A_eq' y + A_in' z = 0`).
    pub eq_multipliers: DVector<f64>,
    /// Non-negative multipliers of the inequality rows.
    pub in_multipliers: DVector<f64>,
    pub iterations: usize,
}

impl QpSolution {
    /// Norm of the stationarity residual.
    pub fn kkt_residual(&self, qp: &QpProblem) -> f64 {
        let g = &qp.h * &self.x
            + &qp.f
            + qp.a_eq.transpose() * &self.eq_multipliers
            + qp.a_in.transpose() * &self.in_multipliers;
        g.amax()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    /// Feasibility tolerance on normalized constraint rows.
    pub tol: f64,
    pub max_iter: Option<usize>,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: None,
        }
    }
}

enum Factor {
    Diagonal(DVector<f64>),
    Dense(Cholesky<f64, Dyn>),
}

impl Factor {
    fn new(h: &DMatrix<f64>) -> Option<Self> {
        let n = h.nrows();
        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || h[(i, j)] == 0.0));
        if diagonal {
            let d = h.diagonal();
            let floor = 1e-13 * (1.0 + d.amax());
            if d.iter().all(|&x| x > floor) {
                return Some(Factor::Diagonal(d));
            }
            return None;
        }
        let chol = Cholesky::new(h.clone())?;
        let l = chol.l_dirty();
        let dmax = (0..n).map(|i| l[(i, i)]).fold(0.0, f64::max);
        let dmin = (0..n).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
        if n > 0 && dmin <= 1e-7 * dmax {
            return None;
        }
        Some(Factor::Dense(chol))
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Diagonal(d) => b.component_div(d),
            Factor::Dense(c) => c.solve(b),
        }
    }
}

/// Row of the internal `n'x >= b` representation.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Row {
    /// Equality row with orientation sign.
    Eq(usize, bool),
    In(usize),
}

struct Active {
    rows: Vec<Row>,
    normals: Vec<DVector<f64>>,
    /// H^-1 n for each active row.
    w: Vec<DVector<f64>>,
    mult: Vec<f64>,
}

impl Active {
    fn remove(&mut self, k: usize) {
        self.rows.remove(k);
        self.normals.remove(k);
        self.w.remove(k);
        self.mult.remove(k);
    }

    /// r = S^-1 W'n and z = H^-1 n - W r.
    fn directions(&self, n_p: &DVector<f64>, h_np: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let q = self.rows.len();
        if q == 0 {
            return Some((DVector::zeros(0), h_np.clone()));
        }
        let mut s = DMatrix::zeros(q, q);
        for i in 0..q {
            for j in i..q {
                let v = self.normals[i].dot(&self.w[j]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        let rhs = DVector::from_iterator(q, self.w.iter().map(|w| w.dot(n_p)));
        let r = match Cholesky::new(s.clone()) {
            Some(c) => c.solve(&rhs),
            None => s.lu().solve(&rhs)?,
        };
        let mut z = h_np.clone();
        for (wj, rj) in self.w.iter().zip(r.iter()) {
            z.axpy(-rj, wj, 1.0);
        }
        Some((r, z))
    }
}

fn row_of(qp: &QpProblem, row: Row) -> (DVector<f64>, f64) {
    match row {
        Row::Eq(i, positive) => {
            let n = qp.a_eq.row(i).transpose();
            let b = qp.b_eq[i];
            if positive {
                (n, b)
            } else {
                (-n, -b)
            }
        }
        Row::In(i) => (-qp.a_in.row(i).transpose(), -qp.b_in[i]),
    }
}

/// Solves the QP. Deterministic for fixed input.
pub fn solve_qp(qp: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    qp.check()?;
    match Factor::new(&qp.h) {
        Some(factor) => dual_active_set(qp, &factor, settings),
        None => proximal(qp, settings),
    }
}

/// Proximal-point loop for singular H: repeatedly solves with H + rho I.
fn proximal(qp: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    let n = qp.dim();
    let eig = qp.h.clone().symmetric_eigenvalues();
    let scale = 1.0 + eig.amax();
    if eig.iter().any(|&e| e < -1e-9 * scale) {
        return Err(QpError::NotConvex);
    }
    let rho = 1e-3 * scale;
    let h = &qp.h + DMatrix::identity(n, n) * rho;
    let factor = Factor::new(&h).ok_or(QpError::NotConvex)?;
    let mut x = DVector::zeros(n);
    let mut iterations = 0;
    let max_outer = 5000;
    for _ in 0..max_outer {
        let sub = QpProblem {
            h: h.clone(),
            f: &qp.f - &x * rho,
            ..qp.clone()
        };
        let sol = dual_active_set(&sub, &factor, settings)?;
        iterations += sol.iterations;
        let step = (&sol.x - &x).amax();
        x = sol.x;
        if step <= settings.tol * (1.0 + x.amax()) {
            return Ok(QpSolution {
                objective: qp.objective(&x),
                x,
                iterations,
                ..sol
            });
        }
    }
    Err(QpError::NoConvergence(iterations))
}

fn dual_active_set(qp: &QpProblem, factor: &Factor, settings: &QpSettings) -> Result<QpSolution, QpError> {
    let n = qp.dim();
    let n_eq = qp.b_eq.len();
    let n_in = qp.b_in.len();
    let tol = settings.tol;
    let max_iter = settings.max_iter.unwrap_or(10 * (n + n_eq + n_in) + 100);
    let eps = 1e-12;

    let row_norm_in: Vec<f64> = (0..n_in).map(|i| qp.a_in.row(i).norm().max(eps)).collect();
    let mut x = -factor.solve(&qp.f);
    let mut active = Active {
        rows: Vec::new(),
        normals: Vec::new(),
        w: Vec::new(),
        mult: Vec::new(),
    };
    let mut is_active = vec![false; n_in];
    let mut iterations = 0;

    // equality rows first; they never leave the active set
    for i in 0..n_eq {
        let norm = qp.a_eq.row(i).norm();
        let s0 = qp.a_eq.row(i).dot(&x.transpose()) - qp.b_eq[i];
        if norm <= eps {
            if s0.abs() > tol {
                return Err(QpError::Infeasible);
            }
            continue;
        }
        let row = Row::Eq(i, s0 <= 0.0);
        let (n_p, b_p) = row_of(qp, row);
        let mut u_p = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::NoConvergence(iterations));
            }
            let s_p = n_p.dot(&x) - b_p;
            let h_np = factor.solve(&n_p);
            let (r, z) = active.directions(&n_p, &h_np).ok_or(QpError::NoConvergence(iterations))?;
            let curv = z.dot(&n_p);
            let dependent = curv <= 1e-10 * n_p.dot(&h_np);
            if dependent {
                if s_p.abs() <= tol * norm {
                    break;
                }
                // inconsistent with the equalities already active, or blocked by
                // an active inequality that must be released first
                let (t1, k) = max_dual_step(&active, &r);
                if !t1.is_finite() {
                    return Err(QpError::Infeasible);
                }
                dual_step(&mut active, &r, t1);
                u_p += t1;
                release(&mut active, &mut is_active, k);
                continue;
            }
            let t2 = -s_p / curv;
            let (t1, k) = max_dual_step(&active, &r);
            let t = t2.min(t1);
            x.axpy(t, &z, 1.0);
            dual_step(&mut active, &r, t);
            u_p += t;
            if t2 <= t1 {
                active.rows.push(row);
                active.normals.push(n_p.clone());
                active.w.push(h_np);
                active.mult.push(u_p);
                break;
            }
            release(&mut active, &mut is_active, k);
        }
    }

    loop {
        // most violated inequality, normalized by row norm
        let mut worst: Option<(usize, f64)> = None;
        if n_in > 0 {
            let ax = &qp.a_in * &x;
            for i in 0..n_in {
                if is_active[i] {
                    continue;
                }
                let viol = (ax[i] - qp.b_in[i]) / row_norm_in[i];
                if viol > tol && worst.is_none_or(|(_, w)| viol > w) {
                    worst = Some((i, viol));
                }
            }
        }
        let Some((p, _)) = worst else { break };
        let row = Row::In(p);
        let (n_p, b_p) = row_of(qp, row);
        let h_np = factor.solve(&n_p);
        let mut u_p = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::NoConvergence(iterations));
            }
            let s_p = n_p.dot(&x) - b_p;
            let (r, z) = active.directions(&n_p, &h_np).ok_or(QpError::NoConvergence(iterations))?;
            let curv = z.dot(&n_p);
            let dependent = curv <= 1e-10 * n_p.dot(&h_np);
            let t2 = if dependent { f64::INFINITY } else { -s_p / curv };
            let (t1, k) = max_dual_step(&active, &r);
            if !t1.is_finite() && !t2.is_finite() {
                return Err(QpError::Infeasible);
            }
            if !t2.is_finite() {
                dual_step(&mut active, &r, t1);
                u_p += t1;
                release(&mut active, &mut is_active, k);
                continue;
            }
            let t = t2.min(t1);
            x.axpy(t, &z, 1.0);
            dual_step(&mut active, &r, t);
            u_p += t;
            if t2 <= t1 {
                active.rows.push(row);
                active.normals.push(n_p.clone());
                active.w.push(h_np);
                active.mult.push(u_p);
                is_active[p] = true;
                break;
            }
            release(&mut active, &mut is_active, k);
        }
    }

    let mut eq_multipliers = DVector::zeros(n_eq);
    let mut in_multipliers = DVector::zeros(n_in);
    for (row, &m) in active.rows.iter().zip(&active.mult) {
        match *row {
            Row::Eq(i, positive) => eq_multipliers[i] = if positive { -m } else { m },
            Row::In(i) => in_multipliers[i] = m.max(0.0),
        }
    }
    let viol = qp.max_violation(&x);
    let scale = 1.0 + qp.b_eq.amax().max(if n_in > 0 { qp.b_in.amax() } else { 0.0 });
    if viol > 1e3 * tol * scale {
        return Err(QpError::NoConvergence(iterations));
    }
    Ok(QpSolution {
        objective: qp.objective(&x),
        x,
        eq_multipliers,
        in_multipliers,
        iterations,
    })
}

/// Largest dual step keeping active inequality multipliers non-negative.
fn max_dual_step(active: &Active, r: &DVector<f64>) -> (f64, usize) {
    let mut best = (f64::INFINITY, usize::MAX);
    for (j, row) in active.rows.iter().enumerate() {
        if matches!(row, Row::In(_)) && r[j] > 0.0 {
            let t = active.mult[j] / r[j];
            if t < best.0 {
                best = (t, j);
            }
        }
    }
    best
}

fn dual_step(active: &mut Active, r: &DVector<f64>, t: f64) {
    for (m, rj) in active.mult.iter_mut().zip(r.iter()) {
        *m -= t * rj;
    }
}

fn release(active: &mut Active, is_active: &mut [bool], k: usize) {
    if let Row::In(i) = active.rows[k] {
        is_active[i] = false;
    }
    active.remove(k);
}
