//! Optimal control problems of the maneuver, transcribed to dense QPs.
//!
//! Longitudinal problems use a forward-Euler double integrator with the
//! controls as the only decision variables:
//!
//! ```text
//! v_k = v_0 + dt * sum_{j<k} u_j
//! x_k = x_0 + k dt v_0 + dt^2 * sum_{j<k} (k-1-j) u_j
//! ```
//!
//! so speed bounds, headway rows and terminal conditions are all linear in
//! `u`. Integral costs use the rectangle rule. The plant in
//! [`crate::scenario::step_dynamics`] reduces to the same recursion on a
//! straight lane, so a plan executed on a matching grid is reproduced
//! exactly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qp::{solve_qp, QpError, QpProblem, QpSettings};
use crate::scenario::{SafetyParams, VehicleParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcpError {
    #[error("optimal control problem is infeasible")]
    Infeasible,
    #[error("solver failure: {0}")]
    Solver(QpError),
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("unsupported constraint pattern: {0}")]
    Unsupported(String),
}

impl From<QpError> for OcpError {
    fn from(e: QpError) -> Self {
        match e {
            QpError::Infeasible => OcpError::Infeasible,
            other => OcpError::Solver(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    /// Weight on maneuver duration.
    pub alpha_t: f64,
    /// Weight on `u^2 / 2`.
    pub alpha_u: f64,
    /// Weight on terminal speed disruption.
    pub alpha_v: f64,
    /// Weight on `phi^2 / 2` in the lateral problem.
    pub alpha_phi: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            alpha_t: 0.6,
            alpha_u: 0.4,
            alpha_v: 0.05,
            alpha_phi: 1.0,
        }
    }
}

/// How the speed-disruption term of the behavior objective is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisruptionMode {
    #[default]
    Terminal,
    Running,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TerminalSpeed {
    /// Penalized with `alpha_v (v_N - target)^2`.
    Soft { target: f64 },
    /// `|v_N - target| <= tolerance`.
    Band { target: f64, tolerance: f64 },
    Fixed { target: f64 },
}

/// A discretized longitudinal trajectory. `u[k]` acts on `[t[k], t[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub cost: f64,
}

impl Trajectory {
    /// Integrates `u` with the Euler recursion.
    pub fn rollout(t_start: f64, dt: f64, x0: f64, v0: f64, u: Vec<f64>) -> Self {
        let n = u.len();
        let mut t = Vec::with_capacity(n + 1);
        let mut x = Vec::with_capacity(n + 1);
        let mut v = Vec::with_capacity(n + 1);
        t.push(t_start);
        x.push(x0);
        v.push(v0);
        for (k, &uk) in u.iter().enumerate() {
            t.push(t_start + (k + 1) as f64 * dt);
            x.push(x[k] + v[k] * dt);
            v.push(v[k] + uk * dt);
        }
        Self { t, u, x, v, cost: 0.0 }
    }

    pub fn coasting(t_start: f64, dt: f64, n: usize, x0: f64, v0: f64) -> Self {
        Self::rollout(t_start, dt, x0, v0, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn dt(&self) -> f64 {
        if self.u.is_empty() {
            0.0
        } else {
            (self.t[self.u.len()] - self.t[0]) / self.u.len() as f64
        }
    }

    pub fn t_start(&self) -> f64 {
        self.t[0]
    }

    pub fn t_end(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    /// Interval index containing `t` and the offset into it.
    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.u.len();
        if n == 0 {
            return (0, t - self.t[0]);
        }
        let dt = self.dt();
        let k = ((t - self.t[0]) / dt + 1e-7).floor();
        let k = if k < 0.0 { 0 } else { (k as usize).min(n) };
        let s = t - self.t[k];
        // snap onto the node to avoid rounding drift
        if s.abs() <= 1e-9 * dt.max(1.0) {
            (k, 0.0)
        } else {
            (k, s)
        }
    }

    /// Position and speed at `t`, consistent with the Euler recursion;
    /// extrapolated at constant speed outside the horizon.
    pub fn state_at(&self, t: f64) -> (f64, f64) {
        let (k, s) = self.locate(t);
        let u = if s > 0.0 { self.control_at(t) } else { 0.0 };
        (self.x[k] + self.v[k] * s, self.v[k] + u * s)
    }

    /// Control applied at `t`; zero past the horizon.
    pub fn control_at(&self, t: f64) -> f64 {
        let (k, _) = self.locate(t);
        self.u.get(k).copied().unwrap_or(0.0)
    }
}

/// Σ u² dt.
pub fn energy_of(traj: &Trajectory) -> f64 {
    let dt = traj.dt();
    traj.u.iter().map(|u| u * u * dt).sum()
}

/// Another vehicle's motion, used on the right-hand side of gap rows.
#[derive(Debug, Clone, PartialEq)]
pub enum GapPartner {
    Planned(Trajectory),
    Cruising { x: f64, v: f64, t: f64 },
}

impl GapPartner {
    pub fn state_at(&self, t: f64) -> (f64, f64) {
        match self {
            GapPartner::Planned(tr) => tr.state_at(t),
            GapPartner::Cruising { x, v, t: t0 } => (x + v * (t - t0), *v),
        }
    }
}

/// Which side of the partner the optimized vehicle is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapSide {
    /// Self follows the partner: `x_p - x >= tau v + delta`.
    Behind,
    /// Self leads the partner: `x - x_p >= tau v_p + delta`.
    Ahead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapConstraint {
    pub partner: GapPartner,
    pub side: GapSide,
    pub safety: SafetyParams,
}

impl GapConstraint {
    pub fn behind(partner: GapPartner, safety: SafetyParams) -> Self {
        Self {
            partner,
            side: GapSide::Behind,
            safety,
        }
    }

    pub fn ahead(partner: GapPartner, safety: SafetyParams) -> Self {
        Self {
            partner,
            side: GapSide::Ahead,
            safety,
        }
    }

    /// Signed margin (positive when satisfied) for own state at `t`.
    pub fn margin(&self, t: f64, x: f64, v: f64) -> f64 {
        let (xp, vp) = self.partner.state_at(t);
        let s = &self.safety;
        match self.side {
            GapSide::Behind => xp - x - (s.reaction_time * v + s.standstill_gap),
            GapSide::Ahead => x - xp - (s.reaction_time * vp + s.standstill_gap),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSpec {
    pub x0: f64,
    pub v0: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub n_grid: usize,
    pub weights: CostWeights,
    pub bounds: VehicleParams,
    pub terminal_speed: Option<TerminalSpeed>,
    pub terminal_position: Option<f64>,
    /// Enforced at every node after the first.
    pub headway: Vec<GapConstraint>,
    /// Enforced at the final node only.
    pub terminal_gaps: Vec<GapConstraint>,
    pub disruption: DisruptionMode,
}

impl OcpSpec {
    pub fn new(x0: f64, v0: f64, t_start: f64, t_end: f64, n_grid: usize, bounds: VehicleParams) -> Self {
        Self {
            x0,
            v0,
            t_start,
            t_end,
            n_grid,
            weights: CostWeights::default(),
            bounds,
            terminal_speed: None,
            terminal_position: None,
            headway: Vec::new(),
            terminal_gaps: Vec::new(),
            disruption: DisruptionMode::Terminal,
        }
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_grid as f64
    }

    pub fn validate(&self) -> Result<(), OcpError> {
        let bad = |m: &str| Err(OcpError::Invalid(m.to_string()));
        if !(self.t_end > self.t_start) {
            return bad("t_end must exceed t_start");
        }
        if self.n_grid < 2 {
            return bad("n_grid must be at least 2");
        }
        let w = &self.weights;
        if [w.alpha_t, w.alpha_u, w.alpha_v, w.alpha_phi].iter().any(|&a| a < 0.0 || !a.is_finite()) {
            return bad("weights must be non-negative");
        }
        if !(self.x0.is_finite() && self.v0.is_finite()) {
            return bad("initial state must be finite");
        }
        Ok(())
    }

    pub fn with_horizon(&self, t_end: f64, n_grid: usize) -> Self {
        Self {
            t_end,
            n_grid,
            ..self.clone()
        }
    }
}

/// Σ (a_j u_j² + b_j u_j) dt + w_T (v_N - target)² + w_R Σ_k (v_k - target)² dt.
struct CostTerms {
    quad: Vec<f64>,
    lin: Vec<f64>,
    terminal: Option<(f64, f64)>,
    running: Option<(f64, f64)>,
}

fn speed_coeffs(k: usize, dt: f64, row: &mut [f64]) {
    for c in row.iter_mut().take(k) {
        *c = dt;
    }
}

fn position_coeffs(k: usize, dt: f64, row: &mut [f64]) {
    for (j, c) in row.iter_mut().enumerate().take(k) {
        *c = dt * dt * (k - 1 - j) as f64;
    }
}

fn build(spec: &OcpSpec, cost: &CostTerms) -> QpProblem {
    let n = spec.n_grid;
    let dt = spec.dt();
    let (x0, v0) = (spec.x0, spec.v0);

    let mut h = DMatrix::zeros(n, n);
    let mut f = DVector::zeros(n);
    for j in 0..n {
        h[(j, j)] += 2.0 * cost.quad[j] * dt;
        f[j] += cost.lin[j] * dt;
    }
    if let Some((w, target)) = cost.terminal {
        if w > 0.0 {
            h.add_scalar_mut(2.0 * w * dt * dt);
            f.add_scalar_mut(2.0 * w * dt * (v0 - target));
        }
    }
    if let Some((w, target)) = cost.running {
        if w > 0.0 {
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] += 2.0 * w * dt.powi(3) * (n - i.max(j)) as f64;
                }
                f[i] += 2.0 * w * dt * dt * (v0 - target) * (n - i) as f64;
            }
        }
    }

    let mut ineq: Vec<(Vec<f64>, f64)> = Vec::with_capacity(5 * n + 2);
    let mut eq: Vec<(Vec<f64>, f64)> = Vec::new();
    let p = &spec.bounds;
    for j in 0..n {
        let mut row = vec![0.0; n];
        row[j] = 1.0;
        ineq.push((row.clone(), p.u_max));
        row[j] = -1.0;
        ineq.push((row, -p.u_min));
    }
    for k in 1..=n {
        let mut row = vec![0.0; n];
        speed_coeffs(k, dt, &mut row);
        ineq.push((row.clone(), p.v_max - v0));
        ineq.push((row.iter().map(|c| -c).collect(), v0 - p.v_min));
    }
    let gap_row = |g: &GapConstraint, k: usize, out: &mut Vec<(Vec<f64>, f64)>| {
        let t = spec.t_start + k as f64 * dt;
        let (xp, vp) = g.partner.state_at(t);
        let s = &g.safety;
        let x_free = x0 + k as f64 * dt * v0;
        let mut row = vec![0.0; n];
        position_coeffs(k, dt, &mut row);
        match g.side {
            GapSide::Behind => {
                let mut sp = vec![0.0; n];
                speed_coeffs(k, dt, &mut sp);
                for (r, c) in row.iter_mut().zip(&sp) {
                    *r += s.reaction_time * c;
                }
                out.push((row, xp - s.standstill_gap - x_free - s.reaction_time * v0));
            }
            GapSide::Ahead => {
                let rhs = -(xp + s.reaction_time * vp + s.standstill_gap) + x_free;
                out.push((row.iter().map(|c| -c).collect(), rhs));
            }
        }
    };
    for g in &spec.headway {
        for k in 1..=n {
            gap_row(g, k, &mut ineq);
        }
        if g.side == GapSide::Behind {
            recovery_rows(spec, g, &mut ineq);
        }
    }
    for g in &spec.terminal_gaps {
        gap_row(g, n, &mut ineq);
    }
    let mut terminal_speed_row = vec![0.0; n];
    speed_coeffs(n, dt, &mut terminal_speed_row);
    match spec.terminal_speed {
        Some(TerminalSpeed::Band { target, tolerance }) => {
            ineq.push((terminal_speed_row.clone(), target + tolerance - v0));
            ineq.push((terminal_speed_row.iter().map(|c| -c).collect(), v0 - (target - tolerance)));
        }
        Some(TerminalSpeed::Fixed { target }) => eq.push((terminal_speed_row, target - v0)),
        _ => {}
    }
    if let Some(xf) = spec.terminal_position {
        let mut row = vec![0.0; n];
        position_coeffs(n, dt, &mut row);
        eq.push((row, xf - x0 - n as f64 * dt * v0));
    }

    let to_mat = |rows: &[(Vec<f64>, f64)]| {
        (
            DMatrix::from_fn(rows.len(), n, |i, j| rows[i].0[j]),
            DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1)),
        )
    };
    let (a_in, b_in) = to_mat(&ineq);
    let (a_eq, b_eq) = to_mat(&eq);
    QpProblem::new(h, f)
        .with_equalities(a_eq, b_eq)
        .with_inequalities(a_in, b_in)
}

/// The state at the horizon end must leave room to stop closing in by full
/// braking behind a partner that keeps its speed. With closing speed `w` and
/// braking `a` the margin lost on the way is
/// `(w - tau a)(w - tau a + a dt) / 2a` once `w > tau a`; secants of that
/// convex curve give linear rows that imply it.
fn recovery_rows(spec: &OcpSpec, g: &GapConstraint, out: &mut Vec<(Vec<f64>, f64)>) {
    let n = spec.n_grid;
    let dt = spec.dt();
    let (x0, v0) = (spec.x0, spec.v0);
    let a = -spec.bounds.u_min;
    let tau = g.safety.reaction_time;
    let (xp, vp) = g.partner.state_at(spec.t_start + n as f64 * dt);
    let loss = |w: f64| {
        let e = (w - tau * a).max(0.0);
        e * (e + a * dt) / (2.0 * a)
    };
    let mut pos = vec![0.0; n];
    position_coeffs(n, dt, &mut pos);
    let mut sp = vec![0.0; n];
    speed_coeffs(n, dt, &mut sp);
    let x_free = x0 + n as f64 * dt * v0;
    // margin = xp - x - tau v - delta, closing speed w = v - vp
    let margin_rhs = xp - x_free - tau * v0 - g.safety.standstill_gap;
    let span = spec.bounds.v_max - spec.bounds.v_min;
    let nodes: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
        .iter()
        .map(|d| tau * a + d)
        .take_while(|w| *w - tau * a <= 2.0 * span + 1.0)
        .collect();
    for win in nodes.windows(2) {
        let (w1, w2) = (win[0], win[1]);
        let slope = (loss(w2) - loss(w1)) / (w2 - w1);
        // loss(w1) + slope (w - w1) <= margin
        let row: Vec<f64> = (0..n).map(|j| slope * sp[j] + pos[j] + tau * sp[j]).collect();
        out.push((row, margin_rhs - loss(w1) - slope * (v0 - vp - w1)));
    }
    let w_last = *nodes.last().expect("recovery nodes");
    out.push((sp, vp + w_last - v0));
}

fn standard_cost(spec: &OcpSpec) -> CostTerms {
    let n = spec.n_grid;
    let terminal = match spec.terminal_speed {
        Some(TerminalSpeed::Soft { target }) => Some((spec.weights.alpha_v, target)),
        _ => None,
    };
    CostTerms {
        quad: vec![spec.weights.alpha_u / 2.0; n],
        lin: vec![0.0; n],
        terminal,
        running: None,
    }
}

/// Energy plus soft terminal disruption of `traj` under `spec`'s weights.
pub fn objective(spec: &OcpSpec, traj: &Trajectory) -> f64 {
    let energy = spec.weights.alpha_u / 2.0 * energy_of(traj);
    let disruption = match spec.terminal_speed {
        Some(TerminalSpeed::Soft { target }) => spec.weights.alpha_v * (traj.v[traj.v.len() - 1] - target).powi(2),
        _ => 0.0,
    };
    energy + disruption
}

/// QP of the fixed-horizon problem.
pub fn transcribe(spec: &OcpSpec) -> Result<QpProblem, OcpError> {
    spec.validate()?;
    Ok(build(spec, &standard_cost(spec)))
}

fn settings() -> QpSettings {
    QpSettings::default()
}

pub fn solve_fixed_time_ocp(spec: &OcpSpec) -> Result<Trajectory, OcpError> {
    spec.validate()?;
    if spec.weights.alpha_u <= 0.0 {
        return Err(OcpError::Invalid("alpha_u must be positive".into()));
    }
    let qp = build(spec, &standard_cost(spec));
    let sol = solve_qp(&qp, &settings())?;
    let mut traj = Trajectory::rollout(spec.t_start, spec.dt(), spec.x0, spec.v0, sol.x.iter().copied().collect());
    traj.cost = objective(spec, &traj);
    Ok(traj)
}

/// Grid used for each candidate horizon of a free-time scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridResolution {
    Intervals(usize),
    /// Interval length; the count is rounded and kept at least 2.
    Step(f64),
}

impl GridResolution {
    pub fn intervals(self, horizon: f64) -> usize {
        match self {
            GridResolution::Intervals(n) => n.max(2),
            GridResolution::Step(dt) => ((horizon / dt).round() as usize).max(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeTimeSearch {
    /// Latest admissible final time (absolute).
    pub t_max: f64,
    pub time_step: f64,
    /// Shortest admissible horizon.
    pub min_horizon: f64,
    pub resolution: GridResolution,
}

impl FreeTimeSearch {
    pub fn new(t_max: f64, time_step: f64, resolution: GridResolution) -> Self {
        Self {
            t_max,
            time_step,
            min_horizon: time_step,
            resolution,
        }
    }

    /// Candidate horizons `j * time_step`.
    /// Candidate horizons measured from `t_start`, shortest first.
    pub fn horizons(&self, t_start: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut j = 1usize;
        loop {
            let h = j as f64 * self.time_step;
            if t_start + h > self.t_max + 1e-9 {
                break;
            }
            if h >= self.min_horizon - 1e-9 {
                out.push(h);
            }
            j += 1;
        }
        out
    }
}

/// Speed change the terminal condition demands cannot be reached with the
/// acceleration bounds over `horizon`.
fn kinematically_unreachable(spec: &OcpSpec, horizon: f64) -> bool {
    let (lo, hi) = match spec.terminal_speed {
        Some(TerminalSpeed::Band { target, tolerance }) => (target - tolerance, target + tolerance),
        Some(TerminalSpeed::Fixed { target }) => (target, target),
        _ => return false,
    };
    let reach_hi = spec.v0 + spec.bounds.u_max * horizon;
    let reach_lo = spec.v0 + spec.bounds.u_min * horizon;
    reach_hi < lo - 1e-9 || reach_lo > hi + 1e-9
}

/// Scans the final time; returns `(t_f, trajectory)` whose `cost` includes
/// the `alpha_t` duration term.
pub fn solve_free_time_ocp(spec: &OcpSpec, search: &FreeTimeSearch) -> Result<(f64, Trajectory), OcpError> {
    if !(search.time_step > 0.0) {
        return Err(OcpError::Invalid("time_step must be positive".into()));
    }
    if !(search.t_max > spec.t_start) {
        return Err(OcpError::Invalid("t_max must exceed t_start".into()));
    }
    let alpha_t = spec.weights.alpha_t;
    let mut best: Option<(f64, Trajectory)> = None;
    let mut solver_error = None;
    for h in search.horizons(spec.t_start) {
        if let Some((_, b)) = &best {
            if alpha_t * h >= b.cost {
                break;
            }
        }
        if kinematically_unreachable(spec, h) {
            continue;
        }
        let n = search.resolution.intervals(h);
        let candidate = spec.with_horizon(spec.t_start + h, n);
        match solve_fixed_time_ocp(&candidate) {
            Ok(mut traj) => {
                traj.cost += alpha_t * h;
                let better = best.as_ref().is_none_or(|(_, b)| traj.cost < b.cost - 1e-9);
                if better {
                    best = Some((spec.t_start + h, traj));
                }
            }
            Err(OcpError::Infeasible) => {}
            Err(e @ OcpError::Solver(_)) => solver_error = Some(e),
            Err(e) => return Err(e),
        }
    }
    match (best, solver_error) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => Err(OcpError::Infeasible),
    }
}

/// Compliance-weighted behavior: minimizes
/// `Σ [P (u - u_ref)² + (1 - P) u²] dt + (1 - P) (v_N - v_d)²`
/// (or the running form of the disruption term) under the spec's
/// constraints. `v_d` is `spec.bounds.v_desired`.
pub fn solve_hdv_behavior_ocp(reference: &Trajectory, p: f64, spec: &OcpSpec) -> Result<Trajectory, OcpError> {
    spec.validate()?;
    if !(0.0..=1.0).contains(&p) {
        return Err(OcpError::Invalid(format!("compliance probability {p} outside [0, 1]")));
    }
    check_reference(reference, spec)?;
    let n = spec.n_grid;
    let vd = spec.bounds.v_desired;
    let w = 1.0 - p;
    let cost = CostTerms {
        quad: vec![1.0; n],
        lin: reference.u.iter().map(|ur| -2.0 * p * ur).collect(),
        terminal: (spec.disruption == DisruptionMode::Terminal).then_some((w, vd)),
        running: (spec.disruption == DisruptionMode::Running).then_some((w, vd)),
    };
    let qp = build(spec, &cost);
    let sol = solve_qp(&qp, &settings())?;
    let mut traj = Trajectory::rollout(spec.t_start, spec.dt(), spec.x0, spec.v0, sol.x.iter().copied().collect());
    traj.cost = behavior_objective(reference, p, spec, &traj);
    Ok(traj)
}

fn check_reference(reference: &Trajectory, spec: &OcpSpec) -> Result<(), OcpError> {
    let dt = spec.dt();
    if reference.len() != spec.n_grid || (reference.t_start() - spec.t_start).abs() > 1e-9 * dt.max(1.0) {
        return Err(OcpError::Invalid(format!(
            "reference grid ({} intervals from {}) does not match spec ({} from {})",
            reference.len(),
            reference.t_start(),
            spec.n_grid,
            spec.t_start
        )));
    }
    Ok(())
}

/// Value of the behavior objective for `traj`.
pub fn behavior_objective(reference: &Trajectory, p: f64, spec: &OcpSpec, traj: &Trajectory) -> f64 {
    let dt = traj.dt();
    let vd = spec.bounds.v_desired;
    let running: f64 = traj
        .u
        .iter()
        .zip(&reference.u)
        .map(|(u, ur)| (p * (u - ur).powi(2) + (1.0 - p) * u * u) * dt)
        .sum();
    let disruption = match spec.disruption {
        DisruptionMode::Terminal => (traj.v[traj.v.len() - 1] - vd).powi(2),
        DisruptionMode::Running => traj.v[1..].iter().map(|v| (v - vd).powi(2) * dt).sum(),
    };
    running + (1.0 - p) * disruption
}

/// Lane-change problem at constant speed with linearized lateral dynamics
/// `y' = v theta`, `theta' = (v / L) phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralSpec {
    pub speed: f64,
    pub wheelbase: f64,
    pub lane_width: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub weights: CostWeights,
    /// Longest admissible duration.
    pub t_max: f64,
    pub time_step: f64,
    pub resolution: GridResolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateralTrajectory {
    pub t: Vec<f64>,
    pub phi: Vec<f64>,
    pub y: Vec<f64>,
    pub theta: Vec<f64>,
    pub cost: f64,
}

impl LateralTrajectory {
    pub fn duration(&self) -> f64 {
        self.t[self.t.len() - 1] - self.t[0]
    }
}

fn lateral_fixed(spec: &LateralSpec, horizon: f64) -> Result<LateralTrajectory, OcpError> {
    let n = spec.resolution.intervals(horizon);
    let dt = horizon / n as f64;
    let g_theta = spec.speed / spec.wheelbase;
    let g_y = spec.speed * g_theta;
    let l = spec.lane_width;

    let h = DMatrix::from_diagonal_element(n, n, spec.weights.alpha_phi.max(1e-12) * dt);
    let mut a_eq = DMatrix::zeros(2, n);
    let mut b_eq = DVector::zeros(2);
    let mut row = vec![0.0; n];
    position_coeffs(n, dt, &mut row);
    for j in 0..n {
        a_eq[(0, j)] = g_y * row[j];
        a_eq[(1, j)] = g_theta * dt;
    }
    b_eq[0] = l;
    let mut ineq: Vec<(Vec<f64>, f64)> = Vec::new();
    for j in 0..n {
        let mut r = vec![0.0; n];
        r[j] = 1.0;
        ineq.push((r.clone(), spec.phi_max));
        r[j] = -1.0;
        ineq.push((r, -spec.phi_min));
    }
    for k in 1..n {
        let mut r = vec![0.0; n];
        position_coeffs(k, dt, &mut r);
        let r: Vec<f64> = r.iter().map(|c| c * g_y).collect();
        ineq.push((r.clone(), 1.5 * l));
        ineq.push((r.iter().map(|c| -c).collect(), 0.5 * l));
    }
    let a_in = DMatrix::from_fn(ineq.len(), n, |i, j| ineq[i].0[j]);
    let b_in = DVector::from_iterator(ineq.len(), ineq.iter().map(|r| r.1));
    let qp = QpProblem::new(h, DVector::zeros(n))
        .with_equalities(a_eq, b_eq)
        .with_inequalities(a_in, b_in);
    let sol = solve_qp(&qp, &settings())?;

    let phi: Vec<f64> = sol.x.iter().copied().collect();
    let mut t = vec![0.0];
    let mut y = vec![0.0];
    let mut theta = vec![0.0];
    for k in 0..n {
        t.push((k + 1) as f64 * dt);
        y.push(y[k] + spec.speed * theta[k] * dt);
        theta.push(theta[k] + g_theta * phi[k] * dt);
    }
    let energy: f64 = phi.iter().map(|p| p * p * dt).sum();
    let cost = spec.weights.alpha_t * horizon + spec.weights.alpha_phi / 2.0 * energy;
    Ok(LateralTrajectory { t, phi, y, theta, cost })
}

/// Scans the lateral duration; time stamps of the result start at 0.
pub fn solve_lateral_ocp(spec: &LateralSpec) -> Result<LateralTrajectory, OcpError> {
    if !(spec.speed > 0.0 && spec.wheelbase > 0.0 && spec.lane_width >= 0.0) {
        return Err(OcpError::Invalid("lateral speed, wheelbase and lane width must be positive".into()));
    }
    if !(spec.time_step > 0.0 && spec.t_max >= spec.time_step) {
        return Err(OcpError::Invalid("lateral time grid is empty".into()));
    }
    if !(spec.phi_min < 0.0 && spec.phi_max > 0.0) {
        return Err(OcpError::Invalid("steering bounds must bracket zero".into()));
    }
    let search = FreeTimeSearch::new(spec.t_max, spec.time_step, spec.resolution);
    let mut best: Option<LateralTrajectory> = None;
    let mut solver_error = None;
    for h in search.horizons(0.0) {
        if let Some(b) = &best {
            if spec.weights.alpha_t * h >= b.cost {
                break;
            }
        }
        match lateral_fixed(spec, h) {
            Ok(tr) => {
                if best.as_ref().is_none_or(|b| tr.cost < b.cost - 1e-9) {
                    best = Some(tr);
                }
            }
            Err(OcpError::Infeasible) => {}
            Err(e) => solver_error = Some(e),
        }
    }
    match (best, solver_error) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => Err(OcpError::Infeasible),
    }
}

/// Closed-form minimum-energy transfer of an unconstrained double
/// integrator: `u(t) = c0 + c1 (t - t_start)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinEnergyOptimum {
    pub t_start: f64,
    pub horizon: f64,
    pub x0: f64,
    pub v0: f64,
    pub c0: f64,
    pub c1: f64,
    speed_target: Option<f64>,
    position_target: Option<f64>,
}

/// Supports a fixed terminal speed and/or a fixed terminal position with no
/// other constraint; bounds are ignored.
pub fn analytic_min_energy_oracle(spec: &OcpSpec) -> Result<MinEnergyOptimum, OcpError> {
    if !(spec.t_end > spec.t_start) {
        return Err(OcpError::Invalid("t_end must exceed t_start".into()));
    }
    if !spec.headway.is_empty() || !spec.terminal_gaps.is_empty() {
        return Err(OcpError::Unsupported("gap constraints".into()));
    }
    let speed_target = match spec.terminal_speed {
        None => None,
        Some(TerminalSpeed::Fixed { target }) => Some(target),
        Some(other) => return Err(OcpError::Unsupported(format!("terminal speed {other:?}"))),
    };
    let t = spec.t_end - spec.t_start;
    let (c0, c1) = match (speed_target, spec.terminal_position) {
        (None, None) => (0.0, 0.0),
        (Some(vf), None) => ((vf - spec.v0) / t, 0.0),
        (None, Some(xf)) => {
            // u = lambda (T - s)
            let d = xf - spec.x0 - spec.v0 * t;
            let lambda = 3.0 * d / t.powi(3);
            (lambda * t, -lambda)
        }
        (Some(vf), Some(xf)) => {
            let dv = vf - spec.v0;
            let d = xf - spec.x0 - spec.v0 * t;
            let det = -t.powi(4) / 12.0;
            ((dv * t.powi(3) / 6.0 - d * t * t / 2.0) / det, (t * d - t * t / 2.0 * dv) / det)
        }
    };
    Ok(MinEnergyOptimum {
        t_start: spec.t_start,
        horizon: t,
        x0: spec.x0,
        v0: spec.v0,
        c0,
        c1,
        speed_target,
        position_target: spec.terminal_position,
    })
}

impl MinEnergyOptimum {
    pub fn control(&self, t: f64) -> f64 {
        self.c0 + self.c1 * (t - self.t_start)
    }

    /// Exact ∫ u² dt over the horizon.
    pub fn energy(&self) -> f64 {
        let (a, b, t) = (self.c0, self.c1, self.horizon);
        a * a * t + a * b * t * t + b * b * t.powi(3) / 3.0
    }

    /// Exact optimum of the Euler/rectangle transcription on `n` intervals.
    pub fn discretized(&self, n: usize) -> Trajectory {
        let dt = self.horizon / n as f64;
        let nf = n as f64;
        let s1 = nf * (nf - 1.0) / 2.0;
        let s2 = (nf - 1.0) * nf * (2.0 * nf - 1.0) / 6.0;
        let a = self.speed_target.map(|vf| (vf - self.v0) / dt);
        let b = self
            .position_target
            .map(|xf| (xf - self.x0 - nf * dt * self.v0) / (dt * dt));
        let (l1, l2) = match (a, b) {
            (None, None) => (0.0, 0.0),
            (Some(a), None) => (a / nf, 0.0),
            (None, Some(b)) => (0.0, if s2 > 0.0 { b / s2 } else { 0.0 }),
            (Some(a), Some(b)) => {
                let det = nf * s2 - s1 * s1;
                ((a * s2 - s1 * b) / det, (nf * b - s1 * a) / det)
            }
        };
        let u = (0..n).map(|j| l1 + l2 * (n - 1 - j) as f64).collect();
        Trajectory::rollout(self.t_start, dt, self.x0, self.v0, u)
    }
}
