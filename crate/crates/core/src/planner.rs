//! Merge-pair selection for the lane-changing vehicle.
//!
//! At every planning instant the merging vehicle solves its own free-time
//! problem first. Every fast-lane vehicle then gets a nominal reference
//! (front to back, each one keeping headway to the reference ahead of it).
//! Each adjacent pair of candidates is then re-planned with the terminal
//! gaps around the merging vehicle, and the cheapest triplet wins.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ocp::{
    solve_fixed_time_ocp, solve_free_time_ocp, CostWeights, FreeTimeSearch, GapConstraint, GapPartner,
    GridResolution, OcpError, OcpSpec, TerminalSpeed, Trajectory,
};
use crate::scenario::{safety_distance, SafetyParams, Scenario, VehicleParams, VehicleState};

/// Slack on the trigger inequalities, absorbs rounding of plans that end
/// exactly on a gap constraint.
pub const TRIGGER_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no candidate pair admits a feasible maneuver")]
    AllPairsInfeasible,
    #[error("reference for vehicle {id} is infeasible")]
    ReferenceInfeasible { id: String },
    #[error("solver failure: {0}")]
    Solver(OcpError),
}

/// Positions of every vehicle at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneStates {
    pub t: f64,
    /// Fast-lane vehicles in scenario order.
    pub fast: Vec<VehicleState>,
    pub merging: VehicleState,
    pub obstacle: VehicleState,
}

impl LaneStates {
    pub fn initial(scenario: &Scenario) -> Self {
        Self {
            t: scenario.t0(),
            fast: scenario.fast_lane().iter().map(|v| v.state).collect(),
            merging: scenario.merging().state,
            obstacle: scenario.obstacle().state,
        }
    }
}

/// Fast-lane indices within sensor range, front to back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub members: Vec<usize>,
}

impl CandidateSet {
    /// Adjacent pairs including the virtual vehicles at both ends.
    pub fn pairs(&self) -> Vec<(Option<usize>, Option<usize>)> {
        let mut out = Vec::with_capacity(self.members.len() + 1);
        let mut lead = None;
        for &m in &self.members {
            out.push((lead, Some(m)));
            lead = Some(m);
        }
        out.push((lead, None));
        out
    }
}

pub fn candidate_set(scenario: &Scenario, states: &LaneStates) -> CandidateSet {
    let road = scenario.road();
    let lo = states.merging.x - road.range_back;
    let hi = states.obstacle.x + road.range_front;
    CandidateSet {
        members: states
            .fast
            .iter()
            .enumerate()
            .filter(|(_, s)| lo <= s.x && s.x <= hi)
            .map(|(i, _)| i)
            .collect(),
    }
}

/// Selected pair; `None` stands for a virtual vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergePair {
    pub lead: Option<usize>,
    pub rear: Option<usize>,
    pub triplet_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEvaluation {
    pub lead: Option<usize>,
    pub rear: Option<usize>,
    /// `None` when the triplet is infeasible.
    pub cost: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    pub weights: CostWeights,
    /// Absolute deadline for the merging vehicle's final time.
    pub deadline: f64,
    /// Step of the final-time scan.
    pub time_step: f64,
    /// Shortest horizon the merging vehicle may plan.
    pub min_horizon: f64,
    /// Interval length of every reference grid.
    pub grid_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub t: f64,
    pub t_final: f64,
    pub pair: MergePair,
    pub merging: Trajectory,
    /// References of all fast-lane vehicles, in scenario order.
    pub fast: Vec<Trajectory>,
    pub evaluations: Vec<PairEvaluation>,
}

fn merging_spec(scenario: &Scenario, states: &LaneStates, cfg: &PlannerConfig) -> OcpSpec {
    let c = scenario.merging();
    let mut spec = OcpSpec::new(states.merging.x, states.merging.v, states.t, states.t + 1.0, 2, c.params);
    spec.weights = cfg.weights;
    spec.terminal_speed = Some(TerminalSpeed::Band {
        target: c.params.v_desired,
        tolerance: c.params.speed_tolerance,
    });
    spec.headway.push(GapConstraint::behind(
        GapPartner::Cruising {
            x: states.obstacle.x,
            v: states.obstacle.v,
            t: states.t,
        },
        *scenario.safety(),
    ));
    spec
}

struct Horizon {
    t: f64,
    t_final: f64,
    n: usize,
}

fn vehicle_spec(
    params: &VehicleParams,
    state: &VehicleState,
    h: &Horizon,
    weights: CostWeights,
    predecessor: Option<&Trajectory>,
    safety: SafetyParams,
) -> OcpSpec {
    let mut spec = OcpSpec::new(state.x, state.v, h.t, h.t_final, h.n, *params);
    spec.weights = weights;
    spec.terminal_speed = Some(TerminalSpeed::Soft {
        target: params.v_desired,
    });
    if let Some(p) = predecessor {
        spec.headway.push(GapConstraint::behind(GapPartner::Planned(p.clone()), safety));
    }
    spec
}

fn lift(e: OcpError, id: &str) -> PlanError {
    match e {
        OcpError::Infeasible => PlanError::ReferenceInfeasible { id: id.to_string() },
        other => PlanError::Solver(other),
    }
}

/// Solves the merging vehicle's problem and the pair problems, returns the
/// cheapest feasible triplet together with references for every vehicle.
///
/// The merging vehicle's own optimal final time is tried first. When no pair
/// can make room by then, later final times are tried in scan order up to
/// the deadline.
pub fn plan_references(
    scenario: &Scenario,
    states: &LaneStates,
    candidates: &CandidateSet,
    cfg: &PlannerConfig,
) -> Result<Plan, PlanError> {
    let search = FreeTimeSearch {
        t_max: cfg.deadline,
        time_step: cfg.time_step,
        min_horizon: cfg.min_horizon,
        resolution: GridResolution::Step(cfg.grid_step),
    };
    let spec = merging_spec(scenario, states, cfg);
    let (t_star, merging) = match solve_free_time_ocp(&spec, &search) {
        Ok(r) => r,
        Err(OcpError::Infeasible) => return Err(PlanError::AllPairsInfeasible),
        Err(e) => return Err(PlanError::Solver(e)),
    };
    let first = match plan_at(scenario, states, candidates, cfg, t_star, merging) {
        Err(PlanError::Solver(e)) => return Err(PlanError::Solver(e)),
        Ok(p) => return Ok(p),
        Err(e) => e,
    };
    for h in search.horizons(states.t) {
        if states.t + h <= t_star + 1e-9 {
            continue;
        }
        let n = search.resolution.intervals(h);
        let mut merging = match solve_fixed_time_ocp(&spec.with_horizon(states.t + h, n)) {
            Ok(tr) => tr,
            Err(OcpError::Infeasible) => continue,
            Err(e) => return Err(PlanError::Solver(e)),
        };
        merging.cost += cfg.weights.alpha_t * h;
        match plan_at(scenario, states, candidates, cfg, states.t + h, merging) {
            Err(PlanError::Solver(e)) => return Err(PlanError::Solver(e)),
            Ok(p) => return Ok(p),
            Err(_) => {}
        }
    }
    Err(first)
}

fn plan_at(
    scenario: &Scenario,
    states: &LaneStates,
    candidates: &CandidateSet,
    cfg: &PlannerConfig,
    t_final: f64,
    merging: Trajectory,
) -> Result<Plan, PlanError> {
    let safety = *scenario.safety();
    let fast = scenario.fast_lane();
    let h = Horizon {
        t: states.t,
        t_final,
        n: merging.len(),
    };

    // nominal references, front to back
    let mut nominal: Vec<Trajectory> = Vec::with_capacity(fast.len());
    for (i, veh) in fast.iter().enumerate() {
        let spec = vehicle_spec(&veh.params, &states.fast[i], &h, cfg.weights, nominal.last(), safety);
        nominal.push(solve_fixed_time_ocp(&spec).map_err(|e| lift(e, &veh.id))?);
    }

    let c_ref = GapPartner::Planned(merging.clone());
    let solve_pair = |lead: Option<usize>, rear: Option<usize>| -> Result<Option<(f64, Vec<Trajectory>)>, PlanError> {
        let mut refs: Vec<Trajectory> = Vec::new();
        let mut cost = merging.cost;
        let mut lead_ref = None;
        if let Some(a) = lead {
            let pred = a.checked_sub(1).map(|p| &nominal[p]);
            let mut spec = vehicle_spec(&fast[a].params, &states.fast[a], &h, cfg.weights, pred, safety);
            spec.terminal_gaps.push(GapConstraint::ahead(c_ref.clone(), safety));
            match solve_fixed_time_ocp(&spec) {
                Ok(tr) => {
                    cost += tr.cost;
                    lead_ref = Some(tr.clone());
                    refs.push(tr);
                }
                Err(OcpError::Infeasible) => return Ok(None),
                Err(e) => return Err(PlanError::Solver(e)),
            }
        }
        if let Some(b) = rear {
            let pred = match (&lead_ref, b.checked_sub(1)) {
                (Some(tr), _) => Some(tr),
                (None, Some(p)) => Some(&nominal[p]),
                (None, None) => None,
            };
            let mut spec = vehicle_spec(&fast[b].params, &states.fast[b], &h, cfg.weights, pred, safety);
            spec.terminal_gaps.push(GapConstraint::behind(c_ref.clone(), safety));
            match solve_fixed_time_ocp(&spec) {
                Ok(tr) => {
                    cost += tr.cost;
                    refs.push(tr);
                }
                Err(OcpError::Infeasible) => return Ok(None),
                Err(e) => return Err(PlanError::Solver(e)),
            }
        }
        Ok(Some((cost, refs)))
    };

    let mut evaluations = Vec::new();
    let mut solved = Vec::new();
    for (lead, rear) in candidates.pairs() {
        let r = solve_pair(lead, rear)?;
        evaluations.push(PairEvaluation {
            lead,
            rear,
            cost: r.as_ref().map(|(c, _)| *c),
        });
        if let Some((cost, refs)) = r {
            solved.push((cost, lead, rear, refs));
        }
    }
    // stable sort keeps front pairs first among equal costs
    solved.sort_by(|a, b| {
        if (a.0 - b.0).abs() <= 1e-9 {
            std::cmp::Ordering::Equal
        } else {
            a.0.total_cmp(&b.0)
        }
    });

    for (cost, lead, rear, refs) in solved {
        let mut fast_refs = nominal.clone();
        let mut it = refs.into_iter();
        if let Some(a) = lead {
            fast_refs[a] = it.next().expect("lead reference");
        }
        let mut first_behind = lead.map_or(0, |a| a + 1);
        if let Some(b) = rear {
            fast_refs[b] = it.next().expect("rear reference");
            first_behind = b + 1;
        }
        // vehicles behind the pair follow the updated references
        let mut ok = true;
        if lead.is_some() || rear.is_some() {
            for i in first_behind..fast.len() {
                let pred = &fast_refs[i - 1];
                let spec = vehicle_spec(&fast[i].params, &states.fast[i], &h, cfg.weights, Some(pred), safety);
                match solve_fixed_time_ocp(&spec) {
                    Ok(tr) => fast_refs[i] = tr,
                    Err(OcpError::Infeasible) => {
                        ok = false;
                        break;
                    }
                    Err(e) => return Err(PlanError::Solver(e)),
                }
            }
        }
        if ok {
            return Ok(Plan {
                t: states.t,
                t_final,
                pair: MergePair {
                    lead,
                    rear,
                    triplet_cost: cost,
                },
                merging,
                fast: fast_refs,
                evaluations,
            });
        }
    }
    Err(PlanError::AllPairsInfeasible)
}

/// Longitudinal safety of the merging vehicle with the obstacle and with
/// both members of the pair. Virtual members are vacuously safe.
pub fn lateral_trigger(states: &LaneStates, pair: &MergePair, safety: &SafetyParams) -> bool {
    let c = &states.merging;
    let d = |v: f64| safety_distance(v.max(0.0), safety).expect("non-negative speed");
    let ahead_ok = states.obstacle.x - c.x >= d(c.v) - TRIGGER_TOL;
    let lead_ok = pair
        .lead
        .is_none_or(|a| states.fast[a].x - c.x >= d(c.v) - TRIGGER_TOL);
    let rear_ok = pair.rear.is_none_or(|b| {
        let r = &states.fast[b];
        c.x - r.x >= d(r.v) - TRIGGER_TOL
    });
    ahead_ok && lead_ok && rear_ok
}
