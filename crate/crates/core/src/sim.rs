//! Closed-loop lane-change maneuver with compliance control.
//!
//! The loop runs on an integer plant clock. Every `dt_sample` the planner
//! measures each fast-lane vehicle against the reference it was given,
//! updates the compliance controllers, re-plans, and lets every vehicle
//! re-solve its behavior problem with the new probability. Once the merging
//! vehicle is longitudinally safe, the lateral move is executed open loop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{actual_trajectory, BehaviorRequest};
use crate::compliance::{
    measure_error, step_all, AgentComplianceState, ComplianceConfig, ControllerMode, GlobalControllerState,
};
use crate::ocp::{
    solve_fixed_time_ocp, solve_lateral_ocp, CostWeights, DisruptionMode, GapConstraint, GapPartner,
    GridResolution, LateralSpec, OcpError, OcpSpec, TerminalSpeed, Trajectory,
};
use crate::planner::{candidate_set, lateral_trigger, plan_references, LaneStates, MergePair, Plan, PlanError, PlannerConfig};
use crate::scenario::{step_dynamics, ControlInput, ModelError, Scenario, VehicleClass, VehicleState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("plant error for vehicle {id}: {source}")]
    Plant { id: String, source: ModelError },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Sampling interval between compliance updates and re-plans (s).
    pub dt_sample: f64,
    /// Plant integration step (s); also the grid step of every plan.
    pub dt_plant: f64,
    /// Longest admissible longitudinal phase (s).
    pub t_max: f64,
    /// Step of the final-time scans (s).
    pub time_step: f64,
    /// Longest admissible lateral phase (s).
    pub lateral_t_max: f64,
    pub mode: ControllerMode,
    pub disruption: DisruptionMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_sample: 0.1,
            dt_plant: 0.05,
            t_max: 4.0,
            time_step: 0.05,
            lateral_t_max: 5.0,
            mode: ControllerMode::Both,
            disruption: DisruptionMode::Terminal,
        }
    }
}

fn is_multiple(a: f64, b: f64) -> bool {
    let r = a / b;
    (r - r.round()).abs() < 1e-9 && r.round() >= 1.0
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if !(self.dt_plant > 0.0 && self.dt_sample > 0.0 && self.time_step > 0.0) {
            return bad("time steps must be positive");
        }
        if self.dt_plant > self.dt_sample {
            return bad("dt_plant must not exceed dt_sample");
        }
        if !is_multiple(self.dt_sample, self.dt_plant) || !is_multiple(self.time_step, self.dt_plant) {
            return bad("dt_sample and time_step must be multiples of dt_plant");
        }
        if self.dt_sample < 2.0 * self.dt_plant - 1e-12 {
            return bad("dt_sample must span at least two plant steps");
        }
        if !(self.t_max > 0.0 && self.lateral_t_max >= self.time_step) {
            return bad("t_max and lateral_t_max must be positive");
        }
        Ok(())
    }
}

/// Everything a run needs besides the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub compliance: ComplianceConfig,
    pub weights: CostWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleTrace {
    pub id: String,
    pub class: VehicleClass,
    pub states: Vec<VehicleState>,
    /// Control applied from the matching state onward; zero on the last row.
    pub controls: Vec<ControlInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceTrace {
    pub id: String,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentRecord {
    pub id: String,
    /// Instantaneous score; absent at the initial instant.
    pub score: Option<f64>,
    pub average: f64,
    pub probability: f64,
    pub local_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplianceRecord {
    pub t: f64,
    pub global_cost: f64,
    pub agents: Vec<AgentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRecord {
    pub t: f64,
    pub lead: Option<String>,
    pub rear: Option<String>,
    pub triplet_cost: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManeuverResult {
    pub feasible: bool,
    /// Why the maneuver failed, when it did.
    pub failure: Option<String>,
    pub mode: ControllerMode,
    pub t0: f64,
    pub t_lateral: Option<f64>,
    pub t_final: Option<f64>,
    pub maneuver_time: Option<f64>,
    pub triplet_energy: Option<f64>,
    /// Pair in force when the lateral move started.
    pub pair: Option<PairRecord>,
    pub pair_history: Vec<PairRecord>,
    pub times: Vec<f64>,
    /// Fast lane in scenario order, then the merging vehicle, then the obstacle.
    pub vehicles: Vec<VehicleTrace>,
    /// References of the fast lane and the merging vehicle on `times`.
    pub references: Vec<ReferenceTrace>,
    pub compliance: Vec<ComplianceRecord>,
}

impl ManeuverResult {
    pub fn vehicle(&self, id: &str) -> Option<&VehicleTrace> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn dt_plant(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub maneuver_time: Option<f64>,
    pub triplet_energy: Option<f64>,
    /// Terminal `(v - v_d)^2` per fast-lane and merging vehicle.
    pub disruption: Vec<(String, f64)>,
}

/// Maneuver time, triplet energy and terminal disruption computed from the
/// executed traces. Infeasible runs have no time or energy.
pub fn metrics(result: &ManeuverResult, scenario: &Scenario) -> Metrics {
    let disruption = scenario
        .fast_lane()
        .iter()
        .chain(std::iter::once(scenario.merging()))
        .filter_map(|veh| {
            let tr = result.vehicle(&veh.id)?;
            let v = tr.states.last()?.v;
            Some((veh.id.clone(), (v - veh.params.v_desired).powi(2)))
        })
        .collect();
    if !result.feasible {
        return Metrics {
            maneuver_time: None,
            triplet_energy: None,
            disruption,
        };
    }
    let dt = result.dt_plant();
    let mut ids = vec![scenario.merging().id.clone()];
    if let Some(p) = &result.pair {
        ids.extend(p.lead.iter().cloned());
        ids.extend(p.rear.iter().cloned());
    }
    let energy = ids
        .iter()
        .filter_map(|id| result.vehicle(id))
        .map(|tr| tr.controls.iter().map(|c| c.u * c.u * dt).sum::<f64>())
        .sum();
    Metrics {
        maneuver_time: result.t_final.map(|t| t - result.t0),
        triplet_energy: Some(energy),
        disruption,
    }
}

struct Recorder {
    times: Vec<f64>,
    vehicles: Vec<VehicleTrace>,
    references: Vec<ReferenceTrace>,
}

impl Recorder {
    fn new(scenario: &Scenario) -> Self {
        let all = scenario
            .fast_lane()
            .iter()
            .chain([scenario.merging(), scenario.obstacle()]);
        let vehicles = all
            .map(|v| VehicleTrace {
                id: v.id.clone(),
                class: v.class,
                states: Vec::new(),
                controls: Vec::new(),
            })
            .collect();
        let references = scenario
            .fast_lane()
            .iter()
            .chain([scenario.merging()])
            .map(|v| ReferenceTrace {
                id: v.id.clone(),
                x: Vec::new(),
                v: Vec::new(),
                u: Vec::new(),
            })
            .collect();
        Self {
            times: Vec::new(),
            vehicles,
            references,
        }
    }

    fn push(&mut self, t: f64, states: &LaneStates, controls: &[ControlInput], refs: &[(f64, f64, f64)]) {
        self.times.push(t);
        let all = states.fast.iter().chain([&states.merging, &states.obstacle]);
        for ((tr, s), c) in self.vehicles.iter_mut().zip(all).zip(controls) {
            tr.states.push(*s);
            tr.controls.push(*c);
        }
        for (tr, &(x, v, u)) in self.references.iter_mut().zip(refs) {
            tr.x.push(x);
            tr.v.push(v);
            tr.u.push(u);
        }
    }
}

fn ocp_failure(e: OcpError) -> SimError {
    SimError::Solver(e.to_string())
}

struct Engine<'a> {
    scenario: &'a Scenario,
    cfg: &'a RunConfig,
    planner: PlannerConfig,
    steps_per_sample: usize,
    dt: f64,
    t0: f64,
    step: usize,
    states: LaneStates,
    agents: Vec<AgentComplianceState>,
    global: GlobalControllerState,
    rec: Recorder,
    compliance: Vec<ComplianceRecord>,
    pairs: Vec<PairRecord>,
}

impl<'a> Engine<'a> {
    fn time(&self) -> f64 {
        self.t0 + self.step as f64 * self.dt
    }

    fn pair_record(&self, plan: &Plan) -> PairRecord {
        let id = |i: Option<usize>| i.map(|i| self.scenario.fast_lane()[i].id.clone());
        PairRecord {
            t: plan.t,
            lead: id(plan.pair.lead),
            rear: id(plan.pair.rear),
            triplet_cost: plan.pair.triplet_cost,
            t_final: plan.t_final,
        }
    }

    fn record_compliance(&mut self, scores: Option<&[f64]>) {
        let agents = self
            .scenario
            .fast_lane()
            .iter()
            .zip(&self.agents)
            .enumerate()
            .map(|(i, (veh, a))| AgentRecord {
                id: veh.id.clone(),
                score: scores.map(|s| s[i]),
                average: a.average,
                probability: a.probability,
                local_cost: a.local_cost,
            })
            .collect();
        self.compliance.push(ComplianceRecord {
            t: self.states.t,
            global_cost: self.global.cost,
            agents,
        });
    }

    /// Front-to-back behavior sweep. The inner error names the vehicle that
    /// cannot keep its headway.
    fn behaviors(&self, refs: &[Trajectory]) -> Result<Result<Vec<Trajectory>, String>, SimError> {
        let mut out: Vec<Trajectory> = Vec::with_capacity(refs.len());
        for (i, veh) in self.scenario.fast_lane().iter().enumerate() {
            let req = BehaviorRequest {
                id: &veh.id,
                state: self.states.fast[i],
                params: veh.params,
                reference: &refs[i],
                probability: self.agents[i].probability,
                predecessor: out.last(),
                safety: *self.scenario.safety(),
                disruption: self.cfg.sim.disruption,
            };
            match actual_trajectory(&req) {
                Ok(tr) => out.push(tr),
                Err(e) if e.source == OcpError::Infeasible => return Ok(Err(e.to_string())),
                Err(e) => return Err(SimError::Solver(e.to_string())),
            }
        }
        Ok(Ok(out))
    }

    /// Advances the plant by `n` steps.
    fn advance(
        &mut self,
        n: usize,
        fast: &[Trajectory],
        fast_refs: &[Trajectory],
        merging: &dyn Fn(f64) -> ControlInput,
        merging_ref: &dyn Fn(f64) -> (f64, f64, f64),
    ) -> Result<(), SimError> {
        for _ in 0..n {
            let t = self.time();
            let mut controls: Vec<ControlInput> = fast.iter().map(|tr| ControlInput::accel(tr.control_at(t))).collect();
            controls.push(merging(t));
            controls.push(ControlInput::accel(0.0));
            let mut refs: Vec<(f64, f64, f64)> = fast_refs
                .iter()
                .map(|r| {
                    let (x, v) = r.state_at(t);
                    (x, v, r.control_at(t))
                })
                .collect();
            refs.push(merging_ref(t));
            self.rec.push(t, &self.states, &controls, &refs);

            let s = self.scenario;
            let mut next = self.states.clone();
            for (i, veh) in s.fast_lane().iter().enumerate() {
                next.fast[i] = step_dynamics(&self.states.fast[i], &controls[i], &veh.params, self.dt)
                    .map_err(|source| SimError::Plant { id: veh.id.clone(), source })?;
            }
            let m = fast.len();
            next.merging = step_dynamics(&self.states.merging, &controls[m], &s.merging().params, self.dt)
                .map_err(|source| SimError::Plant {
                    id: s.merging().id.clone(),
                    source,
                })?;
            next.obstacle = step_dynamics(&self.states.obstacle, &controls[m + 1], &s.obstacle().params, self.dt)
                .map_err(|source| SimError::Plant {
                    id: s.obstacle().id.clone(),
                    source,
                })?;
            self.step += 1;
            next.t = self.time();
            self.states = next;
        }
        Ok(())
    }

    fn finish(self, outcome: Outcome) -> ManeuverResult {
        let mut rec = self.rec;
        // closing row
        let n_ctrl = rec.vehicles.len();
        let controls = vec![ControlInput::accel(0.0); n_ctrl];
        let refs: Vec<(f64, f64, f64)> = rec
            .references
            .iter()
            .map(|r| (r.x.last().copied().unwrap_or(f64::NAN), r.v.last().copied().unwrap_or(f64::NAN), 0.0))
            .collect();
        let t = self.t0 + self.step as f64 * self.dt;
        rec.push(t, &self.states, &controls, &refs);
        // the closing reference row extrapolates the last reference
        if rec.times.len() >= 2 {
            let k = rec.times.len() - 1;
            for r in rec.references.iter_mut() {
                r.x[k] = r.x[k - 1] + r.v[k - 1] * self.dt;
                r.v[k] = r.v[k - 1] + r.u[k - 1] * self.dt;
            }
        }
        let (feasible, failure, t_lateral, pair) = match outcome {
            Outcome::Done { t_lateral, pair } => (true, None, Some(t_lateral), Some(pair)),
            Outcome::Failed(msg) => (false, Some(msg), None, None),
        };
        let t_final = feasible.then_some(t);
        let mut result = ManeuverResult {
            feasible,
            failure,
            mode: self.cfg.sim.mode,
            t0: self.t0,
            t_lateral,
            t_final,
            maneuver_time: None,
            triplet_energy: None,
            pair,
            pair_history: self.pairs,
            times: rec.times,
            vehicles: rec.vehicles,
            references: rec.references,
            compliance: self.compliance,
        };
        let m = metrics(&result, self.scenario);
        result.maneuver_time = m.maneuver_time;
        result.triplet_energy = m.triplet_energy;
        result
    }

    /// Fast-lane references for the lateral phase: keep headway and leave
    /// room around the merging vehicle, which cruises at constant speed.
    fn lateral_fast_refs(&self, pair: &MergePair, n: usize, duration: f64) -> Result<Option<Vec<Trajectory>>, SimError> {
        let s = self.scenario;
        let safety = *s.safety();
        let t = self.states.t;
        let c = GapPartner::Cruising {
            x: self.states.merging.x,
            v: self.states.merging.v,
            t,
        };
        let solve = |with_gaps: bool| -> Result<Option<Vec<Trajectory>>, SimError> {
            let mut out: Vec<Trajectory> = Vec::new();
            for (i, veh) in s.fast_lane().iter().enumerate() {
                let st = self.states.fast[i];
                let mut spec = OcpSpec::new(st.x, st.v, t, t + duration, n, veh.params);
                spec.weights = self.cfg.weights;
                spec.terminal_speed = Some(TerminalSpeed::Soft {
                    target: veh.params.v_desired,
                });
                if let Some(p) = out.last() {
                    spec.headway.push(GapConstraint::behind(GapPartner::Planned(p.clone()), safety));
                }
                if with_gaps && pair.lead == Some(i) {
                    spec.terminal_gaps.push(GapConstraint::ahead(c.clone(), safety));
                }
                if with_gaps && pair.rear == Some(i) {
                    spec.terminal_gaps.push(GapConstraint::behind(c.clone(), safety));
                }
                match solve_fixed_time_ocp(&spec) {
                    Ok(tr) => out.push(tr),
                    Err(OcpError::Infeasible) => return Ok(None),
                    Err(e) => return Err(ocp_failure(e)),
                }
            }
            Ok(Some(out))
        };
        match solve(true)? {
            Some(refs) => Ok(Some(refs)),
            None => solve(false),
        }
    }
}

enum Outcome {
    Done { t_lateral: f64, pair: PairRecord },
    Failed(String),
}

/// Runs the closed-loop maneuver. Infeasibility is reported in the result;
/// only configuration and solver failures are errors.
pub fn run_maneuver(scenario: &Scenario, cfg: &RunConfig) -> Result<ManeuverResult, SimError> {
    cfg.sim.validate()?;
    cfg.compliance
        .validate()
        .map_err(|e| SimError::Config(e.to_string()))?;
    let sim = &cfg.sim;
    let t0 = scenario.t0();
    let planner = PlannerConfig {
        weights: cfg.weights,
        deadline: t0 + sim.t_max,
        time_step: sim.time_step,
        min_horizon: sim.dt_sample,
        grid_step: sim.dt_plant,
    };
    let agents = scenario
        .fast_lane()
        .iter()
        .map(|v| AgentComplianceState::new(v.proclivity, v.class.is_controllable(), &cfg.compliance))
        .collect();
    let mut eng = Engine {
        scenario,
        cfg,
        planner,
        steps_per_sample: (sim.dt_sample / sim.dt_plant).round() as usize,
        dt: sim.dt_plant,
        t0,
        step: 0,
        states: LaneStates::initial(scenario),
        agents,
        global: GlobalControllerState::default(),
        rec: Recorder::new(scenario),
        compliance: Vec::new(),
        pairs: Vec::new(),
    };
    eng.record_compliance(None);

    let plan_now = |eng: &Engine| -> Result<Result<Plan, String>, SimError> {
        if eng.states.t + eng.planner.min_horizon > eng.planner.deadline + 1e-9 {
            return Ok(Err("deadline reached".to_string()));
        }
        let cands = candidate_set(eng.scenario, &eng.states);
        match plan_references(eng.scenario, &eng.states, &cands, &eng.planner) {
            Ok(p) => Ok(Ok(p)),
            Err(PlanError::Solver(e)) => Err(ocp_failure(e)),
            Err(e) => Ok(Err(e.to_string())),
        }
    };

    let mut plan = match plan_now(&eng)? {
        Ok(p) => p,
        Err(msg) => return Ok(eng.finish(Outcome::Failed(msg))),
    };
    eng.pairs.push(eng.pair_record(&plan));

    let deadline = t0 + sim.t_max;
    loop {
        if lateral_trigger(&eng.states, &plan.pair, scenario.safety()) {
            break;
        }
        let actual = match eng.behaviors(&plan.fast)? {
            Ok(a) => a,
            Err(msg) => return Ok(eng.finish(Outcome::Failed(msg))),
        };
        let merging_ref = plan.merging.clone();
        let fast_refs = plan.fast.clone();
        eng.advance(
            eng.steps_per_sample,
            &actual,
            &fast_refs,
            &|t| ControlInput::accel(merging_ref.control_at(t)),
            &|t| {
                let (x, v) = merging_ref.state_at(t);
                (x, v, merging_ref.control_at(t))
            },
        )?;
        let t = eng.states.t;
        if t > deadline + 1e-9 {
            let msg = format!("no lateral trigger before the deadline {deadline}");
            return Ok(eng.finish(Outcome::Failed(msg)));
        }

        // measure against the references of the previous plan
        let errors: Vec<f64> = plan
            .fast
            .iter()
            .zip(&eng.states.fast)
            .map(|(r, s)| {
                let (x, v) = r.state_at(t);
                measure_error(s, &VehicleState::new(x, s.y, s.theta, v))
            })
            .collect();
        let out = step_all(&eng.agents, eng.global, &errors, &cfg.compliance, sim.mode)
            .map_err(|e| SimError::Config(e.to_string()))?;
        eng.agents = out.agents;
        eng.global = out.global;
        eng.record_compliance(Some(&out.scores));

        match plan_now(&eng)? {
            Ok(p) => {
                plan = p;
                eng.pairs.push(eng.pair_record(&plan));
            }
            Err(msg) => {
                if lateral_trigger(&eng.states, &plan.pair, scenario.safety()) {
                    break;
                }
                return Ok(eng.finish(Outcome::Failed(msg)));
            }
        }
    }

    // lateral phase
    let t_lateral = eng.states.t;
    let pair = eng.pair_record(&plan);
    let c = scenario.merging();
    let v_c = eng.states.merging.v;
    let lat = LateralSpec {
        speed: v_c,
        wheelbase: c.params.wheelbase,
        lane_width: scenario.road().lane_width - eng.states.merging.y,
        phi_min: c.params.phi_min,
        phi_max: c.params.phi_max,
        weights: cfg.weights,
        t_max: sim.lateral_t_max,
        time_step: sim.time_step,
        resolution: GridResolution::Step(sim.dt_plant),
    };
    let lateral = match solve_lateral_ocp(&lat) {
        Ok(l) => l,
        Err(OcpError::Infeasible) => {
            return Ok(eng.finish(Outcome::Failed("lateral maneuver is infeasible".into())));
        }
        Err(e) => return Err(ocp_failure(e)),
    };
    let n = lateral.phi.len();
    let duration = lateral.duration();
    let Some(fast_refs) = eng.lateral_fast_refs(&plan.pair, n, duration)? else {
        return Ok(eng.finish(Outcome::Failed("fast lane cannot keep headway during the lateral move".into())));
    };
    let actual = match eng.behaviors(&fast_refs)? {
        Ok(a) => a,
        Err(msg) => return Ok(eng.finish(Outcome::Failed(msg))),
    };
    let x_c = eng.states.merging.x;
    let phi = lateral.phi.clone();
    let dt = sim.dt_plant;
    eng.advance(
        n,
        &actual,
        &fast_refs,
        &|t| {
            let k = (((t - t_lateral) / dt) + 1e-7).floor().max(0.0) as usize;
            ControlInput {
                u: 0.0,
                phi: phi.get(k).copied().unwrap_or(0.0),
            }
        },
        &|t| (x_c + v_c * (t - t_lateral), v_c, 0.0),
    )?;
    Ok(eng.finish(Outcome::Done { t_lateral, pair }))
}

/// One Table-I row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub level: f64,
    pub mode: ControllerMode,
    pub feasible: bool,
    pub maneuver_time: Option<f64>,
    pub triplet_energy: Option<f64>,
}

/// Runs every level with the configured controllers and with none, varying
/// only the proclivity of `vehicle_id`. Rows come level-ascending, control
/// first.
pub fn sweep_initial_compliance(
    scenario: &Scenario,
    vehicle_id: &str,
    levels: &[f64],
    cfg: &RunConfig,
) -> Result<Vec<SweepRow>, SimError> {
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    let control_mode = if cfg.sim.mode == ControllerMode::None {
        ControllerMode::Both
    } else {
        cfg.sim.mode
    };
    let mut rows = Vec::with_capacity(2 * sorted.len());
    for q in sorted {
        let sc = scenario
            .with_proclivity(vehicle_id, q)
            .map_err(|e| SimError::Config(e.to_string()))?;
        for mode in [control_mode, ControllerMode::None] {
            let run_cfg = RunConfig {
                sim: SimConfig { mode, ..cfg.sim },
                ..*cfg
            };
            let r = run_maneuver(&sc, &run_cfg)?;
            rows.push(SweepRow {
                level: q,
                mode,
                feasible: r.feasible,
                maneuver_time: r.maneuver_time,
                triplet_energy: r.triplet_energy,
            });
        }
    }
    Ok(rows)
}

/// The same scenario under both controllers, the local one only and the
/// global one only.
pub fn ablation_run(scenario: &Scenario, cfg: &RunConfig) -> Result<Vec<ManeuverResult>, SimError> {
    [ControllerMode::Both, ControllerMode::Local, ControllerMode::Global]
        .into_iter()
        .map(|mode| {
            let run_cfg = RunConfig {
                sim: SimConfig { mode, ..cfg.sim },
                ..*cfg
            };
            run_maneuver(scenario, &run_cfg)
        })
        .collect()
}
