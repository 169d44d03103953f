//! Cooperation compliance control: instantaneous compliance scoring, the
//! windowed average, the global/local refundable-toll integrators and the
//! compliance probability map.
//!
//! All updates are pure state-in/state-out functions; the simulator owns the
//! state and decides which controllers are active.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::VehicleState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComplianceError {
    #[error("invalid compliance config: {0}")]
    Config(String),
    #[error("state error must be non-negative, got {0}")]
    NegativeError(f64),
    #[error("expected {expected} measurements, got {got}")]
    MeasurementCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementMode {
    /// Score decays linearly with the state error.
    Microscopic,
    /// Binary comply / not comply.
    Macroscopic,
}

/// Which integrators run during a maneuver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerMode {
    Both,
    Global,
    Local,
    None,
}

impl ControllerMode {
    pub fn global_active(self) -> bool {
        matches!(self, ControllerMode::Both | ControllerMode::Global)
    }

    pub fn local_active(self) -> bool {
        matches!(self, ControllerMode::Both | ControllerMode::Local)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerMode::Both => "both",
            ControllerMode::Global => "global",
            ControllerMode::Local => "local",
            ControllerMode::None => "none",
        }
    }
}

impl std::str::FromStr for ControllerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "both" => Ok(ControllerMode::Both),
            "global" | "global_only" => Ok(ControllerMode::Global),
            "local" | "local_only" => Ok(ControllerMode::Local),
            "none" => Ok(ControllerMode::None),
            other => Err(format!("unknown controller mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComplianceConfig {
    /// Desired compliance rate `Q*`.
    pub target: f64,
    /// Global integrator gain.
    pub global_gain: f64,
    /// Local integrator gain.
    pub local_gain: f64,
    /// Discount of the windowed average.
    pub window: f64,
    pub weight_proclivity: f64,
    pub weight_global: f64,
    pub weight_local: f64,
    /// State error at which an agent counts as fully non-compliant.
    pub max_error: f64,
    pub measurement: MeasurementMode,
    /// Windowed average an agent starts the maneuver with.
    pub initial_average: f64,
}

impl Default for ComplianceConfig {
    fn default() -> Self {
        Self {
            target: 1.0,
            global_gain: 0.1,
            local_gain: 0.1,
            window: 0.7,
            weight_proclivity: 1.0,
            weight_global: 0.5,
            weight_local: 0.5,
            max_error: 0.2,
            measurement: MeasurementMode::Microscopic,
            initial_average: 1.0,
        }
    }
}

impl ComplianceConfig {
    pub fn validate(&self) -> Result<(), ComplianceError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let bad = |m: &str| Err(ComplianceError::Config(m.to_string()));
        if !unit(self.target) {
            return bad("target must lie in [0, 1]");
        }
        if self.global_gain <= 0.0 || self.local_gain <= 0.0 {
            return bad("gains must be positive");
        }
        if !(self.window > 0.0 && self.window < 1.0) {
            return bad("window must lie in (0, 1)");
        }
        if !(unit(self.weight_proclivity) && unit(self.weight_global) && unit(self.weight_local)) {
            return bad("weights must lie in [0, 1]");
        }
        if self.max_error <= 0.0 {
            return bad("max_error must be positive");
        }
        if !unit(self.initial_average) {
            return bad("initial_average must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentComplianceState {
    /// Initial proclivity `q`.
    pub proclivity: f64,
    /// Local cost `c`.
    pub local_cost: f64,
    /// Windowed average of the compliance score.
    pub average: f64,
    /// Compliance probability `P`.
    pub probability: f64,
    pub controllable: bool,
}

impl AgentComplianceState {
    pub fn new(proclivity: f64, controllable: bool, cfg: &ComplianceConfig) -> Self {
        let mut agent = Self {
            proclivity,
            local_cost: 0.0,
            average: cfg.initial_average,
            probability: 0.0,
            controllable,
        };
        agent.probability = compliance_probability(&agent, &GlobalControllerState::default(), cfg);
        agent
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GlobalControllerState {
    pub cost: f64,
}

/// Saturates to [0, 1].
pub fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Euclidean error over the longitudinal components (x, v).
pub fn measure_error(actual: &VehicleState, reference: &VehicleState) -> f64 {
    (actual.x - reference.x).hypot(actual.v - reference.v)
}

pub fn instantaneous_compliance(error: f64, cfg: &ComplianceConfig) -> Result<f64, ComplianceError> {
    if cfg.max_error <= 0.0 {
        return Err(ComplianceError::Config("max_error must be positive".into()));
    }
    if error < 0.0 || error.is_nan() {
        return Err(ComplianceError::NegativeError(error));
    }
    Ok(match cfg.measurement {
        MeasurementMode::Microscopic => (1.0 - error / cfg.max_error).max(0.0),
        MeasurementMode::Macroscopic => {
            if error <= cfg.max_error {
                1.0
            } else {
                0.0
            }
        }
    })
}

/// Recursive exponentially weighted average.
pub fn update_windowed_average(previous: f64, score: f64, window: f64) -> f64 {
    window * previous + (1.0 - window) * score
}

pub fn update_global(
    global: GlobalControllerState,
    mean_score: f64,
    cfg: &ComplianceConfig,
) -> GlobalControllerState {
    GlobalControllerState {
        cost: (global.cost + cfg.global_gain * (cfg.target - mean_score)).max(0.0),
    }
}

pub fn update_local(agent: AgentComplianceState, cfg: &ComplianceConfig) -> AgentComplianceState {
    AgentComplianceState {
        local_cost: (agent.local_cost + cfg.local_gain * (cfg.target - agent.average)).max(0.0),
        ..agent
    }
}

pub fn compliance_probability(
    agent: &AgentComplianceState,
    global: &GlobalControllerState,
    cfg: &ComplianceConfig,
) -> f64 {
    if agent.controllable {
        return 1.0;
    }
    clamp_unit(
        cfg.weight_proclivity * agent.proclivity
            + cfg.weight_global * global.cost
            + cfg.weight_local * agent.local_cost,
    )
}

/// Outcome of one sampling instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplianceStep {
    pub agents: Vec<AgentComplianceState>,
    pub global: GlobalControllerState,
    /// Instantaneous scores, one per agent.
    pub scores: Vec<f64>,
}

/// One sampling instant of the controller: score, average, global update,
/// local update, probability. Controllable agents always score 1.
pub fn step_all(
    agents: &[AgentComplianceState],
    global: GlobalControllerState,
    errors: &[f64],
    cfg: &ComplianceConfig,
    mode: ControllerMode,
) -> Result<ComplianceStep, ComplianceError> {
    if agents.len() != errors.len() {
        return Err(ComplianceError::MeasurementCount {
            expected: agents.len(),
            got: errors.len(),
        });
    }
    let mut scores = Vec::with_capacity(agents.len());
    for (agent, &e) in agents.iter().zip(errors) {
        let m = if agent.controllable {
            1.0
        } else {
            instantaneous_compliance(e, cfg)?
        };
        scores.push(m);
    }
    if mode == ControllerMode::None {
        return Ok(ComplianceStep {
            agents: agents.to_vec(),
            global,
            scores,
        });
    }

    let averaged: Vec<AgentComplianceState> = agents
        .iter()
        .zip(&scores)
        .map(|(a, &m)| AgentComplianceState {
            average: if a.controllable {
                a.average
            } else {
                update_windowed_average(a.average, m, cfg.window)
            },
            ..*a
        })
        .collect();

    let global = if mode.global_active() && !scores.is_empty() {
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        update_global(global, mean, cfg)
    } else {
        global
    };

    let agents = averaged
        .into_iter()
        .map(|a| {
            let a = if mode.local_active() && !a.controllable {
                update_local(a, cfg)
            } else {
                a
            };
            AgentComplianceState {
                probability: compliance_probability(&a, &global, cfg),
                ..a
            }
        })
        .collect();

    Ok(ComplianceStep {
        agents,
        global,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cfg() -> ComplianceConfig {
        ComplianceConfig::default()
    }

    fn hdv(q: f64) -> AgentComplianceState {
        AgentComplianceState::new(q, false, &cfg())
    }

    #[test]
    fn clamp_branches() {
        assert_eq!(clamp_unit(1.5), 1.0);
        assert_eq!(clamp_unit(0.3), 0.3);
        assert_eq!(clamp_unit(-0.2), 0.0);
    }

    #[test]
    fn error_norm_uses_position_and_speed() {
        let a = VehicleState::new(3.0, 4.0, 0.0, 24.0);
        assert_eq!(measure_error(&a, &a), 0.0);
        let b = VehicleState::new(0.0, -2.0, 0.3, 20.0);
        assert_abs_diff_eq!(measure_error(&a, &b), 5.0, epsilon = 1e-12);
        let c = VehicleState::new(3.0, 0.0, 0.0, 22.0);
        assert_abs_diff_eq!(measure_error(&a, &c), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn instantaneous_score() {
        let c = ComplianceConfig {
            max_error: 5.0,
            ..cfg()
        };
        assert_eq!(instantaneous_compliance(0.0, &c).unwrap(), 1.0);
        assert_eq!(instantaneous_compliance(5.0, &c).unwrap(), 0.0);
        assert_eq!(instantaneous_compliance(2.5, &c).unwrap(), 0.5);
        assert_eq!(instantaneous_compliance(9.0, &c).unwrap(), 0.0);

        let macro_cfg = ComplianceConfig {
            measurement: MeasurementMode::Macroscopic,
            ..c
        };
        assert_eq!(instantaneous_compliance(4.9, &macro_cfg).unwrap(), 1.0);
        assert_eq!(instantaneous_compliance(5.1, &macro_cfg).unwrap(), 0.0);

        let broken = ComplianceConfig { max_error: 0.0, ..c };
        assert!(instantaneous_compliance(1.0, &broken).is_err());
        assert!(instantaneous_compliance(-1.0, &c).is_err());
    }

    #[test]
    fn windowed_average_examples() {
        let two = update_windowed_average(update_windowed_average(0.0, 1.0, 0.7), 1.0, 0.7);
        assert_abs_diff_eq!(two, 0.51, epsilon = 1e-12);
        assert_abs_diff_eq!(update_windowed_average(0.4, 0.4, 0.7), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn windowed_average_matches_discounted_sum() {
        // direct evaluation of (1 - g) * sum_j g^(k-j) m_j
        let g = 0.7;
        let seq = [0.2, 0.9, 0.0, 1.0, 0.5, 0.75, 0.1];
        let mut rec = 0.0;
        for (k, &m) in seq.iter().enumerate() {
            rec = update_windowed_average(rec, m, g);
            let direct: f64 = (0..=k)
                .map(|j| (1.0 - g) * g.powi((k - j) as i32) * seq[j])
                .sum();
            assert_abs_diff_eq!(rec, direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn global_update_examples() {
        let c = cfg();
        let g = |cost| GlobalControllerState { cost };
        assert_eq!(update_global(g(0.0), 1.0, &c).cost, 0.0);
        assert_abs_diff_eq!(update_global(g(0.1), 0.8, &c).cost, 0.12, epsilon = 1e-12);
        assert_abs_diff_eq!(update_global(g(0.05), 1.0, &c).cost, 0.05, epsilon = 1e-12);
        // floored at zero when over-complying against a lower target
        let low = ComplianceConfig { target: 0.5, ..c };
        assert_eq!(update_global(g(0.01), 1.0, &low).cost, 0.0);
    }

    #[test]
    fn local_update_examples() {
        let c = cfg();
        let with = |cost, avg| AgentComplianceState {
            local_cost: cost,
            average: avg,
            ..hdv(0.0)
        };
        assert_eq!(update_local(with(0.0, 1.0), &c).local_cost, 0.0);
        assert_abs_diff_eq!(update_local(with(0.0, 0.0), &c).local_cost, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(update_local(with(0.1, 0.5), &c).local_cost, 0.15, epsilon = 1e-12);
    }

    #[test]
    fn probability_examples() {
        let c = cfg();
        let g0 = GlobalControllerState::default();
        let full = AgentComplianceState { proclivity: 1.0, ..hdv(1.0) };
        assert_eq!(compliance_probability(&full, &g0, &c), 1.0);

        let a = AgentComplianceState {
            proclivity: 0.3,
            local_cost: 0.12,
            ..hdv(0.3)
        };
        let p = compliance_probability(&a, &GlobalControllerState { cost: 0.04 }, &c);
        assert_abs_diff_eq!(p, 0.38, epsilon = 1e-12);

        assert_eq!(compliance_probability(&hdv(0.0), &g0, &c), 0.0);
        let cav = AgentComplianceState::new(0.0, true, &c);
        assert_eq!(compliance_probability(&cav, &g0, &c), 1.0);
    }

    #[test]
    fn cav_population_is_fixed_point() {
        let c = cfg();
        let agents = vec![AgentComplianceState::new(1.0, true, &c); 3];
        let out = step_all(&agents, GlobalControllerState::default(), &[3.0, 0.0, 7.0], &c, ControllerMode::Both)
            .unwrap();
        assert_eq!(out.agents, agents);
        assert_eq!(out.global.cost, 0.0);
        assert!(out.agents.iter().all(|a| a.probability == 1.0));
    }

    #[test]
    fn persistent_defector_probability_rises_to_one() {
        let c = cfg();
        let mut agents = vec![hdv(0.0)];
        let mut g = GlobalControllerState::default();
        let mut last = agents[0].probability;
        let mut reached = false;
        for _ in 0..200 {
            let out = step_all(&agents, g, &[10.0], &c, ControllerMode::Both).unwrap();
            agents = out.agents;
            g = out.global;
            let p = agents[0].probability;
            assert!(p >= last);
            if p == 1.0 {
                reached = true;
            } else {
                assert!(p > last, "strictly increasing before saturation");
            }
            last = p;
        }
        assert!(reached);
    }

    #[test]
    fn compliant_agent_pays_no_local_cost_while_global_grows() {
        let c = cfg();
        let mut agents = vec![hdv(0.0), hdv(0.3)];
        let mut g = GlobalControllerState::default();
        for _ in 0..10 {
            let out = step_all(&agents, g, &[0.0, 8.0], &c, ControllerMode::Both).unwrap();
            agents = out.agents;
            g = out.global;
        }
        assert_eq!(agents[0].local_cost, 0.0);
        assert!(agents[1].local_cost > 0.0);
        assert!(g.cost > 0.0);
        assert!(agents[1].probability - 0.3 > agents[0].probability);
    }

    #[test]
    fn single_controller_modes_freeze_the_other_integrator() {
        let c = cfg();
        let agents = vec![hdv(0.0), hdv(0.3)];
        let g = GlobalControllerState::default();
        let local = step_all(&agents, g, &[0.0, 8.0], &c, ControllerMode::Local).unwrap();
        assert_eq!(local.global.cost, 0.0);
        assert_eq!(local.agents[0].probability, 0.0);
        let global = step_all(&agents, g, &[0.0, 8.0], &c, ControllerMode::Global).unwrap();
        assert!(global.agents.iter().all(|a| a.local_cost == 0.0));
        let d0 = global.agents[0].probability - agents[0].probability;
        let d1 = global.agents[1].probability - agents[1].probability;
        assert_abs_diff_eq!(d0, d1, epsilon = 1e-15);
        let none = step_all(&agents, g, &[0.0, 8.0], &c, ControllerMode::None).unwrap();
        assert_eq!(none.agents, agents);
        assert_eq!(none.scores, vec![1.0, 0.0]);
    }

    #[test]
    fn step_all_rejects_missing_measurements() {
        let c = cfg();
        assert!(step_all(&[hdv(0.1)], GlobalControllerState::default(), &[], &c, ControllerMode::Both).is_err());
    }

    proptest! {
        #[test]
        fn clamp_is_idempotent_and_monotone(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            prop_assert_eq!(clamp_unit(clamp_unit(a)), clamp_unit(a));
            if a <= b { prop_assert!(clamp_unit(a) <= clamp_unit(b)); }
        }

        #[test]
        fn average_stays_in_unit_interval(seq in proptest::collection::vec(0.0f64..=1.0, 1..60), g in 0.01f64..0.99) {
            let mut avg = 0.0;
            for m in seq {
                avg = update_windowed_average(avg, m, g);
                prop_assert!((0.0..=1.0).contains(&avg));
            }
        }

        #[test]
        fn probability_monotone_in_each_input(
            q in 0.0f64..1.0, cg in 0.0f64..2.0, cl in 0.0f64..2.0, dq in 0.0f64..0.5, dc in 0.0f64..0.5,
        ) {
            let c = cfg();
            let base = AgentComplianceState { proclivity: q, local_cost: cl, ..hdv(q) };
            let g = GlobalControllerState { cost: cg };
            let p = compliance_probability(&base, &g, &c);
            let more_q = AgentComplianceState { proclivity: (q + dq).min(1.0), ..base };
            let more_c = AgentComplianceState { local_cost: cl + dc, ..base };
            prop_assert!(compliance_probability(&more_q, &g, &c) >= p);
            prop_assert!(compliance_probability(&more_c, &g, &c) >= p);
            let more_g = GlobalControllerState { cost: cg + dc };
            prop_assert!(compliance_probability(&base, &more_g, &c) >= p);
        }

        #[test]
        fn controllers_rest_at_target(q in 0.0f64..1.0, cg in 0.0f64..1.0, cl in 0.0f64..1.0) {
            let c = cfg();
            let agent = AgentComplianceState { proclivity: q, local_cost: cl, average: 1.0, ..hdv(q) };
            let out = step_all(&[agent], GlobalControllerState { cost: cg }, &[0.0], &c, ControllerMode::Both).unwrap();
            prop_assert_eq!(out.global.cost, cg);
            prop_assert_eq!(out.agents[0].local_cost, cl);
            prop_assert_eq!(out.agents[0].average, 1.0);
        }
    }
}
