//! Actual trajectories of fast-lane vehicles given their references and
//! compliance probabilities.

use thiserror::Error;

use crate::ocp::{solve_hdv_behavior_ocp, DisruptionMode, GapConstraint, GapPartner, OcpError, OcpSpec, Trajectory};
use crate::scenario::{SafetyParams, VehicleParams, VehicleState};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("behavior of vehicle {id}: {source}")]
pub struct BehaviorError {
    pub id: String,
    pub source: OcpError,
}

#[derive(Debug, Clone)]
pub struct BehaviorRequest<'a> {
    pub id: &'a str,
    pub state: VehicleState,
    pub params: VehicleParams,
    pub reference: &'a Trajectory,
    /// Compliance probability; controllable vehicles pass 1.
    pub probability: f64,
    /// Trajectory of the vehicle ahead, already resolved this step.
    pub predecessor: Option<&'a Trajectory>,
    pub safety: SafetyParams,
    pub disruption: DisruptionMode,
}

/// Trajectory the vehicle will actually drive over the reference horizon.
pub fn actual_trajectory(req: &BehaviorRequest) -> Result<Trajectory, BehaviorError> {
    let r = req.reference;
    let mut spec = OcpSpec::new(req.state.x, req.state.v, r.t_start(), r.t_end(), r.len(), req.params);
    spec.disruption = req.disruption;
    if let Some(p) = req.predecessor {
        spec.headway.push(GapConstraint::behind(GapPartner::Planned(p.clone()), req.safety));
    }
    solve_hdv_behavior_ocp(r, req.probability, &spec).map_err(|source| BehaviorError {
        id: req.id.to_string(),
        source,
    })
}
