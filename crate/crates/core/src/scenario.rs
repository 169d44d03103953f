//! Domain types, physical parameters and the pure kinematic / safety formulas
//! shared by the planner, the behavior model and the simulator.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("speed must be non-negative, got {0}")]
    NegativeSpeed(f64),
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("{component} = {value} outside [{min}, {max}]")]
    BoundViolation {
        component: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// Pose and speed of one vehicle at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, theta: f64, v: f64) -> Self {
        Self { x, y, theta, v }
    }

    /// A vehicle driving straight along a lane centerline.
    pub fn on_lane(x: f64, y: f64, v: f64) -> Self {
        Self::new(x, y, 0.0, v)
    }
}

/// Acceleration and steering angle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub u: f64,
    pub phi: f64,
}

impl ControlInput {
    pub fn accel(u: f64) -> Self {
        Self { u, phi: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub u_min: f64,
    pub u_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Desired (traffic-flow) speed.
    pub v_desired: f64,
    pub wheelbase: f64,
    /// Allowed terminal deviation from `v_desired` for the merging vehicle.
    pub speed_tolerance: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            u_min: -7.0,
            u_max: 3.3,
            phi_min: -0.2,
            phi_max: 0.2,
            v_min: 15.0,
            v_max: 35.0,
            v_desired: 30.0,
            wheelbase: 2.5,
            speed_tolerance: 1.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self, field: &str) -> Result<(), ModelError> {
        if !(self.u_min < 0.0 && 0.0 < self.u_max) {
            return Err(invalid(format!("{field}.u_min"), "require u_min < 0 < u_max"));
        }
        if !(self.phi_min < self.phi_max) {
            return Err(invalid(format!("{field}.phi_min"), "require phi_min < phi_max"));
        }
        if !(0.0 < self.v_min && self.v_min < self.v_max) {
            return Err(invalid(format!("{field}.v_min"), "require 0 < v_min < v_max"));
        }
        if self.v_desired > self.v_max {
            return Err(invalid(format!("{field}.v_desired"), "must not exceed v_max"));
        }
        if self.wheelbase <= 0.0 {
            return Err(invalid(format!("{field}.wheelbase"), "must be positive"));
        }
        if self.speed_tolerance <= 0.0 {
            return Err(invalid(format!("{field}.speed_tolerance"), "must be positive"));
        }
        Ok(())
    }

    pub fn check_speed(&self, v: f64) -> Result<(), ModelError> {
        if v < self.v_min || v > self.v_max {
            return Err(ModelError::BoundViolation {
                component: "v",
                value: v,
                min: self.v_min,
                max: self.v_max,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyParams {
    /// Reaction time multiplying the follower speed (s).
    pub reaction_time: f64,
    /// Constant offset, absorbs the vehicle length (m).
    pub standstill_gap: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            reaction_time: 0.6,
            standstill_gap: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadGeometry {
    pub lane_width: f64,
    /// Sensor range behind the merging vehicle.
    pub range_back: f64,
    /// Sensor range ahead of the obstacle.
    pub range_front: f64,
}

impl Default for RoadGeometry {
    fn default() -> Self {
        Self {
            lane_width: 4.0,
            range_back: 100.0,
            range_front: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleClass {
    Cav,
    Hdv,
    Obstacle,
}

impl VehicleClass {
    /// CAVs always follow the social planner.
    pub fn is_controllable(self) -> bool {
        matches!(self, VehicleClass::Cav)
    }
}

impl fmt::Display for VehicleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VehicleClass::Cav => "cav",
            VehicleClass::Hdv => "hdv",
            VehicleClass::Obstacle => "obstacle",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: String,
    pub class: VehicleClass,
    pub params: VehicleParams,
    pub state: VehicleState,
    /// Initial proclivity to comply, `q` in [0, 1]. Ignored for CAVs.
    pub proclivity: f64,
}

/// Lane-change setup: the fast lane (front to back), the merging CAV and the
/// slow obstacle ahead of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    fast_lane: Vec<Vehicle>,
    merging: Vehicle,
    obstacle: Vehicle,
    road: RoadGeometry,
    safety: SafetyParams,
    t0: f64,
}

impl Scenario {
    /// Validates everything a run relies on: bounds, lane ordering and the
    /// initial headways between fast-lane neighbours and between C and U.
    pub fn new(
        fast_lane: Vec<Vehicle>,
        merging: Vehicle,
        obstacle: Vehicle,
        road: RoadGeometry,
        safety: SafetyParams,
        t0: f64,
    ) -> Result<Self, ModelError> {
        if !(road.lane_width > 0.0 && road.range_back > 0.0 && road.range_front > 0.0) {
            return Err(invalid("road", "lane width and sensor ranges must be positive"));
        }
        if !(safety.reaction_time > 0.0 && safety.standstill_gap > 0.0) {
            return Err(invalid("safety", "reaction time and standstill gap must be positive"));
        }
        if merging.class != VehicleClass::Cav {
            return Err(invalid(format!("vehicle {}", merging.id), "the merging vehicle must be a CAV"));
        }
        if obstacle.class != VehicleClass::Obstacle {
            return Err(invalid(format!("vehicle {}", obstacle.id), "the slow-lane leader must be an obstacle"));
        }
        let lane = road.lane_width;
        for (i, veh) in fast_lane
            .iter()
            .chain([&merging, &obstacle])
            .enumerate()
        {
            let field = format!("vehicle {}", veh.id);
            veh.params.validate(&field)?;
            if veh.class == VehicleClass::Obstacle && i < fast_lane.len() {
                return Err(invalid(field, "obstacles cannot drive in the fast lane"));
            }
            veh.params.check_speed(veh.state.v).map_err(|e| match e {
                ModelError::BoundViolation { value, min, max, .. } => invalid(
                    format!("{field}.state.v"),
                    format!("speed {value} outside [{min}, {max}]"),
                ),
                other => other,
            })?;
            if veh.state.y < -lane / 2.0 || veh.state.y > 1.5 * lane {
                return Err(invalid(format!("{field}.state.y"), "outside the two-lane road"));
            }
            if !(0.0..=1.0).contains(&veh.proclivity) {
                return Err(invalid(format!("{field}.q"), "proclivity must lie in [0, 1]"));
            }
        }
        for pair in fast_lane.windows(2) {
            let (ahead, behind) = (&pair[0], &pair[1]);
            if ahead.state.x <= behind.state.x {
                return Err(invalid(
                    format!("vehicle {}", behind.id),
                    "fast lane must be listed front to back with strictly decreasing x",
                ));
            }
            let need = safety_distance(behind.state.v, &safety)?;
            if ahead.state.x - behind.state.x < need {
                return Err(invalid(
                    format!("vehicle {}", behind.id),
                    format!("initial gap to {} below safety distance {need}", ahead.id),
                ));
            }
        }
        let need = safety_distance(merging.state.v, &safety)?;
        if obstacle.state.x - merging.state.x < need {
            return Err(invalid(
                format!("vehicle {}", merging.id),
                format!("initial gap to obstacle {} below safety distance {need}", obstacle.id),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for veh in fast_lane.iter().chain([&merging, &obstacle]) {
            if !seen.insert(veh.id.as_str()) {
                return Err(invalid(format!("vehicle {}", veh.id), "duplicate id"));
            }
        }
        Ok(Self {
            fast_lane,
            merging,
            obstacle,
            road,
            safety,
            t0,
        })
    }

    pub fn fast_lane(&self) -> &[Vehicle] {
        &self.fast_lane
    }

    pub fn merging(&self) -> &Vehicle {
        &self.merging
    }

    pub fn obstacle(&self) -> &Vehicle {
        &self.obstacle
    }

    pub fn road(&self) -> &RoadGeometry {
        &self.road
    }

    pub fn safety(&self) -> &SafetyParams {
        &self.safety
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Copy with one fast-lane vehicle's proclivity replaced.
    pub fn with_proclivity(&self, id: &str, q: f64) -> Result<Self, ModelError> {
        let mut fast = self.fast_lane.clone();
        let veh = fast
            .iter_mut()
            .find(|v| v.id == id)
            .ok_or_else(|| invalid(format!("vehicle {id}"), "not in the fast lane"))?;
        veh.proclivity = q;
        Self::new(
            fast,
            self.merging.clone(),
            self.obstacle.clone(),
            self.road,
            self.safety,
            self.t0,
        )
    }
}

/// Speed-dependent minimum gap `tau * v + delta` to the preceding vehicle.
pub fn safety_distance(v: f64, safety: &SafetyParams) -> Result<f64, ModelError> {
    if v < 0.0 {
        return Err(ModelError::NegativeSpeed(v));
    }
    Ok(safety.reaction_time * v + safety.standstill_gap)
}

/// Squared deviation from the desired speed.
pub fn speed_disruption(v: f64, v_desired: f64) -> f64 {
    (v - v_desired).powi(2)
}

/// One forward-Euler step of the control-affine kinematic bicycle.
///
/// The speed bound is checked, not enforced: a violation comes back as an
/// error carrying the offending value.
pub fn step_dynamics(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState, ModelError> {
    if dt <= 0.0 {
        return Err(ModelError::NonPositiveStep(dt));
    }
    let (sin, cos) = state.theta.sin_cos();
    let v = state.v;
    let next = VehicleState {
        x: state.x + v * cos * dt - v * sin * input.phi * dt,
        y: state.y + v * sin * dt + v * cos * input.phi * dt,
        theta: state.theta + v / params.wheelbase * input.phi * dt,
        v: state.v + input.u * dt,
    };
    // tolerate the rounding of a plan that rides exactly on the bound
    let slack = 1e-9;
    if next.v < params.v_min - slack || next.v > params.v_max + slack {
        return Err(ModelError::BoundViolation {
            component: "v",
            value: next.v,
            min: params.v_min,
            max: params.v_max,
        });
    }
    Ok(next)
}
