//! Scenario files, trace tables and run reports.
//!
//! Scenario files are JSON. Every section except `vehicles` may be omitted or
//! given partially; missing keys take the library defaults and are listed in
//! [`LoadedScenario::defaults`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::compliance::{ComplianceConfig, ControllerMode};
use crate::ocp::CostWeights;
use crate::scenario::{ModelError, RoadGeometry, SafetyParams, Scenario, Vehicle, VehicleClass, VehicleParams, VehicleState};
use crate::sim::{metrics, ManeuverResult, RunConfig, SimConfig, SweepRow};

pub const SCHEMA_VERSION: u32 = 1;

const BUNDLED: &str = include_str!("../scenarios/paper_default.json");

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{origin}: line {line}, column {column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{origin}: field `{field}`: {message}")]
    Schema {
        origin: String,
        field: String,
        message: String,
    },
    #[error("{origin}: {field}: {message}")]
    Invalid {
        origin: String,
        field: String,
        message: String,
    },
    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
}

impl IoError {
    /// True for problems with the input file rather than with the output.
    pub fn is_input(&self) -> bool {
        !matches!(self, IoError::Write { .. })
    }

    fn write(path: &Path, e: impl std::fmt::Display) -> Self {
        IoError::Write {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Fast,
    Merging,
    Obstacle,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleEntry {
    pub id: String,
    pub class: VehicleClass,
    pub role: Role,
    pub state: VehicleState,
    #[serde(default)]
    pub params: VehicleParams,
    /// Initial proclivity; only meaningful for HDVs.
    #[serde(default = "one")]
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default)]
    pub t0: f64,
    #[serde(default)]
    pub road: RoadGeometry,
    #[serde(default)]
    pub safety: SafetyParams,
    #[serde(default)]
    pub compliance: ComplianceConfig,
    #[serde(default)]
    pub weights: CostWeights,
    #[serde(default)]
    pub sim: SimConfig,
    /// Fast lane front to back, plus one merging vehicle and one obstacle.
    pub vehicles: Vec<VehicleEntry>,
}

impl ScenarioFile {
    /// Fully explicit file for a scenario and its configuration.
    pub fn from_parts(scenario: &Scenario, config: &RunConfig) -> Self {
        let entry = |v: &Vehicle, role| VehicleEntry {
            id: v.id.clone(),
            class: v.class,
            role,
            state: v.state,
            params: v.params,
            q: v.proclivity,
        };
        let mut vehicles: Vec<VehicleEntry> = scenario.fast_lane().iter().map(|v| entry(v, Role::Fast)).collect();
        vehicles.push(entry(scenario.merging(), Role::Merging));
        vehicles.push(entry(scenario.obstacle(), Role::Obstacle));
        Self {
            schema_version: SCHEMA_VERSION,
            t0: scenario.t0(),
            road: *scenario.road(),
            safety: *scenario.safety(),
            compliance: config.compliance,
            weights: config.weights,
            sim: config.sim,
            vehicles,
        }
    }
}

/// A validated scenario with its run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub config: RunConfig,
    /// One `key = value` line per value not given in the file.
    pub defaults: Vec<String>,
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, &path.display().to_string())
}

/// The bundled lane-change scenario.
pub fn paper_default() -> LoadedScenario {
    parse_scenario(BUNDLED, "paper_default.json").expect("bundled scenario is valid")
}

pub fn paper_default_json() -> &'static str {
    BUNDLED
}

pub fn parse_scenario(text: &str, origin: &str) -> Result<LoadedScenario, IoError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let inner = e.inner();
        if inner.is_syntax() || inner.is_eof() {
            IoError::Parse {
                origin: origin.into(),
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        } else {
            IoError::Schema {
                origin: origin.into(),
                field: e.path().to_string(),
                message: inner.to_string(),
            }
        }
    })?;
    de.end().map_err(|e| IoError::Parse {
        origin: origin.into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let raw: Value = serde_json::from_str(text).expect("text already parsed");
    build(file, &raw, origin)
}

fn object_keys(v: Option<&Value>) -> Vec<String> {
    match v {
        Some(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

fn missing_keys<T: Serialize>(prefix: &str, given: Option<&Value>, default: &T, out: &mut Vec<String>) {
    let present = object_keys(given);
    if let Value::Object(m) = serde_json::to_value(default).expect("config serializes") {
        for (k, v) in m {
            if !present.contains(&k) {
                out.push(format!("{prefix}.{k} = {v}"));
            }
        }
    }
}

fn build(mut file: ScenarioFile, raw: &Value, origin: &str) -> Result<LoadedScenario, IoError> {
    let schema = |field: &str, message: String| IoError::Schema {
        origin: origin.into(),
        field: field.into(),
        message,
    };
    let invalid = |field: String, message: String| IoError::Invalid {
        origin: origin.into(),
        field,
        message,
    };
    if file.schema_version != SCHEMA_VERSION {
        return Err(schema(
            "schema_version",
            format!("unsupported version {}, expected {SCHEMA_VERSION}", file.schema_version),
        ));
    }

    let mut defaults = Vec::new();
    if raw.get("t0").is_none() {
        defaults.push(format!("t0 = {}", file.t0));
    }
    missing_keys("road", raw.get("road"), &file.road, &mut defaults);
    missing_keys("safety", raw.get("safety"), &file.safety, &mut defaults);
    missing_keys("compliance", raw.get("compliance"), &file.compliance, &mut defaults);
    missing_keys("weights", raw.get("weights"), &file.weights, &mut defaults);
    missing_keys("sim", raw.get("sim"), &file.sim, &mut defaults);

    let raw_vehicles = raw.get("vehicles").and_then(Value::as_array);
    for (i, entry) in file.vehicles.iter_mut().enumerate() {
        let raw_entry = raw_vehicles.and_then(|a| a.get(i));
        let raw_params = raw_entry.and_then(|e| e.get("params"));
        let prefix = format!("vehicle {}", entry.id);
        // humans and obstacles want to keep the speed they start with
        if entry.class != VehicleClass::Cav && raw_params.and_then(|p| p.get("v_desired")).is_none() {
            entry.params.v_desired = entry.state.v.clamp(entry.params.v_min, entry.params.v_max);
        }
        missing_keys(&format!("{prefix}.params"), raw_params, &entry.params, &mut defaults);
        if entry.class == VehicleClass::Hdv && raw_entry.and_then(|e| e.get("q")).is_none() {
            defaults.push(format!("{prefix}.q = {}", entry.q));
        }
    }

    let mut fast = Vec::new();
    let mut merging = Vec::new();
    let mut obstacle = Vec::new();
    for e in file.vehicles {
        let v = Vehicle {
            id: e.id,
            class: e.class,
            params: e.params,
            state: e.state,
            proclivity: e.q,
        };
        match e.role {
            Role::Fast => fast.push(v),
            Role::Merging => merging.push(v),
            Role::Obstacle => obstacle.push(v),
        }
    }
    let exactly_one = |mut list: Vec<Vehicle>, role: &str| match list.len() {
        1 => Ok(list.pop().expect("one element")),
        n => Err(invalid("vehicles".into(), format!("need exactly one {role} vehicle, found {n}"))),
    };
    let merging = exactly_one(merging, "merging")?;
    let obstacle = exactly_one(obstacle, "obstacle")?;
    if fast.is_empty() {
        return Err(invalid("vehicles".into(), "the fast lane is empty".into()));
    }
    let scenario = Scenario::new(fast, merging, obstacle, file.road, file.safety, file.t0).map_err(|e| match e {
        ModelError::Invalid { field, message } => invalid(field, message),
        other => invalid("vehicles".into(), other.to_string()),
    })?;
    let config = RunConfig {
        sim: file.sim,
        compliance: file.compliance,
        weights: file.weights,
    };
    config.sim.validate().map_err(|e| invalid("sim".into(), e.to_string()))?;
    config
        .compliance
        .validate()
        .map_err(|e| invalid("compliance".into(), e.to_string()))?;
    Ok(LoadedScenario {
        scenario,
        config,
        defaults,
    })
}

pub fn scenario_to_json(scenario: &Scenario, config: &RunConfig) -> String {
    serde_json::to_string_pretty(&ScenarioFile::from_parts(scenario, config)).expect("scenario serializes")
}

pub fn write_scenario(path: &Path, scenario: &Scenario, config: &RunConfig) -> Result<(), IoError> {
    fs::write(path, scenario_to_json(scenario, config)).map_err(|e| IoError::write(path, e))
}

fn num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        x.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, IoError> {
    csv::Writer::from_path(path).map_err(|e| IoError::write(path, e))
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<PathBuf, IoError> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| IoError::write(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| IoError::write(path, e))?;
    }
    w.flush().map_err(|e| IoError::write(path, e))?;
    Ok(path.to_path_buf())
}

pub const POSITIONS_HEADER: [&str; 7] = ["t", "id", "x", "y", "theta", "v", "u"];
pub const COMPLIANCE_HEADER: [&str; 7] = ["t", "id", "M", "M_bar", "P", "c", "C_global"];
pub const REFERENCES_HEADER: [&str; 5] = ["t", "id", "x_ref", "v_ref", "u_ref"];
pub const SWEEP_HEADER: [&str; 5] = ["level", "mode", "feasible", "maneuver_time", "triplet_energy"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceFiles {
    pub positions: PathBuf,
    pub compliance: PathBuf,
    pub references: PathBuf,
}

/// Writes `positions.csv`, `compliance.csv` and `references.csv` into `dir`.
pub fn write_traces(result: &ManeuverResult, dir: &Path) -> Result<TraceFiles, IoError> {
    fs::create_dir_all(dir).map_err(|e| IoError::write(dir, e))?;
    let times = &result.times;
    let positions = write_rows(
        &dir.join("positions.csv"),
        &POSITIONS_HEADER,
        times.iter().enumerate().flat_map(|(k, &t)| {
            result.vehicles.iter().map(move |tr| {
                let s = tr.states[k];
                vec![num(t), tr.id.clone(), num(s.x), num(s.y), num(s.theta), num(s.v), num(tr.controls[k].u)]
            })
        }),
    )?;
    let compliance = write_rows(
        &dir.join("compliance.csv"),
        &COMPLIANCE_HEADER,
        result.compliance.iter().flat_map(|rec| {
            rec.agents.iter().map(move |a| {
                vec![
                    num(rec.t),
                    a.id.clone(),
                    opt(a.score),
                    num(a.average),
                    num(a.probability),
                    num(a.local_cost),
                    num(rec.global_cost),
                ]
            })
        }),
    )?;
    let references = write_rows(
        &dir.join("references.csv"),
        &REFERENCES_HEADER,
        times.iter().enumerate().flat_map(|(k, &t)| {
            result
                .references
                .iter()
                .map(move |r| vec![num(t), r.id.clone(), num(r.x[k]), num(r.v[k]), num(r.u[k])])
        }),
    )?;
    Ok(TraceFiles {
        positions,
        compliance,
        references,
    })
}

fn finite_or_inf<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_f64(*v),
        None => s.serialize_str("Inf"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Disruption {
    pub id: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsBlock {
    pub feasible: bool,
    pub failure: Option<String>,
    pub mode: ControllerMode,
    pub t0: f64,
    pub t_lateral: Option<f64>,
    #[serde(serialize_with = "finite_or_inf")]
    pub maneuver_time: Option<f64>,
    #[serde(serialize_with = "finite_or_inf")]
    pub triplet_energy: Option<f64>,
    pub lead: Option<String>,
    pub rear: Option<String>,
    pub disruption: Vec<Disruption>,
}

impl MetricsBlock {
    pub fn new(result: &ManeuverResult, scenario: &Scenario) -> Self {
        let m = metrics(result, scenario);
        Self {
            feasible: result.feasible,
            failure: result.failure.clone(),
            mode: result.mode,
            t0: result.t0,
            t_lateral: result.t_lateral,
            maneuver_time: m.maneuver_time,
            triplet_energy: m.triplet_energy,
            lead: result.pair.as_ref().and_then(|p| p.lead.clone()),
            rear: result.pair.as_ref().and_then(|p| p.rear.clone()),
            disruption: m
                .disruption
                .into_iter()
                .map(|(id, value)| Disruption { id, value })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub metrics: MetricsBlock,
    pub defaults: Vec<String>,
    pub files: TraceFiles,
}

/// Writes the trace tables and `metrics.json` into `dir`.
pub fn write_run(
    result: &ManeuverResult,
    scenario: &Scenario,
    defaults: &[String],
    dir: &Path,
) -> Result<RunReport, IoError> {
    let files = write_traces(result, dir)?;
    let report = RunReport {
        metrics: MetricsBlock::new(result, scenario),
        defaults: defaults.to_vec(),
        files,
    };
    let path = dir.join("metrics.json");
    let text = serde_json::to_string_pretty(&report).map_err(|e| IoError::write(&path, e))?;
    fs::write(&path, text).map_err(|e| IoError::write(&path, e))?;
    Ok(report)
}

fn sweep_record(r: &SweepRow) -> Vec<String> {
    vec![
        num(r.level),
        r.mode.as_str().to_string(),
        r.feasible.to_string(),
        opt(r.maneuver_time),
        opt(r.triplet_energy),
    ]
}

/// Table of a compliance sweep. Infeasible runs leave the numeric cells empty.
pub fn write_sweep(rows: &[SweepRow], path: &Path) -> Result<PathBuf, IoError> {
    write_rows(path, &SWEEP_HEADER, rows.iter().map(sweep_record))
}

/// Same table as [`write_sweep`], into any writer.
pub fn write_sweep_to<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record(sweep_record(r))?;
    }
    w.flush()?;
    Ok(())
}

pub const ABLATION_HEADER: [&str; 7] = ["mode", "t", "id", "M_bar", "P", "c", "C_global"];

/// Compliance traces of several runs side by side, one block per mode.
pub fn write_ablation(results: &[ManeuverResult], path: &Path) -> Result<PathBuf, IoError> {
    write_rows(
        path,
        &ABLATION_HEADER,
        results.iter().flat_map(|r| {
            r.compliance.iter().flat_map(move |rec| {
                rec.agents.iter().map(move |a| {
                    vec![
                        r.mode.as_str().to_string(),
                        num(rec.t),
                        a.id.clone(),
                        num(a.average),
                        num(a.probability),
                        num(a.local_cost),
                        num(rec.global_cost),
                    ]
                })
            })
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_default_has_the_five_fast_lane_states() {
        let l = paper_default();
        let fast = l.scenario.fast_lane();
        let want = [(90.0, 28.0), (70.0, 27.0), (40.0, 27.0), (20.0, 26.0), (0.0, 25.0)];
        assert_eq!(fast.len(), 5);
        for (veh, (x, v)) in fast.iter().zip(want) {
            assert_eq!(veh.state, VehicleState::new(x, 4.0, 0.0, v));
        }
        assert_eq!(fast[3].proclivity, 0.3);
        assert_eq!(fast[3].params.v_desired, 26.0);
        assert_eq!(fast[1].params.v_desired, 30.0);
        assert_eq!(l.scenario.merging().id, "C");
    }

    #[test]
    fn defaults_are_echoed() {
        let l = paper_default();
        assert!(l.defaults.iter().any(|d| d == "compliance.max_error = 0.2"));
        assert!(l.defaults.iter().any(|d| d == "vehicle 4.params.v_desired = 26.0"));
        assert!(l.defaults.iter().any(|d| d.starts_with("sim.mode")));
        assert!(!l.defaults.iter().any(|d| d.starts_with("safety.")));
        assert!(!l.defaults.iter().any(|d| d.starts_with("t0")));
    }

    fn with_vehicles(vehicles: &str) -> String {
        format!(r#"{{"schema_version": 1, "vehicles": {vehicles}}}"#)
    }

    #[test]
    fn empty_vehicle_list_is_rejected() {
        let err = parse_scenario(&with_vehicles("[]"), "t").unwrap_err();
        assert!(matches!(err, IoError::Invalid { ref field, .. } if field == "vehicles"), "{err}");
        assert!(err.to_string().contains("merging"));
    }

    #[test]
    fn out_of_range_speed_names_the_vehicle() {
        let text = BUNDLED.replace(r#""v": 26.0"#, r#""v": 40.0"#);
        let err = parse_scenario(&text, "t").unwrap_err();
        match err {
            IoError::Invalid { field, .. } => assert!(field.contains("vehicle 4"), "{field}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_fields_report_their_path() {
        let text = BUNDLED.replace(r#""window": 0.7"#, r#""window": 0.7, "windw": 1"#);
        match parse_scenario(&text, "t").unwrap_err() {
            IoError::Schema { field, message, .. } => {
                assert_eq!(field, "compliance.windw");
                assert!(message.contains("windw"));
            }
            other => panic!("{other}"),
        }
        let text = BUNDLED.replace(r#""q": 0.3"#, r#""q": "high""#);
        match parse_scenario(&text, "t").unwrap_err() {
            IoError::Schema { field, .. } => assert_eq!(field, "vehicles[3].q"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let err = parse_scenario("{\n  \"schema_version\": 1,\n  oops\n}", "t").unwrap_err();
        match err {
            IoError::Parse { line, column, .. } => assert_eq!((line, column), (3, 3)),
            other => panic!("{other}"),
        }
        assert!(parse_scenario("{\"schema_version\": 1, \"vehicles\": []} x", "t").is_err());
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let text = BUNDLED.replace(r#""schema_version": 1"#, r#""schema_version": 2"#);
        assert!(matches!(parse_scenario(&text, "t"), Err(IoError::Schema { .. })));
    }

    #[test]
    fn initial_headway_violation_is_rejected() {
        let text = BUNDLED.replace(r#""x": 40.0"#, r#""x": 30.0"#);
        assert!(matches!(parse_scenario(&text, "t"), Err(IoError::Invalid { .. })));
    }

    #[test]
    fn explicit_file_round_trips_without_defaults() {
        let l = paper_default();
        let json = scenario_to_json(&l.scenario, &l.config);
        let back = parse_scenario(&json, "rt").unwrap();
        assert_eq!(back.scenario, l.scenario);
        assert_eq!(back.config, l.config);
        assert!(back.defaults.is_empty(), "{:?}", back.defaults);
    }

    #[test]
    fn infeasible_metrics_serialize_as_inf() {
        let b = MetricsBlock {
            feasible: false,
            failure: Some("x".into()),
            mode: ControllerMode::None,
            t0: 0.0,
            t_lateral: None,
            maneuver_time: None,
            triplet_energy: None,
            lead: None,
            rear: None,
            disruption: vec![],
        };
        let v = serde_json::to_value(&b).unwrap();
        assert_eq!(v["maneuver_time"], "Inf");
        assert_eq!(v["triplet_energy"], "Inf");
        assert_eq!(v["mode"], "none");
    }
}
