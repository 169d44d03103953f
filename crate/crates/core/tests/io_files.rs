use ccc_core::io::{
    paper_default, parse_scenario, scenario_to_json, write_run, write_sweep, COMPLIANCE_HEADER, POSITIONS_HEADER,
    REFERENCES_HEADER, SWEEP_HEADER,
};
use ccc_core::scenario::{Scenario, Vehicle};
use ccc_core::sim::{run_maneuver, SweepRow};
use ccc_core::compliance::ControllerMode;
use proptest::prelude::*;

fn read_csv(path: &std::path::Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn numeric(cell: &str) -> f64 {
    cell.parse().unwrap_or_else(|_| panic!("not a number: {cell:?}"))
}

#[test]
fn trace_tables_reparse_with_fixed_columns() {
    let l = paper_default();
    let r = run_maneuver(&l.scenario, &l.config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = write_run(&r, &l.scenario, &l.defaults, dir.path()).unwrap();

    let (h, rows) = read_csv(&report.files.positions);
    assert_eq!(h, POSITIONS_HEADER);
    assert_eq!(rows.len(), 7 * r.times.len());
    for row in &rows {
        assert_eq!(row.len(), 7);
        for (i, cell) in row.iter().enumerate() {
            if i != 1 {
                numeric(cell);
            }
        }
    }
    // full precision: the file reproduces the trace bitwise
    let c_rows: Vec<&Vec<String>> = rows.iter().filter(|row| row[1] == "C").collect();
    let c = r.vehicle("C").unwrap();
    for (row, s) in c_rows.iter().zip(&c.states) {
        assert_eq!(numeric(&row[2]), s.x);
        assert_eq!(numeric(&row[5]), s.v);
    }

    let (h, rows) = read_csv(&report.files.compliance);
    assert_eq!(h, COMPLIANCE_HEADER);
    assert_eq!(rows.len(), 5 * r.compliance.len());
    assert!(rows[..5].iter().all(|row| row[2].is_empty()));
    assert!(rows[5..].iter().all(|row| (0.0..=1.0).contains(&numeric(&row[2]))));

    let (h, rows) = read_csv(&report.files.references);
    assert_eq!(h, REFERENCES_HEADER);
    assert_eq!(rows.len(), 6 * r.times.len());

    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["metrics"]["feasible"], true);
    assert!(metrics["metrics"]["maneuver_time"].is_f64());
    assert!(report.files.positions.exists() && report.files.compliance.exists() && report.files.references.exists());
}

#[test]
fn all_cav_run_writes_unit_probabilities() {
    let l = paper_default();
    let s = &l.scenario;
    let fast: Vec<Vehicle> = s
        .fast_lane()
        .iter()
        .map(|v| Vehicle {
            class: ccc_core::scenario::VehicleClass::Cav,
            ..v.clone()
        })
        .collect();
    let s = Scenario::new(fast, s.merging().clone(), s.obstacle().clone(), *s.road(), *s.safety(), s.t0()).unwrap();
    let r = run_maneuver(&s, &l.config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = write_run(&r, &s, &[], dir.path()).unwrap();
    let (_, rows) = read_csv(&report.files.compliance);
    assert!(rows.iter().all(|row| numeric(&row[4]) == 1.0));
}

#[test]
fn sweep_table_leaves_infeasible_cells_empty() {
    let rows = vec![
        SweepRow {
            level: 0.0,
            mode: ControllerMode::Both,
            feasible: true,
            maneuver_time: Some(3.4),
            triplet_energy: Some(30.25),
        },
        SweepRow {
            level: 0.0,
            mode: ControllerMode::None,
            feasible: false,
            maneuver_time: None,
            triplet_energy: None,
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = write_sweep(&rows, &dir.path().join("sweep.csv")).unwrap();
    let (h, body) = read_csv(&path);
    assert_eq!(h, SWEEP_HEADER);
    assert_eq!(body[0], ["0", "both", "true", "3.4", "30.25"]);
    assert_eq!(body[1], ["0", "none", "false", "", ""]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenario_files_round_trip(
        dx in proptest::collection::vec(-3.0f64..3.0, 7),
        dv in proptest::collection::vec(-1.5f64..1.5, 7),
        q in 0.0f64..=1.0,
        gap in 1.0f64..3.0,
        window in 0.05f64..0.95,
    ) {
        let l = paper_default();
        let s = &l.scenario;
        let nudge = |v: &Vehicle, i: usize| {
            let mut v = v.clone();
            v.state.x += dx[i];
            v.state.v += dv[i];
            v
        };
        let mut fast: Vec<Vehicle> = s.fast_lane().iter().enumerate().map(|(i, v)| nudge(v, i)).collect();
        fast[3].proclivity = q;
        let safety = ccc_core::scenario::SafetyParams { standstill_gap: gap, ..*s.safety() };
        let Ok(sc) = Scenario::new(fast, nudge(s.merging(), 5), nudge(s.obstacle(), 6), *s.road(), safety, 0.25) else {
            return Ok(());
        };
        let mut cfg = l.config;
        cfg.compliance.window = window;
        let back = parse_scenario(&scenario_to_json(&sc, &cfg), "rt").unwrap();
        prop_assert_eq!(back.scenario, sc);
        prop_assert_eq!(back.config, cfg);
    }
}
