//! End-to-end commands on a shortened benchmark.

mod common;

use std::fs;
use std::path::Path;

use galerkin_fdi::io::RunManifest;
use galerkin_fdi::par::Parallelism;
use galerkin_fdi::pipeline::{self, CheckKind, Pipeline, WEIGHTS_FILE};
use galerkin_fdi::rbf::{RbfLattice, WeightFile};
use galerkin_fdi::scenario::{FaultSelector, Scenario};
use galerkin_fdi::FdiError;

use common::short_scenario;

fn read_manifest(dir: &Path) -> RunManifest {
    galerkin_fdi::io::read_json(&dir.join("manifest.json")).unwrap()
}

/// simulate, train and monitor into `dir`; returns every file's bytes by name.
fn full_run(p: &Pipeline, dir: &Path) -> Vec<(String, Vec<u8>)> {
    pipeline::cmd_simulate(p, FaultSelector::Test(1), &dir.join("sim"), true).unwrap();
    pipeline::cmd_train(p, &dir.join("train"), true).unwrap();
    let weights = dir.join("train").join(WEIGHTS_FILE);
    for sel in ["none", "test:1", "test:2"] {
        let sel: FaultSelector = sel.parse().unwrap();
        pipeline::cmd_monitor(p, &weights, sel, &dir.join(format!("monitor_{}", sel.tag())), true).unwrap();
    }
    let mut files = Vec::new();
    for sub in ["sim", "train", "monitor_normal", "monitor_test1", "monitor_test2"] {
        let m = read_manifest(&dir.join(sub));
        for o in m.outputs {
            let bytes = fs::read(dir.join(sub).join(&o.path)).unwrap();
            assert_eq!(galerkin_fdi::io::sha256_hex(&bytes), o.sha256, "{sub}/{}", o.path);
            files.push((format!("{sub}/{}", o.path), bytes));
        }
    }
    files
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = full_run(&Pipeline::new(short_scenario(), Parallelism::Parallel).unwrap(), a.path());
    let fb = full_run(&Pipeline::new(short_scenario(), Parallelism::Sequential).unwrap(), b.path());
    assert_eq!(fa.len(), fb.len());
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs");
    }
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.contains(&"train/weights.bin"));
    assert!(names.contains(&"monitor_test1/decisions_test1.jsonl"));
    assert!(names.contains(&"monitor_normal/monitor_normal.csv"));
}

#[test]
fn weight_file_round_trips_through_monitor() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(short_scenario(), Parallelism::Parallel).unwrap();
    let (_, trained) = pipeline::cmd_train(&p, dir.path(), false).unwrap();
    let weights = dir.path().join(WEIGHTS_FILE);
    let file = WeightFile::read(&weights).unwrap();
    assert!(file.header.diff(&trained.model.header()).is_empty());
    let (model, xi) = pipeline::load_model(&p, &weights).unwrap();
    assert_eq!(model.weights, trained.model.weights);
    assert_eq!(xi.xi, trained.xi.xi);

    let (_, mon) = pipeline::cmd_monitor(&p, &weights, FaultSelector::None, dir.path(), false).unwrap();
    let csv = fs::read_to_string(dir.path().join("monitor_normal.csv")).unwrap();
    assert!(csv.starts_with("t,i,k,xtilde,l1norm,threshold,crossed\n"));
    let jsonl = fs::read_to_string(dir.path().join("decisions_normal.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), mon.log.events.len());
    for line in jsonl.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("kind").is_some() && v.get("time").is_some() && v.get("detail").is_some());
    }
}

#[test]
fn mismatched_header_lists_fields() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(short_scenario(), Parallelism::Parallel).unwrap();
    pipeline::cmd_train(&p, dir.path(), false).unwrap();
    let mut other = short_scenario();
    other.lattice = RbfLattice::new(
        vec![[17.0, 24.0], [-1.0, 3.0], [0.0, 3.5], [-2.0, 4.0]],
        vec![15, 9, 8, 13],
        0.5,
    )
    .unwrap();
    let q = Pipeline::new(other, Parallelism::Parallel).unwrap();
    let err = pipeline::load_model(&q, &dir.path().join(WEIGHTS_FILE)).unwrap_err();
    assert!(err.is_config());
    let msg = err.to_string();
    assert!(msg.contains("counts") || msg.contains("bounds"), "{msg}");
}

#[test]
fn missing_xi_star_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(short_scenario(), Parallelism::Parallel).unwrap();
    pipeline::cmd_train(&p, dir.path(), false).unwrap();
    fs::remove_file(dir.path().join(pipeline::XI_STAR_FILE)).unwrap();
    let err = pipeline::load_model(&p, &dir.path().join(WEIGHTS_FILE)).unwrap_err();
    assert!(err.is_config(), "{err}");
}

#[test]
fn checks_need_a_fault() {
    let p = Pipeline::new(short_scenario(), Parallelism::Parallel).unwrap();
    let err = p.check(CheckKind::Detectability, FaultSelector::None, None).unwrap_err();
    assert!(matches!(err, FdiError::Config { .. }), "{err}");
}

#[test]
fn scaled_fault_is_not_detectable() {
    let mut s = short_scenario();
    s.faults.trained[1] = s.faults.trained[1].scaled(0.01);
    let p = Pipeline::new(s, Parallelism::Parallel).unwrap();
    let report = p.check(CheckKind::Detectability, FaultSelector::Trained(2), None).unwrap();
    let d = report.detectability.unwrap();
    assert!(!d.verdict);
    assert!(d.components.iter().all(|c| !c.magnitude_ok));
}

#[test]
fn check_report_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(short_scenario(), Parallelism::Parallel).unwrap();
    let (manifest, report) =
        pipeline::cmd_check(&p, None, CheckKind::Isolatability, FaultSelector::Test(1), dir.path(), false).unwrap();
    assert_eq!(report.xi_source, "scenario");
    let iso = report.isolatability.unwrap();
    assert_eq!(iso.matched_mode, 1);
    assert_eq!(iso.modes.iter().map(|m| m.mode).collect::<Vec<_>>(), vec![2, 3]);
    assert_eq!(manifest.outputs[0].path, "check_isolatability_test1.json");
}

#[test]
fn simulate_writes_modal_and_field_tables() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(short_scenario(), Parallelism::Parallel).unwrap();
    let m = pipeline::cmd_simulate(&p, FaultSelector::None, dir.path(), false).unwrap();
    let names: Vec<&str> = m.outputs.iter().map(|o| o.path.as_str()).collect();
    assert_eq!(names, vec!["modal_normal.csv", "field_normal.csv"]);
    let modal = fs::read_to_string(dir.path().join("modal_normal.csv")).unwrap();
    let mut lines = modal.lines();
    assert_eq!(lines.next(), Some("t,xs1,xs2,xs3,u1"));
    assert_eq!(lines.next().unwrap().split(',').count(), 5);
    // 12 s at dt 1e-3 with stride 50
    assert_eq!(modal.lines().count(), 1 + 12000 / 50 + 1);
}

#[test]
fn scenario_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.toml");
    let s = short_scenario();
    fs::write(&path, s.to_toml().unwrap()).unwrap();
    let back = Scenario::load(&path).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.hash(), s.hash());
}
