use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use galerkin_fdi::pdesim::InitialProfile;
use galerkin_fdi::pdesim::{SineSeries, SineTerm};
use galerkin_fdi::scenario::Scenario;

fn galfdi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_galfdi")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn short() -> Scenario {
    let mut s = Scenario::benchmark();
    s.name = "catalytic_rod_short".into();
    s.eig.grid_size = 100;
    let t = &mut s.timing;
    t.train_horizon = 10.0;
    t.monitor_horizon = 12.0;
    t.averaging_window = [6.0, 10.0];
    t.settle = 3.0;
    t.fault_onset = 6.0;
    t.snapshot_stride = 1000;
    t.trace_stride = 500;
    t.output_stride = 100;
    t.field_stride = 2000;
    s.fi.horizon = 4.0;
    for f in &mut s.faults.test {
        f.t0 = 6.0;
    }
    s
}

fn write_scenario(dir: &Path, name: &str, s: &Scenario) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, s.to_toml().unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_subcommands() {
    let out = galfdi(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["simulate", "train", "monitor", "check"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn malformed_which_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.toml", &short());
    let out = galfdi(&["check", "--scenario", s(&sc), "--which", "bogus"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--which"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.toml", &short());
    let out_dir = dir.path().join("out");

    let missing = galfdi(&["simulate", "--scenario", s(&dir.path().join("nope.toml")), "--out", s(&out_dir)]);
    assert_eq!(code(&missing), 2);

    let bad_index = galfdi(&["simulate", "--scenario", s(&sc), "--fault", "7", "--out", s(&out_dir)]);
    assert_eq!(code(&bad_index), 2);
    assert!(String::from_utf8_lossy(&bad_index.stderr).contains("1..=3"));

    let bad_test = galfdi(&["simulate", "--scenario", s(&sc), "--fault", "test:9", "--out", s(&out_dir)]);
    assert_eq!(code(&bad_test), 2);

    let bad_selector = galfdi(&["simulate", "--scenario", s(&sc), "--fault", "sometimes", "--out", s(&out_dir)]);
    assert_eq!(code(&bad_selector), 2);

    let text = fs::read_to_string(&sc).unwrap().replace("[timing]", "[timing]\nbogus_key = 1");
    let unknown = dir.path().join("unknown.toml");
    fs::write(&unknown, text).unwrap();
    let out = galfdi(&["simulate", "--scenario", s(&unknown), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let no_weights = galfdi(&["monitor", "--scenario", s(&sc), "--weights", s(&dir.path().join("w.bin"))]);
    assert_ne!(code(&no_weights), 0);
}

#[test]
fn numeric_divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = short();
    // x below −1 leaves the domain of the Arrhenius term
    sc.plant.initial = InitialProfile::Sine(SineSeries(vec![SineTerm(-15.0, 1.0)]));
    let path = write_scenario(dir.path(), "cold.toml", &sc);
    let out = galfdi(&["simulate", "--scenario", s(&path), "--out", s(&dir.path().join("out"))]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.toml", &short());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = galfdi(&["simulate", "--scenario", s(&sc), "--fault", "2", "--out", s(out), "--seedless"]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    }
    for name in ["modal_fault2.csv", "field_fault2.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let manifest = fs::read_to_string(a.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seedless\": true"));
}

#[test]
fn train_monitor_check_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.toml", &short());
    let train_dir = dir.path().join("train");
    let out = galfdi(&["train", "--scenario", s(&sc), "--out", s(&train_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("xi* = ["));
    let weights = train_dir.join("weights.bin");

    let mon_dir = dir.path().join("monitor");
    let out = galfdi(&[
        "monitor",
        "--scenario",
        s(&sc),
        "--weights",
        s(&weights),
        "--fault",
        "test:2",
        "--out",
        s(&mon_dir),
        "--sequential",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let log = fs::read_to_string(mon_dir.join("decisions_test2.jsonl")).unwrap();
    assert!(!log.is_empty());
    assert!(fs::read_to_string(mon_dir.join("monitor_test2.csv")).unwrap().starts_with("t,i,k,"));

    let check_dir = dir.path().join("check");
    let out = galfdi(&[
        "check",
        "--scenario",
        s(&sc),
        "--weights",
        s(&weights),
        "--which",
        "detectability",
        "--fault",
        "test",
        "--out",
        s(&check_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(check_dir.join("check_detectability_test1.json")).unwrap();
    assert!(report.contains("\"xi_source\": \"trained\""));

    // weights trained on another lattice are rejected with the differing fields
    let mut other = short();
    other.lattice = galerkin_fdi::rbf::RbfLattice::new(
        vec![[17.5, 24.0], [-1.0, 3.0], [0.0, 3.5], [-2.0, 4.5]],
        vec![14, 9, 8, 14],
        0.5,
    )
    .unwrap();
    let other_sc = write_scenario(dir.path(), "other.toml", &other);
    let out = galfdi(&["monitor", "--scenario", s(&other_sc), "--weights", s(&weights), "--out", s(&mon_dir)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("counts"));
}
