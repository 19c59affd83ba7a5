//! Acceptance suite for the catalytic-rod benchmark. Prints one PASS/FAIL
//! line per criterion. A FAIL is reported, not raised, so the rest of the
//! suite still runs; only a crash of the pipeline itself aborts.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use galerkin_fdi::fdi::{fd_threshold, fi_constant_threshold, DecisionKind};
use galerkin_fdi::identifier::{train_identifier, IdentifierGains, TrainOptions};
use galerkin_fdi::io::RunManifest;
use galerkin_fdi::ode::{OdeSystem, Rk4};
use galerkin_fdi::par::Parallelism;
use galerkin_fdi::pdesim::ModalTrajectory;
use galerkin_fdi::pipeline::{self, CheckKind, MonitorOutput, Pipeline, TrainOutput, WEIGHTS_FILE};
use galerkin_fdi::rbf::{RbfLattice, WeightVector};
use galerkin_fdi::scenario::{FaultSelector, Scenario};
use galerkin_fdi::spectral::{solve_eigenproblem, solve_numerical};

const PAPER_XI: [f64; 3] = [0.0860, 0.0430, 0.0703];

struct Report {
    lines: Vec<(usize, bool)>,
}

impl Report {
    fn record(&mut self, id: usize, name: &str, pass: bool, elapsed: Duration, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {tag} {name} [{:.1} s]: {detail}", elapsed.as_secs_f64());
        self.lines.push((id, pass));
    }
}

fn spectral(r: &mut Report, s: &Scenario) {
    let start = Instant::now();
    let analytic = solve_eigenproblem(&s.plant.op, 5, 400).unwrap();
    let exact = (0..5).all(|j| analytic.eigenvalues[j] == -(((j + 1) * (j + 1)) as f64));
    let numerical = solve_numerical(&s.plant.op, 3, 6, 400).unwrap();
    let d1 = (numerical.eigenvalues[0] + 1.0).abs();
    let elapsed = start.elapsed();
    let pass = exact && d1 < 1e-3 && elapsed < Duration::from_secs(1);
    r.record(
        1,
        "spectral exactness",
        pass,
        elapsed,
        format!("analytic lambda_1..5 = {:?}, numerical |dlambda_1| = {d1:.3e} at grid 400", &analytic.eigenvalues[..5]),
    );
}

struct Relax;

impl OdeSystem for Relax {
    fn dim(&self) -> usize {
        1
    }

    fn derivative(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = -y[0] + 1.0;
    }
}

fn relax_error(dt: f64) -> f64 {
    let steps = (1.0 / dt).round() as usize;
    let mut rk = Rk4::new(1);
    let mut y = [0.0];
    for n in 0..steps {
        rk.step(&mut Relax, n as f64 * dt, dt, &mut y);
    }
    (y[0] - (1.0 - (-1.0f64).exp())).abs()
}

fn integrator(r: &mut Report) {
    let start = Instant::now();
    let err = relax_error(1e-3);
    let err_half = relax_error(5e-4);
    // at dt = 1e-3 the error is already at rounding level, so the order is
    // measured where truncation dominates
    let ratio = relax_error(0.1) / relax_error(0.05);
    let elapsed = start.elapsed();
    let pass = err < 1e-9 && ratio >= 15.0 && elapsed < Duration::from_secs(1);
    r.record(
        2,
        "integrator oracle",
        pass,
        elapsed,
        format!("error {err:.2e} at dt 1e-3 ({err_half:.2e} at 5e-4), halving ratio {ratio:.2} at dt 0.1"),
    );
}

struct Synthetic<'a> {
    lat: &'a RbfLattice,
    w: &'a WeightVector,
}

impl OdeSystem for Synthetic<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn derivative(&mut self, t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = -y[0] + self.lat.eval_network(self.w, &[y[0], t.sin()]).unwrap();
    }
}

fn identification(r: &mut Report) {
    let start = Instant::now();
    let lat = RbfLattice::new(vec![[-2.0, 2.0], [-1.5, 1.5]], vec![9, 7], 0.5).unwrap();
    let weights = lat
        .centers()
        .iter()
        .map(|c| 0.4 * (1.5 * c[0]).sin() + 0.3 * c[1] - 0.1 * c[0] * c[1])
        .collect();
    let w_star = WeightVector { i: 0, k: 0, weights };
    let (dt, horizon) = (0.01, 1000.0);
    let steps = (horizon / dt) as usize;
    let mut traj = ModalTrajectory::new(0.0, dt, 1, 1);
    let mut plant = Synthetic { lat: &lat, w: &w_star };
    let mut rk = Rk4::new(1);
    let mut y = [0.5];
    traj.push(&y, &[0.0]);
    for n in 0..steps {
        rk.step(&mut plant, n as f64 * dt, dt, &mut y);
        traj.push(&y, &[((n + 1) as f64 * dt).sin()]);
    }
    let opts = TrainOptions {
        window: [horizon - 50.0, horizon],
        snapshot_every: 10,
        trace_every: 100,
    };
    let run = train_identifier(&traj, &[-1.0], &lat, &[IdentifierGains::BENCHMARK], 0, 0, &opts).unwrap();
    let period = (2.0 * std::f64::consts::PI / dt).round() as usize;
    let err = (traj.len() - period..traj.len())
        .map(|n| {
            let z = [traj.state(n)[0], traj.input(n)[0]];
            (lat.eval_network(&run.averaged, &z).unwrap() - lat.eval_network(&w_star, &z).unwrap()).abs()
        })
        .fold(0.0f64, f64::max);
    let elapsed = start.elapsed();
    let pass = err < 0.05 && elapsed < Duration::from_secs(30);
    r.record(
        3,
        "identification quality",
        pass,
        elapsed,
        format!("max |WbarT S - W*T S| along the orbit = {err:.4} (default gains)"),
    );
}

/// Everything one full pipeline execution produces.
struct Execution {
    trained: TrainOutput,
    train_time: Duration,
    monitors: Vec<(FaultSelector, MonitorOutput, Duration)>,
    /// Relative path and bytes of every file written.
    files: Vec<(String, Vec<u8>)>,
}

fn collect(dir: &Path, prefix: &str, files: &mut Vec<(String, Vec<u8>)>) {
    let manifest: RunManifest = galerkin_fdi::io::read_json(&dir.join("manifest.json")).unwrap();
    for o in manifest.outputs {
        files.push((format!("{prefix}/{}", o.path), fs::read(dir.join(&o.path)).unwrap()));
    }
}

fn execute(s: &Scenario, par: Parallelism, root: &Path) -> Execution {
    let p = Pipeline::new(s.clone(), par).unwrap();
    let mut files = Vec::new();
    let start = Instant::now();
    let (_, trained) = pipeline::cmd_train(&p, &root.join("train"), true).unwrap();
    let train_time = start.elapsed();
    collect(&root.join("train"), "train", &mut files);
    let weights = root.join("train").join(WEIGHTS_FILE);
    let mut monitors = Vec::new();
    for sel in ["none", "test:1", "test:2", "test:3"] {
        let sel: FaultSelector = sel.parse().unwrap();
        let dir = root.join(format!("monitor_{}", sel.tag()));
        let start = Instant::now();
        let (_, mon) = pipeline::cmd_monitor(&p, &weights, sel, &dir, true).unwrap();
        monitors.push((sel, mon, start.elapsed()));
        collect(&dir, &format!("monitor_{}", sel.tag()), &mut files);
    }
    Execution {
        trained,
        train_time,
        monitors,
        files,
    }
}

fn fmt3(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn xi_magnitude(r: &mut Report, run: &Execution) {
    let xi = &run.trained.xi.xi;
    let ratios: Vec<f64> = xi.iter().zip(PAPER_XI).map(|(a, b)| a / b).collect();
    let within = ratios.iter().all(|q| (0.5..=2.0).contains(q));
    let pass = within && run.train_time < Duration::from_secs(15 * 60);
    r.record(
        4,
        "xi* magnitude",
        pass,
        run.train_time,
        format!("xi* = {} vs {} (ratios {})", fmt3(xi), fmt3(&PAPER_XI), fmt3(&ratios)),
    );
}

fn no_false_alarms(r: &mut Report, run: &Execution) {
    let (_, mon, t) = &run.monitors[0];
    let crossings: usize = mon
        .fd
        .traces
        .iter()
        .map(|tr| (tr.warmup..tr.len()).filter(|&n| tr.crossed(n)).count())
        .sum();
    let margins: Vec<f64> = mon.fd.traces.iter().map(|tr| tr.max_margin()).collect();
    let pass = crossings == 0 && mon.log.events[0].kind == DecisionKind::NoFault && *t < Duration::from_secs(120);
    r.record(
        5,
        "no false alarms",
        pass,
        *t,
        format!("{crossings} crossings, max norm - threshold per component {}", fmt3(&margins)),
    );
}

fn detection_latency(r: &mut Report, run: &Execution, s: &Scenario) {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut worst = Duration::ZERO;
    for (sel, mon, t) in &run.monitors[1..] {
        let FaultSelector::Test(j) = *sel else { unreachable!() };
        let t0 = s.test_fault(j).unwrap().t0;
        worst = worst.max(*t);
        match mon.fd.detection_time() {
            Some(td) => {
                let ok = td > t0 && td - t0 <= 3.0;
                pass &= ok;
                parts.push(format!("{}: t_d - t0 = {:.3}", s.test_fault(j).unwrap().name, td - t0));
            }
            None => {
                pass = false;
                parts.push(format!("{}: not detected", s.test_fault(j).unwrap().name));
            }
        }
    }
    pass &= worst < Duration::from_secs(120);
    r.record(6, "detection latency", pass, worst, parts.join(", "));
}

fn isolation(r: &mut Report, run: &Execution, s: &Scenario) {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut worst = Duration::ZERO;
    for (sel, mon, t) in &run.monitors[1..] {
        let FaultSelector::Test(j) = *sel else { unreachable!() };
        let tf = s.test_fault(j).unwrap();
        worst = worst.max(*t);
        let (Some(td), Some(fi)) = (mon.fd.detection_time(), mon.fi.as_ref()) else {
            pass = false;
            parts.push(format!("{}: no FI run", tf.name));
            continue;
        };
        let matched_clean = (0..s.m()).all(|i| fi.trace(i, tf.similar).first_crossing().is_none());
        let worst_margin = (0..s.m())
            .map(|i| fi.trace(i, tf.similar).max_margin())
            .fold(f64::NEG_INFINITY, f64::max);
        let ev = &fi.event;
        let ok = fi.isolated_mode() == Some(tf.similar) && ev.time - td <= 5.0 && matched_clean;
        pass &= ok;
        let outcome = match fi.isolated_mode() {
            Some(l) => format!("Isolated({l}) at t_iso - t_d = {:.3}", ev.time - td),
            None => format!("{:?} at {:.3}", ev.kind, ev.time),
        };
        parts.push(format!(
            "{}: {outcome}, matched mode {} max margin {worst_margin:.4}",
            tf.name, tf.similar
        ));
    }
    pass &= worst < Duration::from_secs(180);
    r.record(7, "correct isolation", pass, worst, parts.join("; "));
}

fn threshold_arithmetic(r: &mut Report) {
    let start = Instant::now();
    let a = fd_threshold(0.0860, 0.12, 2.0);
    let b = fi_constant_threshold(0.0495, 0.2, 1.0);
    let pass = (a - 0.1030).abs() <= 1e-12 && (b - 0.2495).abs() <= 1e-12;
    r.record(
        8,
        "threshold arithmetic",
        pass,
        start.elapsed(),
        format!("fd_threshold = {a:.16}, fi_constant_threshold = {b:.16}"),
    );
}

fn theorem_consistency(r: &mut Report, s: &Scenario, run: &Execution) {
    let start = Instant::now();
    let p = Pipeline::new(s.clone(), Parallelism::Parallel).unwrap();
    let model = Some((&run.trained.model, run.trained.xi.xi.as_slice()));
    let det = p.check(CheckKind::Detectability, FaultSelector::Test(1), model).unwrap();
    let iso = p.check(CheckKind::Isolatability, FaultSelector::Test(1), model).unwrap();
    let d = det.detectability.as_ref().unwrap();
    let observed = det.observed.as_ref().unwrap();
    let det_ok = d.verdict && observed.detection.is_some_and(|td| td <= d.t_b + 1e-9);
    let predicted = iso.isolatability.as_ref().unwrap().predicted_exclusions();
    let mut excluded = iso.observed.as_ref().unwrap().excluded_modes.clone();
    excluded.sort_unstable();
    let iso_ok = predicted == excluded;
    let mus: Vec<f64> = d.components.iter().map(|c| c.mu).collect();
    r.record(
        9,
        "theorem consistency",
        det_ok && iso_ok,
        start.elapsed(),
        format!(
            "detectability {} on [{:.3}, {:.3}] (mu {}), observed t_d {:?}; predicted exclusions {predicted:?} vs observed {excluded:?}",
            d.verdict,
            d.t_a,
            d.t_b,
            fmt3(&mus),
            observed.detection
        ),
    );
}

fn bound_coverage(r: &mut Report, s: &Scenario) {
    let start = Instant::now();
    let p = Pipeline::new(s.clone(), Parallelism::Parallel).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for j in 1..=s.faults.test.len() {
        let excess = p.bound_coverage(j).unwrap();
        pass &= excess.iter().all(|e| *e <= 0.0);
        parts.push(format!("{}: max(|rho| - rho_bar) = {}", s.test_fault(j).unwrap().name, fmt3(&excess)));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(120 * s.faults.test.len() as u64);
    r.record(10, "similarity bound coverage", pass, elapsed, parts.join(", "));
}

fn determinism(r: &mut Report, s: &Scenario, first: &Execution, root: &Path) {
    let start = Instant::now();
    let second = execute(s, Parallelism::Sequential, root);
    let mut differing = Vec::new();
    for ((na, ba), (nb, bb)) in first.files.iter().zip(&second.files) {
        if na != nb || ba != bb {
            differing.push(na.clone());
        }
    }
    let pass = differing.is_empty() && first.files.len() == second.files.len();
    r.record(
        11,
        "determinism",
        pass,
        start.elapsed(),
        if pass {
            format!("{} files byte-identical (parallel vs sequential run)", first.files.len())
        } else {
            format!("differing: {differing:?}")
        },
    );
}

fn main() {
    // `cargo test -- --list` and filters from other targets must not start a
    // twenty-minute run
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if let Some(filter) = args.iter().find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return;
        }
    }

    let s = Scenario::benchmark();
    let mut r = Report { lines: Vec::new() };
    spectral(&mut r, &s);
    integrator(&mut r);
    identification(&mut r);

    let dir = tempfile::tempdir().unwrap();
    let first = execute(&s, Parallelism::Parallel, &dir.path().join("first"));
    xi_magnitude(&mut r, &first);
    no_false_alarms(&mut r, &first);
    detection_latency(&mut r, &first, &s);
    isolation(&mut r, &first, &s);
    threshold_arithmetic(&mut r);
    theorem_consistency(&mut r, &s, &first);
    bound_coverage(&mut r, &s);
    determinism(&mut r, &s, &first, &dir.path().join("second"));

    let passed = r.lines.iter().filter(|(_, p)| *p).count();
    println!("acceptance: {passed}/{} criteria pass", r.lines.len());
}
