//! End-to-end runs driven by a [`Scenario`]: simulate, train, monitor and
//! check, plus the files each command writes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    check_detectability, check_isolatability, DetectabilityReport, IsolatabilityReport, ModeStreams, ScanGrid, Stream,
};
use crate::error::{FdiError, Result};
use crate::fdi::{run_fd, run_fi, BoundEvaluator, DecisionEvent, FdOutcome, FiOutcome};
use crate::identifier::{estimate_xi_star, train_all, IdentifierRun, TrainStats, TrainedModel, XiStarEstimate};
use crate::io::{
    to_json_pretty, unix_now, Cell, CsvTable, FormatVersions, OutputDir, RunManifest, CSV_FORMAT_VERSION,
    MANIFEST_FORMAT_VERSION,
};
use crate::par::Parallelism;
use crate::pdesim::{simulate_streaming, FaultKind, FaultProjector, FaultSpec, ModalTrajectory};
use crate::rbf::{WeightFile, WEIGHT_FORMAT_VERSION};
use crate::scenario::{FaultSelector, Scenario, SCENARIO_FORMAT_VERSION};
use crate::spectral::{solve_eigenproblem, EigenSystem};

/// No stage of the pipeline draws random numbers.
pub const USES_RNG: bool = false;

pub const WEIGHTS_FILE: &str = "weights.bin";
pub const XI_STAR_FILE: &str = "xi_star.json";

/// What the streaming pass records besides the modal trajectory.
#[derive(Debug, Clone, Default)]
pub struct StreamRequest {
    /// Similarity bounds `ρ̄_i^k` of every trained mode.
    pub bounds: bool,
    /// Modal projections `⟨φ_i, φ(x, u)⟩` of these fault functions.
    pub projections: Vec<FaultKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalRun {
    pub traj: ModalTrajectory,
    /// `bounds[k − 1][i][n]`, empty unless requested.
    pub bounds: Vec<Vec<Vec<f64>>>,
    /// `projections[p][i][n]` in request order.
    pub projections: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: TrainedModel,
    pub runs: Vec<IdentifierRun>,
    pub xi: XiStarEstimate,
    pub trajs: Vec<ModalTrajectory>,
}

/// Everything `monitor` decides, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionLog {
    pub scenario_hash: String,
    pub fault: String,
    pub xi: Vec<f64>,
    pub fd_thresholds: Vec<f64>,
    pub events: Vec<DecisionEvent>,
}

#[derive(Debug, Clone)]
pub struct MonitorOutput {
    pub run: ModalRun,
    pub fd: FdOutcome,
    pub fi: Option<FiOutcome>,
    pub log: DecisionLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Detectability,
    Isolatability,
}

impl std::str::FromStr for CheckKind {
    type Err = FdiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detectability" => Ok(CheckKind::Detectability),
            "isolatability" => Ok(CheckKind::Isolatability),
            _ => Err(FdiError::config(
                "--which",
                format!("'{s}' is not a check (detectability or isolatability)"),
            )),
        }
    }
}

/// What monitoring actually did on the checked run (needs weights).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observed {
    pub detection: Option<f64>,
    pub excluded_modes: Vec<usize>,
    pub isolated_mode: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub which: CheckKind,
    pub fault: String,
    pub fault_onset: f64,
    pub xi: Vec<f64>,
    pub xi_source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detectability: Option<DetectabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub isolatability: Option<IsolatabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed: Option<Observed>,
}

/// Scenario plus the shared eigen-decomposition.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub scenario: Scenario,
    pub eig: EigenSystem,
    pub par: Parallelism,
}

impl Pipeline {
    pub fn new(scenario: Scenario, par: Parallelism) -> Result<Self> {
        scenario.validate()?;
        let eig = solve_eigenproblem(&scenario.plant.op, scenario.m(), scenario.eig.grid_size)?;
        Ok(Self { scenario, eig, par })
    }

    pub fn eigvals(&self) -> &[f64] {
        self.eig.slow_eigenvalues()
    }

    /// Fault of the mode-`k` training trajectory, active from `t = 0`.
    pub fn training_fault(&self, k: usize) -> Result<Option<FaultSpec>> {
        if k == 0 {
            return Ok(None);
        }
        Ok(Some(FaultSpec::new(self.scenario.trained_fault(k)?.clone(), 0.0)?))
    }

    /// Fault and horizon of a `simulate`/`monitor` run. Trained modes are
    /// injected at the scenario's fault onset.
    pub fn monitor_fault(&self, sel: FaultSelector) -> Result<Option<FaultSpec>> {
        self.scenario.fault_for(sel)
    }

    /// One PDE run reduced on the fly. `field_sink` sees every stamp.
    pub fn simulate(
        &self,
        fault: Option<&FaultSpec>,
        horizon: f64,
        req: &StreamRequest,
        mut field_sink: Option<&mut dyn FnMut(usize, f64, &[f64], &[f64])>,
    ) -> Result<ModalRun> {
        let s = &self.scenario;
        let (m, q) = (s.m(), s.q());
        let dt = s.timing.dt;
        let steps = (horizon / dt).round() as usize + 1;
        let grid = self.eig.grid;
        let mut traj = ModalTrajectory::new(0.0, dt, m, q);
        traj.states.reserve(steps * m);
        traj.inputs.reserve(steps * q);
        let evaluator = BoundEvaluator::new(&self.eig, &s.plant);
        let n_bounds = if req.bounds { s.modes() } else { 0 };
        let mut bounds = vec![vec![Vec::with_capacity(steps); m]; n_bounds];
        let mut projectors: Vec<FaultProjector> = req
            .projections
            .iter()
            .map(|k| FaultProjector::new(k, &s.plant, &grid))
            .collect();
        let mut projections = vec![vec![Vec::with_capacity(steps); m]; projectors.len()];
        let mut xs = vec![0.0; m];
        let mut buf = vec![0.0; m];
        simulate_streaming(&s.plant, fault, &s.input, horizon, &s.sim_config(), |n, t, x, u| {
            self.eig.project_values(x, &mut xs);
            traj.push(&xs, u);
            for (k, per_i) in bounds.iter_mut().enumerate() {
                evaluator.eval_into(&s.fi.bounds[k], x, u, &mut buf);
                for (dst, v) in per_i.iter_mut().zip(&buf) {
                    dst.push(*v);
                }
            }
            for (p, per_i) in projectors.iter_mut().zip(projections.iter_mut()) {
                p.project(&self.eig, x, u, &mut buf);
                for (dst, v) in per_i.iter_mut().zip(&buf) {
                    dst.push(*v);
                }
            }
            if let Some(sink) = field_sink.as_mut() {
                sink(n, t, x, u);
            }
            Ok(())
        })?;
        Ok(ModalRun {
            traj,
            bounds,
            projections,
        })
    }

    /// Simulate every mode's training trajectory.
    pub fn training_trajectories(&self) -> Result<Vec<ModalTrajectory>> {
        let horizon = self.scenario.timing.train_horizon;
        let runs = self.par.map(self.scenario.modes() + 1, |k| -> Result<ModalTrajectory> {
            let fault = self.training_fault(k)?;
            Ok(self.simulate(fault.as_ref(), horizon, &StreamRequest::default(), None)?.traj)
        });
        runs.into_iter().collect()
    }

    /// Train all `(i, k)` identifiers and estimate `ξ*` on the same orbits.
    pub fn train(&self) -> Result<TrainOutput> {
        let trajs = self.training_trajectories()?;
        self.train_on(trajs)
    }

    pub fn train_on(&self, trajs: Vec<ModalTrajectory>) -> Result<TrainOutput> {
        let s = &self.scenario;
        let (model, runs) = train_all(&trajs, self.eigvals(), &s.lattice, &s.gains, &s.train_options(), self.par)?;
        let xi = estimate_xi_star(&model, &trajs, self.eigvals(), s.timing.settle, self.par)?;
        Ok(TrainOutput { model, runs, xi, trajs })
    }

    /// Header check of a loaded model against the scenario.
    pub fn check_model(&self, model: &TrainedModel) -> Result<()> {
        let s = &self.scenario;
        model
            .header()
            .ensure_matches(&crate::rbf::WeightHeader::new(&s.lattice, s.m(), s.q(), s.modes()))
    }

    pub fn monitor(&self, model: &TrainedModel, xi: &[f64], sel: FaultSelector) -> Result<MonitorOutput> {
        self.check_model(model)?;
        let s = &self.scenario;
        let fault = self.monitor_fault(sel)?;
        let req = StreamRequest {
            bounds: true,
            projections: Vec::new(),
        };
        let run = self.simulate(fault.as_ref(), s.timing.monitor_horizon, &req, None)?;
        let fd_cfg = s.fd_config(xi);
        let fd = run_fd(model, &run.traj, self.eigvals(), &fd_cfg, self.par)?;
        let mut events = vec![fd.event.clone()];
        let fi = match fd.detection {
            Some(n) => {
                let fi = run_fi(model, &run.traj, self.eigvals(), Some(n), &s.fi_config(xi), &run.bounds, self.par)?;
                events.push(fi.event.clone());
                Some(fi)
            }
            None => None,
        };
        let log = DecisionLog {
            scenario_hash: s.hash(),
            fault: sel.to_string(),
            xi: xi.to_vec(),
            fd_thresholds: (0..s.m()).map(|i| fd_cfg.threshold(i)).collect(),
            events,
        };
        Ok(MonitorOutput { run, fd, fi, log })
    }

    /// Run a detectability or isolatability check for the selected fault.
    /// With a model the checked run is also monitored, and the isolatability
    /// intervals start at the observed detection time; without one they
    /// start at the fault onset.
    pub fn check(
        &self,
        which: CheckKind,
        sel: FaultSelector,
        model: Option<(&TrainedModel, &[f64])>,
    ) -> Result<CheckReport> {
        let s = &self.scenario;
        let fault = self
            .monitor_fault(sel)?
            .ok_or_else(|| FdiError::config("--fault", "checks need a fault (an index or test)"))?;
        let matched = match sel {
            FaultSelector::Trained(k) => k,
            FaultSelector::Test(j) => s.test_fault(j)?.similar,
            FaultSelector::None => unreachable!("rejected above"),
        };
        let (xi, xi_source) = match model {
            Some((_, xi)) => (xi.to_vec(), "trained".to_string()),
            None => (s.fd.xi.clone(), "scenario".to_string()),
        };
        let mut projections = vec![fault.kind.clone()];
        if which == CheckKind::Isolatability {
            projections.extend(s.faults.trained.iter().cloned());
        }
        let req = StreamRequest {
            bounds: true,
            projections,
        };
        let run = self.simulate(Some(&fault), s.timing.monitor_horizon, &req, None)?;
        let dt = s.timing.dt;
        let n0 = (fault.t0 / dt).round() as usize;

        let mut observed = None;
        let mut fd_out = None;
        if let Some((m, _)) = model {
            self.check_model(m)?;
            let fd = run_fd(m, &run.traj, self.eigvals(), &s.fd_config(&xi), self.par)?;
            let fi = match fd.detection {
                Some(n) => Some(run_fi(m, &run.traj, self.eigvals(), Some(n), &s.fi_config(&xi), &run.bounds, self.par)?),
                None => None,
            };
            observed = Some(Observed {
                detection: fd.detection_time(),
                excluded_modes: fi
                    .as_ref()
                    .map(|f| f.exclusions.iter().flatten().map(|e| e.mode).collect())
                    .unwrap_or_default(),
                isolated_mode: fi.as_ref().and_then(|f| f.isolated_mode()),
            });
            fd_out = Some(fd);
        }

        let mut report = CheckReport {
            which,
            fault: sel.to_string(),
            fault_onset: fault.t0,
            xi: xi.clone(),
            xi_source,
            detectability: None,
            isolatability: None,
            observed,
        };
        match which {
            CheckKind::Detectability => {
                let streams: Vec<Stream<'_>> = run.projections[0]
                    .iter()
                    .map(|v| Stream {
                        t0: run.traj.time(n0),
                        dt,
                        values: &v[n0..],
                    })
                    .collect();
                let grid = ScanGrid::uniform(0.01, s.fd.window, 25);
                report.detectability = Some(check_detectability(&streams, &s.fd_config(&xi), None, &grid)?);
            }
            CheckKind::Isolatability => {
                let t_start = fd_out
                    .as_ref()
                    .and_then(|f| f.detection_time())
                    .unwrap_or(fault.t0)
                    .max(fault.t0);
                let na = (t_start / dt).round() as usize;
                let nb = ((t_start + s.fi.horizon) / dt).round() as usize + 1;
                let nb = nb.min(run.traj.len());
                let injected = &run.projections[0];
                let mismatch: Vec<Vec<Vec<f64>>> = (1..=s.modes())
                    .map(|k| {
                        let trained = &run.projections[k];
                        (0..s.m())
                            .map(|i| (na..nb).map(|n| injected[i][n] - trained[i][n]).collect())
                            .collect()
                    })
                    .collect();
                let t0 = run.traj.time(na);
                let modes: Vec<ModeStreams<'_>> = (1..=s.modes())
                    .map(|k| ModeStreams {
                        mode: k,
                        mismatch: mismatch[k - 1].iter().map(|v| Stream { t0, dt, values: v }).collect(),
                        bound: run.bounds[k - 1]
                            .iter()
                            .map(|v| Stream {
                                t0,
                                dt,
                                values: &v[na..nb],
                            })
                            .collect(),
                    })
                    .collect();
                let grid = ScanGrid::uniform(0.01, s.fi.horizon, 200);
                report.isolatability = Some(check_isolatability(&modes, matched, &s.fi_config(&xi), t0, &grid)?);
            }
        }
        Ok(report)
    }

    /// Largest `|ρ_i| − ρ̄_i` after the onset of test fault `j`, where `ρ_i`
    /// is the modal mismatch against its similar trained fault. Nonpositive
    /// entries mean the similarity bound covers the run.
    pub fn bound_coverage(&self, j: usize) -> Result<Vec<f64>> {
        let s = &self.scenario;
        let test = s.test_fault(j)?;
        let fault = FaultSpec::new(test.fault.clone(), test.t0)?;
        let req = StreamRequest {
            bounds: true,
            projections: vec![test.fault.clone(), s.trained_fault(test.similar)?.clone()],
        };
        let run = self.simulate(Some(&fault), s.timing.monitor_horizon, &req, None)?;
        let n0 = (test.t0 / s.timing.dt).round() as usize;
        let bound = &run.bounds[test.similar - 1];
        Ok((0..s.m())
            .map(|i| {
                (n0..run.traj.len())
                    .map(|n| (run.projections[0][i][n] - run.projections[1][i][n]).abs() - bound[i][n])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect())
    }
}

fn new_manifest(s: &Scenario, command: &str, fault: Option<FaultSelector>, seedless: bool) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        scenario_name: s.name.clone(),
        scenario_hash: s.hash(),
        fault: fault.map(|f| f.to_string()),
        formats: FormatVersions {
            scenario: SCENARIO_FORMAT_VERSION,
            weights: WEIGHT_FORMAT_VERSION,
            csv: CSV_FORMAT_VERSION,
            manifest: MANIFEST_FORMAT_VERSION,
        },
        outputs: Vec::new(),
        started: unix_now(),
        finished: 0,
        seedless,
    }
}

/// CSV of a modal trajectory: `t, xs1.., u1..`.
pub fn modal_csv(traj: &ModalTrajectory, stride: usize) -> CsvTable {
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.m).map(|i| format!("xs{i}")));
    header.extend((1..=traj.q).map(|j| format!("u{j}")));
    let mut csv = CsvTable::new(&header);
    let mut row = Vec::with_capacity(1 + traj.m + traj.q);
    for n in (0..traj.len()).step_by(stride.max(1)) {
        row.clear();
        row.push(traj.time(n));
        row.extend_from_slice(traj.state(n));
        row.extend_from_slice(traj.input(n));
        csv.row(&row);
    }
    csv
}

/// Long-format residual CSV `t,i,k,xtilde,l1norm,threshold,crossed`.
pub fn monitor_csv(out: &MonitorOutput, stride: usize) -> CsvTable {
    let mut csv = CsvTable::new(&["t", "i", "k", "xtilde", "l1norm", "threshold", "crossed"]);
    let stride = stride.max(1);
    let dt = out.run.traj.dt;
    let fi_traces = out.fi.as_ref().map(|f| f.traces.as_slice()).unwrap_or(&[]);
    for tr in out.fd.traces.iter().chain(fi_traces) {
        let offset = ((tr.t0 - out.run.traj.t0) / dt).round() as usize;
        for n in 0..tr.len() {
            if (n + offset) % stride != 0 {
                continue;
            }
            csv.row_cells(&[
                Cell::Num(tr.time(n)),
                Cell::Int(tr.i + 1),
                Cell::Int(tr.k),
                Cell::Num(tr.residual[n]),
                Cell::Num(tr.norm[n]),
                Cell::Num(tr.threshold[n]),
                Cell::Flag(tr.crossed(n)),
            ]);
        }
    }
    csv
}

/// Decision events as JSON lines.
pub fn decision_lines(events: &[DecisionEvent]) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    for e in events {
        serde_json::to_writer(&mut bytes, e).map_err(|e| FdiError::Invalid(format!("json: {e}")))?;
        bytes.push(b'\n');
    }
    Ok(bytes)
}

/// Training CSV `t,xhat,xs,err,weight_norm` of one identifier.
pub fn training_csv(run: &IdentifierRun) -> CsvTable {
    let mut csv = CsvTable::new(&["t", "xhat", "xs", "err", "weight_norm"]);
    for r in &run.trace {
        csv.row(&[r.t, r.xhat, r.xs, r.err, r.weight_norm]);
    }
    csv
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub window: [f64; 2],
    pub stats: Vec<TrainStats>,
}

/// `simulate`: modal and field CSVs for one mode.
pub fn cmd_simulate(p: &Pipeline, sel: FaultSelector, out_dir: &Path, seedless: bool) -> Result<RunManifest> {
    let s = &p.scenario;
    let manifest = new_manifest(s, "simulate", Some(sel), seedless);
    let (fault, horizon) = match sel {
        FaultSelector::Test(_) => (p.monitor_fault(sel)?, s.timing.monitor_horizon),
        _ => (p.training_fault(sel.mode())?, s.timing.train_horizon),
    };
    let mut out = OutputDir::create(out_dir)?;
    let stride = s.timing.field_stride;
    let mut header = vec!["t".to_string()];
    header.extend(p.eig.grid.points().iter().map(|z| format!("x(z={})", crate::io::fmt_num(*z))));
    let mut field = CsvTable::new(&header);
    let mut row = Vec::with_capacity(header.len());
    let mut sink = |n: usize, t: f64, x: &[f64], _u: &[f64]| {
        if n % stride == 0 {
            row.clear();
            row.push(t);
            row.extend_from_slice(x);
            field.row(&row);
        }
    };
    let run = p.simulate(fault.as_ref(), horizon, &StreamRequest::default(), Some(&mut sink))?;
    let tag = sel.tag();
    out.write(&format!("modal_{tag}.csv"), "modal", modal_csv(&run.traj, s.timing.output_stride).as_str().as_bytes())?;
    out.write(&format!("field_{tag}.csv"), "field", field.as_str().as_bytes())?;
    out.finish(manifest)
}

/// `train`: weight file, ξ* estimate and per-identifier CSVs.
pub fn cmd_train(p: &Pipeline, out_dir: &Path, seedless: bool) -> Result<(RunManifest, TrainOutput)> {
    let s = &p.scenario;
    let manifest = new_manifest(s, "train", None, seedless);
    let mut out = OutputDir::create(out_dir)?;
    let trained = p.train()?;
    trained.model.to_weight_file()?.write(&out.path(WEIGHTS_FILE))?;
    out.register(WEIGHTS_FILE, "weights")?;
    let sidecar = WeightFile::sidecar_path(Path::new(WEIGHTS_FILE));
    out.register(&sidecar.to_string_lossy(), "weights-header")?;
    out.write(XI_STAR_FILE, "xi-star", &to_json_pretty(&trained.xi)?)?;
    let summary = TrainSummary {
        window: s.timing.averaging_window,
        stats: trained.model.stats.clone(),
    };
    out.write("train_summary.json", "train-summary", &to_json_pretty(&summary)?)?;
    for run in &trained.runs {
        let name = format!("train_i{}_k{}.csv", run.averaged.i + 1, run.averaged.k);
        out.write(&name, "training-trace", training_csv(run).as_str().as_bytes())?;
    }
    Ok((out.finish(manifest)?, trained))
}

/// Load a weight file and the ξ* estimate stored next to it.
pub fn load_model(p: &Pipeline, weights: &Path) -> Result<(TrainedModel, XiStarEstimate)> {
    let file = WeightFile::read(weights)?;
    let model = TrainedModel::from_weight_file(file)?;
    p.check_model(&model)?;
    let xi_path = xi_star_path(weights);
    if !xi_path.exists() {
        return Err(FdiError::config(
            "--weights",
            format!("{} not found next to the weight file", xi_path.display()),
        ));
    }
    let xi: XiStarEstimate = crate::io::read_json(&xi_path)?;
    if xi.xi.len() != model.m {
        return Err(FdiError::Dimension {
            what: "xi* components",
            expected: model.m,
            got: xi.xi.len(),
        });
    }
    Ok((model, xi))
}

pub fn xi_star_path(weights: &Path) -> PathBuf {
    weights.parent().unwrap_or(Path::new(".")).join(XI_STAR_FILE)
}

/// `monitor`: residual CSV and decision log.
pub fn cmd_monitor(
    p: &Pipeline,
    weights: &Path,
    sel: FaultSelector,
    out_dir: &Path,
    seedless: bool,
) -> Result<(RunManifest, MonitorOutput)> {
    let s = &p.scenario;
    let manifest = new_manifest(s, "monitor", Some(sel), seedless);
    let (model, xi) = load_model(p, weights)?;
    let mut out = OutputDir::create(out_dir)?;
    let mon = p.monitor(&model, &xi.xi, sel)?;
    let tag = sel.tag();
    out.write(&format!("monitor_{tag}.csv"), "residuals", monitor_csv(&mon, s.timing.output_stride).as_str().as_bytes())?;
    out.write(&format!("decisions_{tag}.jsonl"), "decisions", &decision_lines(&mon.log.events)?)?;
    out.write(&format!("thresholds_{tag}.json"), "thresholds", &to_json_pretty(&mon.log)?)?;
    Ok((out.finish(manifest)?, mon))
}

/// `check`: audit JSON of one checker.
pub fn cmd_check(
    p: &Pipeline,
    weights: Option<&Path>,
    which: CheckKind,
    sel: FaultSelector,
    out_dir: &Path,
    seedless: bool,
) -> Result<(RunManifest, CheckReport)> {
    let s = &p.scenario;
    let manifest = new_manifest(s, "check", Some(sel), seedless);
    let loaded = weights.map(|w| load_model(p, w)).transpose()?;
    let mut out = OutputDir::create(out_dir)?;
    let report = p.check(which, sel, loaded.as_ref().map(|(m, xi)| (m, xi.xi.as_slice())))?;
    let name = match which {
        CheckKind::Detectability => "detectability",
        CheckKind::Isolatability => "isolatability",
    };
    out.write(&format!("check_{name}_{}.json", sel.tag()), "check", &to_json_pretty(&report)?)?;
    Ok((out.finish(manifest)?, report))
}
