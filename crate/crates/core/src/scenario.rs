//! Declarative run configuration. One scenario file fully determines a run.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FdiError, Result};
use crate::fdi::{FdConfig, FiConfig, SimilarityBound};
use crate::identifier::{IdentifierGains, TrainOptions};
use crate::pdesim::{Convection, FaultKind, FaultSpec, InputSignal, PlantModel, SimConfig};
use crate::rbf::RbfLattice;
use crate::spectral::SpatialGrid;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

const BENCHMARK_TOML: &str = include_str!("../scenarios/catalytic_rod.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigSettings {
    /// Slow subspace dimension.
    pub m: usize,
    /// Spatial intervals of both the eigen-solver and the simulator.
    pub grid_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    #[serde(default)]
    pub convection: Convection,
    #[serde(default = "default_safety")]
    pub safety: f64,
}

fn default_safety() -> f64 {
    0.9
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            convection: Convection::Central,
            safety: default_safety(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    /// Sampling step of every stream.
    pub dt: f64,
    pub train_horizon: f64,
    pub monitor_horizon: f64,
    pub averaging_window: [f64; 2],
    /// Transient skipped by the ξ* probes.
    pub settle: f64,
    /// Onset used when a trained fault is injected during monitoring.
    pub fault_onset: f64,
    /// Weight snapshot stride (stamps).
    pub snapshot_stride: usize,
    /// Training CSV stride (stamps).
    pub trace_stride: usize,
    /// Monitoring and modal CSV stride (stamps).
    pub output_stride: usize,
    /// Field CSV stride (stamps).
    pub field_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdSettings {
    pub b: Vec<f64>,
    pub rho: Vec<f64>,
    pub window: f64,
    /// Nominal `ξ*_i`, used only when no trained weights supply an estimate.
    pub xi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiSettings {
    pub b: Vec<f64>,
    pub horizon: f64,
    /// One similarity bound per trained mode.
    pub bounds: Vec<SimilarityBound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFault {
    pub name: String,
    pub t0: f64,
    /// Trained mode this fault is declared similar to.
    pub similar: usize,
    pub fault: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Faults {
    /// Trained fault functions, modes `1..=N`, active from `t = 0` while training.
    pub trained: Vec<FaultKind>,
    #[serde(default)]
    pub test: Vec<TestFault>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format_version: u32,
    pub name: String,
    pub plant: PlantModel,
    pub input: InputSignal,
    pub eig: EigSettings,
    #[serde(default)]
    pub sim: SimSettings,
    pub lattice: RbfLattice,
    /// Identifier gains per state component.
    pub gains: Vec<IdentifierGains>,
    pub timing: Timing,
    pub fd: FdSettings,
    pub fi: FiSettings,
    pub faults: Faults,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl Scenario {
    /// The shipped catalytic-rod benchmark.
    pub fn benchmark() -> Self {
        Self::parse(BENCHMARK_TOML, Path::new("catalytic_rod.toml")).expect("shipped benchmark scenario is valid")
    }

    pub fn benchmark_source() -> &'static str {
        BENCHMARK_TOML
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FdiError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parse and validate; `origin` only labels errors.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| FdiError::Parse {
            file: origin.to_path_buf(),
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| FdiError::Invalid(format!("scenario serialization: {e}")))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn m(&self) -> usize {
        self.eig.m
    }

    pub fn q(&self) -> usize {
        self.input.q()
    }

    /// Number of trained fault modes `N`.
    pub fn modes(&self) -> usize {
        self.faults.trained.len()
    }

    pub fn grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(self.plant.op.z1, self.plant.op.z2, self.eig.grid_size)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            dt: self.timing.dt,
            grid_size: self.eig.grid_size,
            convection: self.sim.convection,
            safety: self.sim.safety,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            window: self.timing.averaging_window,
            snapshot_every: self.timing.snapshot_stride,
            trace_every: self.timing.trace_stride,
        }
    }

    pub fn fd_config(&self, xi: &[f64]) -> FdConfig {
        FdConfig {
            b: self.fd.b.clone(),
            rho: self.fd.rho.clone(),
            xi: xi.to_vec(),
            window: self.fd.window,
        }
    }

    pub fn fi_config(&self, xi: &[f64]) -> FiConfig {
        FiConfig {
            b: self.fi.b.clone(),
            xi: xi.to_vec(),
            window: self.fd.window,
            horizon: self.fi.horizon,
        }
    }

    /// The fault injected for a selector, if any.
    pub fn fault_for(&self, sel: FaultSelector) -> Result<Option<FaultSpec>> {
        match sel {
            FaultSelector::None => Ok(None),
            FaultSelector::Trained(k) => {
                let kind = self.trained_fault(k)?;
                Ok(Some(FaultSpec::new(kind.clone(), self.timing.fault_onset)?))
            }
            FaultSelector::Test(j) => {
                let tf = self.test_fault(j)?;
                Ok(Some(FaultSpec::new(tf.fault.clone(), tf.t0)?))
            }
        }
    }

    pub fn trained_fault(&self, k: usize) -> Result<&FaultKind> {
        let n = self.modes();
        if k == 0 || k > n {
            return Err(FdiError::config(
                "--fault",
                format!("trained fault index {k} out of range, valid indices are 1..={n}"),
            ));
        }
        Ok(&self.faults.trained[k - 1])
    }

    pub fn test_fault(&self, j: usize) -> Result<&TestFault> {
        let n = self.faults.test.len();
        if j == 0 || j > n {
            return Err(FdiError::config(
                "--fault",
                format!("test fault index {j} out of range, valid indices are 1..={n}"),
            ));
        }
        Ok(&self.faults.test[j - 1])
    }

    /// Dimension and range checks; runs before any integration.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != SCENARIO_FORMAT_VERSION {
            return Err(FdiError::config(
                "format_version",
                format!("unsupported version {}, expected {SCENARIO_FORMAT_VERSION}", self.format_version),
            ));
        }
        self.plant.validate()?;
        let (m, q) = (self.m(), self.q());
        if m == 0 {
            return Err(FdiError::config("eig.m", "must be >= 1"));
        }
        if q == 0 {
            return Err(FdiError::config("input.channels", "need at least one input channel"));
        }
        if self.eig.grid_size % 2 != 0 {
            return Err(FdiError::config("eig.grid_size", "must be even"));
        }
        self.sim_config().validate()?;
        let grid = self.grid()?;
        if self.plant.actuator.len() > q {
            return Err(FdiError::config(
                "plant.actuator",
                format!("{} actuator profiles for {q} input channels", self.plant.actuator.len()),
            ));
        }

        let lat = &self.lattice;
        RbfLattice::new(lat.bounds().to_vec(), lat.counts().to_vec(), lat.width())?;
        if lat.dims() != m + q {
            return Err(FdiError::config(
                "lattice",
                format!("lattice has {} dimensions but m + q = {}", lat.dims(), m + q),
            ));
        }
        if self.gains.len() != m {
            return Err(FdiError::config("gains", format!("need {m} entries, got {}", self.gains.len())));
        }
        for (i, g) in self.gains.iter().enumerate() {
            g.validate(i)?;
        }

        let t = &self.timing;
        if !(t.train_horizon > 0.0 && t.monitor_horizon > 0.0) {
            return Err(FdiError::config("timing", "horizons must be positive"));
        }
        let [t1, t2] = t.averaging_window;
        if !(0.0 <= t1 && t1 < t2 && t2 <= t.train_horizon) {
            return Err(FdiError::config(
                "timing.averaging_window",
                format!("[{t1}, {t2}] must be a non-empty interval inside [0, {}]", t.train_horizon),
            ));
        }
        if !(t.settle >= 0.0 && t.settle < t.train_horizon) {
            return Err(FdiError::config("timing.settle", "must lie in [0, train_horizon)"));
        }
        if !(t.fault_onset >= 0.0 && t.fault_onset < t.monitor_horizon) {
            return Err(FdiError::config("timing.fault_onset", "must lie in [0, monitor_horizon)"));
        }
        if t.snapshot_stride == 0 || t.trace_stride == 0 || t.output_stride == 0 || t.field_stride == 0 {
            return Err(FdiError::config("timing", "strides must be >= 1"));
        }

        self.fd_config(&self.fd.xi).validate(m)?;
        if !(self.fd.window >= 2.0 * t.dt) {
            return Err(FdiError::config("fd.window", "must span at least two samples"));
        }
        self.fi_config(&self.fd.xi).validate(m)?;

        let n = self.modes();
        if n == 0 {
            return Err(FdiError::config("faults.trained", "need at least one trained fault"));
        }
        if self.fi.bounds.len() != n {
            return Err(FdiError::config(
                "fi.bounds",
                format!("{} bounds for {n} trained faults", self.fi.bounds.len()),
            ));
        }
        for b in &self.fi.bounds {
            b.validate(m, q)?;
        }
        for (k, f) in self.faults.trained.iter().enumerate() {
            f.validate(&grid, q)
                .map_err(|e| FdiError::config(format!("faults.trained[{}]", k + 1), e.to_string()))?;
        }
        for tf in &self.faults.test {
            let path = format!("faults.test[{}]", tf.name);
            tf.fault.validate(&grid, q).map_err(|e| FdiError::config(&path, e.to_string()))?;
            if tf.similar == 0 || tf.similar > n {
                return Err(FdiError::config(&path, format!("similar mode {} not in 1..={n}", tf.similar)));
            }
            if !(tf.t0 >= 0.0 && tf.t0 < t.monitor_horizon) {
                return Err(FdiError::config(&path, "t0 must lie in [0, monitor_horizon)"));
            }
        }
        Ok(())
    }
}

/// Which fault drives a run: `none`, a trained mode `k`, or test fault `j`
/// (`test` is `test:1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultSelector {
    None,
    Trained(usize),
    Test(usize),
}

impl FaultSelector {
    /// Mode index of the training trajectory this selector names.
    pub fn mode(&self) -> usize {
        match self {
            FaultSelector::Trained(k) => *k,
            _ => 0,
        }
    }

    /// File-name tag.
    pub fn tag(&self) -> String {
        match self {
            FaultSelector::None => "normal".into(),
            FaultSelector::Trained(k) => format!("fault{k}"),
            FaultSelector::Test(j) => format!("test{j}"),
        }
    }
}

impl FromStr for FaultSelector {
    type Err = FdiError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            FdiError::config(
                "--fault",
                format!("'{s}' is not a fault selector (none, <index>, test or test:<index>)"),
            )
        };
        let s = s.trim();
        match s {
            "none" => return Ok(FaultSelector::None),
            "test" => return Ok(FaultSelector::Test(1)),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("test:") {
            return rest.parse().map(FaultSelector::Test).map_err(|_| bad());
        }
        match s.parse::<usize>() {
            Ok(0) => Ok(FaultSelector::None),
            Ok(k) => Ok(FaultSelector::Trained(k)),
            Err(_) => Err(bad()),
        }
    }
}

impl fmt::Display for FaultSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultSelector::None => write!(f, "none"),
            FaultSelector::Trained(k) => write!(f, "{k}"),
            FaultSelector::Test(j) => write!(f, "test:{j}"),
        }
    }
}
