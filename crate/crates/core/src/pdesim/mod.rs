//! Method-of-lines ground truth for
//! `x_t = a1 x_z + a2 x_zz + f(x, u) + β(t − t0) φ(x, u)` with
//! `f(x, u) = β_T (e^{−γ/(1+x)} − e^{−γ}) + β_u (b(z)·u − x)`.

mod fault;
mod signal;

pub use fault::{window_mask, FaultKind, FaultSpec, SineSeries, SineTerm, Table3};
pub(crate) use fault::CompiledFault;
pub use signal::{beta_profile, Harmonic, InputChannel, InputSignal};

use serde::{Deserialize, Serialize};

use crate::error::{FdiError, Result};
use crate::ode::{stamp, OdeSystem, Rk4};
use crate::spectral::{EigenSystem, OperatorSpec, SpatialField, SpatialGrid};

/// Distance kept from the `x = −1` singularity of the reaction term.
pub const REACTION_GUARD: f64 = 0.5;
/// Any |x| above this aborts the simulation.
pub const BLOWUP_GUARD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub beta_t: f64,
    pub gamma: f64,
}

/// `e^{−γ/(1+x)} − e^{−γ}`
#[inline]
pub fn reaction_shape(x: f64, gamma: f64) -> f64 {
    (-gamma / (1.0 + x)).exp() - (-gamma).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialProfile {
    Sine(SineSeries),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    pub op: OperatorSpec,
    pub reaction: Reaction,
    pub beta_u: f64,
    /// Actuator distribution `b(z)`, one series per input channel.
    pub actuator: Vec<SineSeries>,
    pub initial: InitialProfile,
}

impl PlantModel {
    /// The catalytic rod: `β_T = 50, γ = 4, β_u = 2`,
    /// `b(z) = 1.5 sin z + 1.8 sin 2z + 2 sin 3z`, `x_0 = 15 sin z`.
    pub fn catalytic_rod() -> Self {
        Self {
            op: OperatorSpec::dirichlet_diffusion(1.0),
            reaction: Reaction {
                beta_t: 50.0,
                gamma: 4.0,
            },
            beta_u: 2.0,
            actuator: vec![SineSeries(vec![
                SineTerm(1.5, 1.0),
                SineTerm(1.8, 2.0),
                SineTerm(2.0, 3.0),
            ])],
            initial: InitialProfile::Sine(SineSeries(vec![SineTerm(15.0, 1.0)])),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.op.validate()?;
        if self.reaction.beta_t != 0.0 && !(self.reaction.gamma > 0.0) {
            return Err(FdiError::config("plant.gamma", "activation energy must be positive"));
        }
        Ok(())
    }

    pub fn initial_field(&self, grid: &SpatialGrid) -> Result<Vec<f64>> {
        let mut values = match &self.initial {
            InitialProfile::Sine(s) => s.sample(grid),
            InitialProfile::Values(v) => {
                if v.len() != grid.len() {
                    return Err(FdiError::Dimension {
                        what: "initial profile",
                        expected: grid.len(),
                        got: v.len(),
                    });
                }
                v.clone()
            }
        };
        let last = values.len() - 1;
        if self.op.left.is_dirichlet() {
            values[0] = self.op.left.d / self.op.left.m;
        }
        if self.op.right.is_dirichlet() {
            values[last] = self.op.right.d / self.op.right.m;
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Convection {
    #[default]
    Central,
    Upwind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Output (sampling) step.
    pub dt: f64,
    /// Number of spatial intervals (even).
    pub grid_size: usize,
    #[serde(default)]
    pub convection: Convection,
    /// Fraction of the explicit diffusion bound `Δz²/(2|a2|)` used as the
    /// internal RK4 step; each output step is split into equal substeps.
    #[serde(default = "default_safety")]
    pub safety: f64,
}

fn default_safety() -> f64 {
    0.9
}

impl SimConfig {
    pub fn new(dt: f64, grid_size: usize) -> Self {
        Self {
            dt,
            grid_size,
            convection: Convection::Central,
            safety: default_safety(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(FdiError::config("timing.dt", "must be positive"));
        }
        if self.grid_size < 50 {
            return Err(FdiError::config("plant.grid_size", "need at least 50 intervals"));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(FdiError::config("plant.safety", "must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn substeps(&self, op: &OperatorSpec) -> usize {
        let dz = op.length() / self.grid_size as f64;
        let bound = self.safety * dz * dz / (2.0 * op.a2.abs());
        (self.dt / bound).ceil().max(1.0) as usize
    }
}

struct MolSystem<'a> {
    plant: &'a PlantModel,
    sig: &'a InputSignal,
    fault: Option<(CompiledFault, f64)>,
    convection: Convection,
    dz: f64,
    actuator: Vec<Vec<f64>>,
    needs_reaction: bool,
    exp_neg_gamma: f64,
    reaction: Vec<f64>,
    u: Vec<f64>,
    points: Vec<f64>,
    violation: Option<(f64, usize, f64)>,
}

impl<'a> MolSystem<'a> {
    fn new(
        plant: &'a PlantModel,
        sig: &'a InputSignal,
        fault: Option<&FaultSpec>,
        cfg: &SimConfig,
        grid: &SpatialGrid,
    ) -> Self {
        let fault = fault.map(|f| (CompiledFault::new(&f.kind, grid), f.t0));
        let needs_reaction = plant.reaction.beta_t != 0.0
            || fault
                .as_ref()
                .is_some_and(|(f, _)| matches!(f, CompiledFault::Gain { .. }));
        Self {
            plant,
            sig,
            convection: cfg.convection,
            dz: grid.dz(),
            actuator: plant.actuator.iter().map(|s| s.sample(grid)).collect(),
            needs_reaction,
            exp_neg_gamma: (-plant.reaction.gamma).exp(),
            reaction: vec![0.0; grid.len()],
            u: vec![0.0; sig.q()],
            points: grid.points(),
            violation: None,
            fault,
        }
    }
}

impl OdeSystem for MolSystem<'_> {
    fn dim(&self) -> usize {
        self.points.len()
    }

    fn derivative(&mut self, t: f64, x: &[f64], dx: &mut [f64]) {
        let n = x.len() - 1;
        let op = &self.plant.op;
        let gamma = self.plant.reaction.gamma;
        let beta_t = self.plant.reaction.beta_t;
        let beta_u = self.plant.beta_u;
        self.sig.eval_into(t, &mut self.u);

        if self.needs_reaction {
            let limit = -1.0 + REACTION_GUARD;
            for (j, (r, &xj)) in self.reaction.iter_mut().zip(x).enumerate() {
                if xj <= limit && self.violation.is_none() {
                    self.violation = Some((t, j, xj));
                }
                *r = (-gamma / (1.0 + xj)).exp() - self.exp_neg_gamma;
            }
        }

        let c2 = op.a2 / (self.dz * self.dz);
        let inv2dz = 1.0 / (2.0 * self.dz);
        let inv_dz = 1.0 / self.dz;
        let a1 = op.a1;

        let left_ghost = (!op.left.is_dirichlet())
            .then(|| x[1] - 2.0 * self.dz * (op.left.d - op.left.m * x[0]) / op.left.n);
        let right_ghost = (!op.right.is_dirichlet())
            .then(|| x[n - 1] + 2.0 * self.dz * (op.right.d - op.right.m * x[n]) / op.right.n);

        let neighbour = |j: isize| -> f64 {
            if j < 0 {
                left_ghost.unwrap_or(0.0)
            } else if j as usize > n {
                right_ghost.unwrap_or(0.0)
            } else {
                x[j as usize]
            }
        };

        let first = if op.left.is_dirichlet() { 1 } else { 0 };
        let last = if op.right.is_dirichlet() { n - 1 } else { n };
        for j in first..=last {
            let (xm, xc, xp) = if j == 0 || j == n {
                let ji = j as isize;
                (neighbour(ji - 1), x[j], neighbour(ji + 1))
            } else {
                (x[j - 1], x[j], x[j + 1])
            };
            let conv = if a1 == 0.0 {
                0.0
            } else {
                match self.convection {
                    Convection::Central => a1 * (xp - xm) * inv2dz,
                    Convection::Upwind if a1 > 0.0 => a1 * (xp - xc) * inv_dz,
                    Convection::Upwind => a1 * (xc - xm) * inv_dz,
                }
            };
            let mut act = 0.0;
            for (b, u) in self.actuator.iter().zip(&self.u) {
                act += b[j] * u;
            }
            let mut v = c2 * (xp - 2.0 * xc + xm) + conv + beta_u * (act - xc);
            if beta_t != 0.0 {
                v += beta_t * self.reaction[j];
            }
            dx[j] = v;
        }
        if first == 1 {
            dx[0] = 0.0;
        }
        if last == n - 1 {
            dx[n] = 0.0;
        }

        if let Some((fault, t0)) = &self.fault {
            if beta_profile(t, *t0) > 0.0 {
                fault.add_into(x, &self.reaction, &self.u, beta_u, dx, first..last + 1);
            }
        }
    }
}

/// Drive the simulation and hand every output stamp to `observe`
/// (`stamp index, t, field samples, u(t)`).
pub fn simulate_streaming<F>(
    plant: &PlantModel,
    fault: Option<&FaultSpec>,
    sig: &InputSignal,
    t_end: f64,
    cfg: &SimConfig,
    mut observe: F,
) -> Result<SpatialGrid>
where
    F: FnMut(usize, f64, &[f64], &[f64]) -> Result<()>,
{
    plant.validate()?;
    cfg.validate()?;
    let grid = SpatialGrid::new(plant.op.z1, plant.op.z2, cfg.grid_size)?;
    if plant.actuator.len() > sig.q() {
        return Err(FdiError::config(
            "plant.actuator",
            format!("{} actuator channels but input has {}", plant.actuator.len(), sig.q()),
        ));
    }
    if let Some(f) = fault {
        f.kind.validate(&grid, sig.q())?;
    }
    let steps = (t_end / cfg.dt).round() as usize;
    let substeps = cfg.substeps(&plant.op);
    let h = cfg.dt / substeps as f64;

    let mut x = plant.initial_field(&grid)?;
    let mut sys = MolSystem::new(plant, sig, fault, cfg, &grid);
    let mut rk = Rk4::new(x.len());
    let mut u = sig.eval(0.0);
    observe(0, 0.0, &x, &u)?;
    for n in 0..steps {
        let t_n = stamp(0.0, cfg.dt, n);
        for s in 0..substeps {
            rk.step(&mut sys, t_n + s as f64 * h, h, &mut x);
        }
        let t = stamp(0.0, cfg.dt, n + 1);
        if let Some((tv, j, xv)) = sys.violation {
            return Err(FdiError::ReactionDomain {
                t: tv,
                z: grid.point(j),
                x: xv,
                limit: -1.0 + REACTION_GUARD,
            });
        }
        let peak = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(peak <= BLOWUP_GUARD) {
            return Err(FdiError::SimulationDiverged { t, value: peak });
        }
        sig.eval_into(t, &mut u);
        observe(n + 1, t, &x, &u)?;
    }
    Ok(grid)
}

/// Modal projection `⟨φ_i, φ(x, u)⟩` of a fault function, evaluated on
/// sampled fields (simulation-side truth for the analysis checks).
#[derive(Debug, Clone)]
pub struct FaultProjector {
    fault: CompiledFault,
    gamma: f64,
    beta_u: f64,
    reaction: Vec<f64>,
    values: Vec<f64>,
}

impl FaultProjector {
    pub fn new(kind: &FaultKind, plant: &PlantModel, grid: &SpatialGrid) -> Self {
        Self {
            fault: CompiledFault::new(kind, grid),
            gamma: plant.reaction.gamma,
            beta_u: plant.beta_u,
            reaction: vec![0.0; grid.len()],
            values: vec![0.0; grid.len()],
        }
    }

    pub fn project(&mut self, eig: &EigenSystem, x: &[f64], u: &[f64], out: &mut [f64]) {
        if matches!(self.fault, CompiledFault::Gain { .. }) {
            for (r, &xv) in self.reaction.iter_mut().zip(x) {
                *r = reaction_shape(xv, self.gamma);
            }
        }
        self.fault.eval_into(x, &self.reaction, u, self.beta_u, &mut self.values);
        eig.project_values(&self.values, out);
    }
}

/// Uniformly sampled field trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTrajectory {
    pub grid: SpatialGrid,
    pub dt: f64,
    pub times: Vec<f64>,
    pub fields: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
}

impl FieldTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn field(&self, n: usize) -> SpatialField {
        SpatialField {
            grid: self.grid,
            values: self.fields[n].clone(),
        }
    }
}

/// Simulate and keep every `record_every`-th output stamp.
pub fn simulate_pde(
    plant: &PlantModel,
    fault: Option<&FaultSpec>,
    sig: &InputSignal,
    t_end: f64,
    cfg: &SimConfig,
    record_every: usize,
) -> Result<FieldTrajectory> {
    let every = record_every.max(1);
    let mut times = Vec::new();
    let mut fields = Vec::new();
    let mut inputs = Vec::new();
    let grid = simulate_streaming(plant, fault, sig, t_end, cfg, |n, t, x, u| {
        if n % every == 0 {
            times.push(t);
            fields.push(x.to_vec());
            inputs.push(u.to_vec());
        }
        Ok(())
    })?;
    Ok(FieldTrajectory {
        grid,
        dt: cfg.dt * every as f64,
        times,
        fields,
        inputs,
    })
}

/// Modal coordinates and inputs on a uniform time grid, stored flat.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModalTrajectory {
    pub t0: f64,
    pub dt: f64,
    pub m: usize,
    pub q: usize,
    pub states: Vec<f64>,
    pub inputs: Vec<f64>,
}

impl ModalTrajectory {
    pub fn new(t0: f64, dt: f64, m: usize, q: usize) -> Self {
        Self {
            t0,
            dt,
            m,
            q,
            states: Vec::new(),
            inputs: Vec::new(),
        }
    }

    pub fn push(&mut self, xs: &[f64], u: &[f64]) {
        debug_assert_eq!(xs.len(), self.m);
        debug_assert_eq!(u.len(), self.q);
        self.states.extend_from_slice(xs);
        self.inputs.extend_from_slice(u);
    }

    pub fn len(&self) -> usize {
        if self.m == 0 {
            0
        } else {
            self.states.len() / self.m
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, n: usize) -> f64 {
        stamp(self.t0, self.dt, n)
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n * self.m..(n + 1) * self.m]
    }

    pub fn input(&self, n: usize) -> &[f64] {
        &self.inputs[n * self.q..(n + 1) * self.q]
    }

    /// Component `i` of the modal state over all stamps.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states.iter().skip(i).step_by(self.m).copied().collect()
    }

    /// Regressor input `Z = (x_s, u)` at stamp `n`.
    pub fn regressor_into(&self, n: usize, out: &mut [f64]) {
        out[..self.m].copy_from_slice(self.state(n));
        out[self.m..].copy_from_slice(self.input(n));
    }

    /// `Z` halfway between stamps `n` and `n + 1` (piecewise-linear).
    pub fn regressor_mid_into(&self, n: usize, out: &mut [f64]) {
        let (a, b) = (self.state(n), self.state(n + 1));
        for (o, (a, b)) in out[..self.m].iter_mut().zip(a.iter().zip(b)) {
            *o = 0.5 * (a + b);
        }
        let (a, b) = (self.input(n), self.input(n + 1));
        for (o, (a, b)) in out[self.m..].iter_mut().zip(a.iter().zip(b)) {
            *o = 0.5 * (a + b);
        }
    }

    /// Sub-trajectory starting at stamp `start` (inclusive) up to `end` (exclusive).
    pub fn slice(&self, start: usize, end: usize) -> ModalTrajectory {
        ModalTrajectory {
            t0: self.time(start),
            dt: self.dt,
            m: self.m,
            q: self.q,
            states: self.states[start * self.m..end * self.m].to_vec(),
            inputs: self.inputs[start * self.q..end * self.q].to_vec(),
        }
    }
}

/// Project every recorded field onto the slow eigenfunctions.
pub fn measure_modal(traj: &FieldTrajectory, eig: &EigenSystem) -> Result<ModalTrajectory> {
    traj.grid.ensure_same(&eig.grid)?;
    let q = traj.inputs.first().map_or(0, |u| u.len());
    let mut out = ModalTrajectory::new(traj.times.first().copied().unwrap_or(0.0), traj.dt, eig.m, q);
    let mut xs = vec![0.0; eig.m];
    for (field, u) in traj.fields.iter().zip(&traj.inputs) {
        eig.project_values(field, &mut xs);
        out.push(&xs, u);
    }
    Ok(out)
}
