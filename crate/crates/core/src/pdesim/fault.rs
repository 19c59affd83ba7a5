use serde::{Deserialize, Serialize};

use crate::error::{FdiError, Result};
use crate::spectral::SpatialGrid;

/// `amplitude · sin(wavenumber · z)`, serialized as `[a, k]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineTerm(pub f64, pub f64);

/// Spatial profile `Σ a_j sin(k_j z)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SineSeries(pub Vec<SineTerm>);

impl SineSeries {
    pub fn eval(&self, z: f64) -> f64 {
        self.0.iter().map(|t| t.0 * (t.1 * z).sin()).sum()
    }

    pub fn sample(&self, grid: &SpatialGrid) -> Vec<f64> {
        grid.points().into_iter().map(|z| self.eval(z)).collect()
    }
}

/// Trilinear table over `(z, x, u_0)`, values stored row-major in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3 {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub values: Vec<f64>,
}

impl Table3 {
    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [("z", &self.z), ("x", &self.x), ("u", &self.u)] {
            if axis.is_empty() || axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(FdiError::config(
                    format!("table.{name}"),
                    "axis must be non-empty and strictly increasing",
                ));
            }
        }
        let expected = self.z.len() * self.x.len() * self.u.len();
        if self.values.len() != expected {
            return Err(FdiError::Dimension {
                what: "table values",
                expected,
                got: self.values.len(),
            });
        }
        Ok(())
    }

    fn locate(axis: &[f64], v: f64) -> (usize, f64) {
        if axis.len() == 1 || v <= axis[0] {
            return (0, 0.0);
        }
        let last = axis.len() - 1;
        if v >= axis[last] {
            return (last - 1, 1.0);
        }
        let i = axis.partition_point(|a| *a <= v) - 1;
        (i, (v - axis[i]) / (axis[i + 1] - axis[i]))
    }

    /// Trilinear interpolation, clamped at the table edges.
    pub fn eval(&self, z: f64, x: f64, u: f64) -> f64 {
        let (nz, nx, nu) = (self.z.len(), self.x.len(), self.u.len());
        let (iz, fz) = Self::locate(&self.z, z);
        let (ix, fx) = Self::locate(&self.x, x);
        let (iu, fu) = Self::locate(&self.u, u);
        let at = |a: usize, b: usize, c: usize| {
            self.values[a.min(nz - 1) * nx * nu + b.min(nx - 1) * nu + c.min(nu - 1)]
        };
        let mut acc = 0.0;
        for (dz, wz) in [(0, 1.0 - fz), (1, fz)] {
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                for (du, wu) in [(0, 1.0 - fu), (1, fu)] {
                    let w = wz * wx * wu;
                    if w != 0.0 {
                        acc += w * at(iz + dz, ix + dx, iu + du);
                    }
                }
            }
        }
        acc
    }
}

/// Fault function families `φ(x, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    /// `Δb(z) · β_u · u_channel`
    ActuatorDistribution {
        delta_b: SineSeries,
        #[serde(default)]
        channel: usize,
    },
    /// `gain · (h(z − z_lo) − h(z − z_hi)) · x`, window taken half-open.
    StateWindow { z_lo: f64, z_hi: f64, gain: f64 },
    /// `Δβ_T · (e^{−γ/(1+x)} − e^{−γ})`
    ComponentGain { delta_beta_t: f64 },
    Tabulated { table: Table3 },
}

impl FaultKind {
    pub fn validate(&self, grid: &SpatialGrid, q: usize) -> Result<()> {
        match self {
            FaultKind::ActuatorDistribution { channel, .. } if *channel >= q => Err(
                FdiError::config("fault.channel", format!("channel {channel} >= q = {q}")),
            ),
            FaultKind::StateWindow { z_lo, z_hi, .. } => {
                if !(z_lo < z_hi) || *z_lo < grid.z1 || *z_hi > grid.z2 {
                    Err(FdiError::config(
                        "fault.z_lo/z_hi",
                        format!("window [{z_lo}, {z_hi}) must be non-empty inside [{}, {}]", grid.z1, grid.z2),
                    ))
                } else {
                    Ok(())
                }
            }
            FaultKind::Tabulated { table } => table.validate(),
            _ => Ok(()),
        }
    }

    pub fn uses_reaction(&self) -> bool {
        matches!(self, FaultKind::ComponentGain { .. })
    }

    /// Scale the fault magnitude (used for detectability sweeps).
    pub fn scaled(&self, factor: f64) -> FaultKind {
        match self.clone() {
            FaultKind::ActuatorDistribution { delta_b, channel } => FaultKind::ActuatorDistribution {
                delta_b: SineSeries(delta_b.0.into_iter().map(|t| SineTerm(t.0 * factor, t.1)).collect()),
                channel,
            },
            FaultKind::StateWindow { z_lo, z_hi, gain } => FaultKind::StateWindow {
                z_lo,
                z_hi,
                gain: gain * factor,
            },
            FaultKind::ComponentGain { delta_beta_t } => FaultKind::ComponentGain {
                delta_beta_t: delta_beta_t * factor,
            },
            FaultKind::Tabulated { mut table } => {
                table.values.iter_mut().for_each(|v| *v *= factor);
                FaultKind::Tabulated { table }
            }
        }
    }
}

/// A fault function with its occurrence time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub t0: f64,
}

impl FaultSpec {
    pub fn new(kind: FaultKind, t0: f64) -> Result<Self> {
        if !(t0 >= 0.0) {
            return Err(FdiError::config("fault.t0", "occurrence time must be >= 0"));
        }
        Ok(Self { kind, t0 })
    }
}

/// Indicator of `[z_lo, z_hi)` at the grid nodes.
pub fn window_mask(grid: &SpatialGrid, z_lo: f64, z_hi: f64) -> Vec<f64> {
    grid.points()
        .into_iter()
        .map(|z| if z >= z_lo && z < z_hi { 1.0 } else { 0.0 })
        .collect()
}

/// Fault function pre-sampled on a grid.
#[derive(Debug, Clone)]
pub(crate) enum CompiledFault {
    Actuator { profile: Vec<f64>, channel: usize },
    Window { mask: Vec<f64> },
    Gain { delta: f64 },
    Table { table: Table3, z: Vec<f64> },
}

impl CompiledFault {
    pub fn new(kind: &FaultKind, grid: &SpatialGrid) -> Self {
        match kind {
            FaultKind::ActuatorDistribution { delta_b, channel } => CompiledFault::Actuator {
                profile: delta_b.sample(grid),
                channel: *channel,
            },
            FaultKind::StateWindow { z_lo, z_hi, gain } => CompiledFault::Window {
                mask: window_mask(grid, *z_lo, *z_hi).into_iter().map(|m| m * gain).collect(),
            },
            FaultKind::ComponentGain { delta_beta_t } => CompiledFault::Gain { delta: *delta_beta_t },
            FaultKind::Tabulated { table } => CompiledFault::Table {
                table: table.clone(),
                z: grid.points(),
            },
        }
    }

    /// `φ(x(z_j), u)` at every node; `reaction` holds `e^{−γ/(1+x)} − e^{−γ}`.
    pub fn eval_into(&self, x: &[f64], reaction: &[f64], u: &[f64], beta_u: f64, out: &mut [f64]) {
        match self {
            CompiledFault::Actuator { profile, channel } => {
                let s = beta_u * u[*channel];
                for (o, p) in out.iter_mut().zip(profile) {
                    *o = p * s;
                }
            }
            CompiledFault::Window { mask } => {
                for ((o, m), x) in out.iter_mut().zip(mask).zip(x) {
                    *o = m * x;
                }
            }
            CompiledFault::Gain { delta } => {
                for (o, r) in out.iter_mut().zip(reaction) {
                    *o = delta * r;
                }
            }
            CompiledFault::Table { table, z } => {
                let u0 = u.first().copied().unwrap_or(0.0);
                for ((o, z), x) in out.iter_mut().zip(z).zip(x) {
                    *o = table.eval(*z, *x, u0);
                }
            }
        }
    }

    /// `out += φ`, nodes `range` only.
    pub fn add_into(
        &self,
        x: &[f64],
        reaction: &[f64],
        u: &[f64],
        beta_u: f64,
        out: &mut [f64],
        range: std::ops::Range<usize>,
    ) {
        match self {
            CompiledFault::Actuator { profile, channel } => {
                let s = beta_u * u[*channel];
                for j in range {
                    out[j] += profile[j] * s;
                }
            }
            CompiledFault::Window { mask } => {
                for j in range {
                    out[j] += mask[j] * x[j];
                }
            }
            CompiledFault::Gain { delta } => {
                for j in range {
                    out[j] += delta * reaction[j];
                }
            }
            CompiledFault::Table { table, z } => {
                let u0 = u.first().copied().unwrap_or(0.0);
                for j in range {
                    out[j] += table.eval(z[j], x[j], u0);
                }
            }
        }
    }
}
