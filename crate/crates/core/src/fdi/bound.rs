use serde::{Deserialize, Serialize};

use crate::error::{FdiError, Result};
use crate::pdesim::{reaction_shape, PlantModel, Table3};
use crate::spectral::{EigenSystem, SpatialField};

/// Known bound `φ̄^k(x, u)` on the mismatch between an occurring fault and
/// trained fault `k`, or a constant modal bound `ρ̄_i^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum SimilarityBound {
    /// `ρ̄_i` given directly per state component.
    Constant { values: Vec<f64> },
    /// `|Δ · β_u · u_channel|`, uniform in `z`.
    Actuator {
        delta: f64,
        #[serde(default)]
        channel: usize,
    },
    /// `|gain · x(z)|` on `[z_lo, z_hi)`.
    StateWindow { z_lo: f64, z_hi: f64, gain: f64 },
    /// `|Δ · (e^{−γ/(1+x)} − e^{−γ})|`
    ComponentGain { delta: f64 },
    /// `|table(z, x, u_0)|`
    Tabulated { table: Table3 },
}

impl SimilarityBound {
    pub fn is_constant(&self) -> bool {
        matches!(self, SimilarityBound::Constant { .. })
    }

    /// `ρ̄_i` of a constant bound.
    pub fn constant_value(&self, i: usize) -> Result<f64> {
        match self {
            SimilarityBound::Constant { values } => values.get(i).copied().ok_or(FdiError::Dimension {
                what: "constant bound components",
                expected: i + 1,
                got: values.len(),
            }),
            _ => Err(FdiError::NonConstantBound),
        }
    }

    pub fn validate(&self, m: usize, q: usize) -> Result<()> {
        match self {
            SimilarityBound::Constant { values } => {
                if values.len() != m {
                    return Err(FdiError::config("fi.bounds.values", format!("need {m} values, got {}", values.len())));
                }
                if values.iter().any(|v| !(*v >= 0.0)) {
                    return Err(FdiError::config("fi.bounds.values", "bounds must be nonnegative"));
                }
            }
            SimilarityBound::Actuator { channel, .. } if *channel >= q => {
                return Err(FdiError::config("fi.bounds.channel", format!("channel {channel} >= q = {q}")));
            }
            SimilarityBound::StateWindow { z_lo, z_hi, .. } if !(z_lo < z_hi) => {
                return Err(FdiError::config("fi.bounds", "empty state window"));
            }
            SimilarityBound::Tabulated { table } => table.validate()?,
            _ => {}
        }
        Ok(())
    }
}

/// Evaluates `ρ̄_i = ∫ φ̄(x, u) |φ_i(z)| dz` by Simpson quadrature.
#[derive(Debug, Clone)]
pub struct BoundEvaluator {
    /// `|φ_i(z_j)| · w_j` per slow mode.
    abs_weighted: Vec<Vec<f64>>,
    points: Vec<f64>,
    beta_u: f64,
    gamma: f64,
}

impl BoundEvaluator {
    pub fn new(eig: &EigenSystem, plant: &PlantModel) -> Self {
        let w = eig.grid.simpson_weights();
        let abs_weighted = (0..eig.m)
            .map(|i| {
                eig.eigenfunction(i)
                    .values
                    .iter()
                    .zip(&w)
                    .map(|(p, w)| p.abs() * w)
                    .collect()
            })
            .collect();
        Self {
            abs_weighted,
            points: eig.grid.points(),
            beta_u: plant.beta_u,
            gamma: plant.reaction.gamma,
        }
    }

    pub fn m(&self) -> usize {
        self.abs_weighted.len()
    }

    /// `ρ̄_i` for all `i` at one stamp; `x` holds field samples.
    pub fn eval_into(&self, bound: &SimilarityBound, x: &[f64], u: &[f64], out: &mut [f64]) {
        match bound {
            SimilarityBound::Constant { values } => out.copy_from_slice(&values[..out.len()]),
            SimilarityBound::Actuator { delta, channel } => {
                let s = (delta * self.beta_u * u[*channel]).abs();
                for (o, aw) in out.iter_mut().zip(&self.abs_weighted) {
                    *o = s * aw.iter().sum::<f64>();
                }
            }
            SimilarityBound::StateWindow { z_lo, z_hi, gain } => {
                for (o, aw) in out.iter_mut().zip(&self.abs_weighted) {
                    *o = aw
                        .iter()
                        .zip(x)
                        .zip(&self.points)
                        .filter(|(_, &z)| z >= *z_lo && z < *z_hi)
                        .map(|((w, xv), _)| w * (gain * xv).abs())
                        .sum();
                }
            }
            SimilarityBound::ComponentGain { delta } => {
                for (o, aw) in out.iter_mut().zip(&self.abs_weighted) {
                    *o = aw
                        .iter()
                        .zip(x)
                        .map(|(w, &xv)| w * (delta * reaction_shape(xv, self.gamma)).abs())
                        .sum();
                }
            }
            SimilarityBound::Tabulated { table } => {
                let u0 = u.first().copied().unwrap_or(0.0);
                for (o, aw) in out.iter_mut().zip(&self.abs_weighted) {
                    *o = aw
                        .iter()
                        .zip(x)
                        .zip(&self.points)
                        .map(|((w, &xv), &z)| w * table.eval(z, xv, u0).abs())
                        .sum();
                }
            }
        }
    }
}

/// `ρ̄_i^k(x, u) = ∫ φ̄^k(x, u) |φ_i(z)| dz` for a single component.
pub fn eval_similarity_bound(
    bound: &SimilarityBound,
    eig: &EigenSystem,
    plant: &PlantModel,
    field: &SpatialField,
    u: &[f64],
    i: usize,
) -> Result<f64> {
    field.grid.ensure_same(&eig.grid)?;
    if i >= eig.m {
        return Err(FdiError::Invalid(format!("state index {i} >= m = {}", eig.m)));
    }
    if let SimilarityBound::Actuator { channel, .. } = bound {
        if *channel >= u.len() {
            return Err(FdiError::Invalid(format!("bound channel {channel} >= q = {}", u.len())));
        }
    }
    let ev = BoundEvaluator::new(eig, plant);
    let mut out = vec![0.0; eig.m];
    ev.eval_into(bound, &field.values, u, &mut out);
    Ok(out[i])
}
