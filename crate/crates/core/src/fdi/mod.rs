//! Fault detection and isolation: estimator banks driven by the constant RBF
//! models, windowed L1 residual norms, thresholds and the decision rules.

mod bound;
mod window;

pub use bound::{eval_similarity_bound, BoundEvaluator, SimilarityBound};
pub use window::{l1_window, window_samples, WindowNorm};

use serde::{Deserialize, Serialize};

use crate::error::{FdiError, Result};
use crate::identifier::{model_forcing, run_estimator, TrainedModel};
use crate::ode::{integrate_filter, stamp, to_half_grid};
use crate::par::Parallelism;
use crate::pdesim::ModalTrajectory;

const ESTIMATOR_GUARD: f64 = 1e8;

/// `(ξ* + ϱ) / b⁰`
pub fn fd_threshold(xi: f64, rho: f64, b: f64) -> f64 {
    (xi + rho) / b
}

/// `(ξ* + ρ̄) / b` for a constant similarity bound.
pub fn fi_constant_threshold(xi: f64, rho_bar: f64, b: f64) -> f64 {
    (xi + rho_bar) / b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    /// Estimator gains `b_i⁰`.
    pub b: Vec<f64>,
    /// Robustness margins `ϱ_i`.
    pub rho: Vec<f64>,
    /// Error bounds `ξ*_i`.
    pub xi: Vec<f64>,
    /// L1 window length `T`.
    pub window: f64,
}

impl FdConfig {
    pub fn validate(&self, m: usize) -> Result<()> {
        for (name, v) in [("fd.b", &self.b), ("fd.rho", &self.rho), ("fd.xi", &self.xi)] {
            if v.len() != m {
                return Err(FdiError::config(name, format!("need {m} values, got {}", v.len())));
            }
        }
        if self.b.iter().any(|b| !(*b > 0.0)) {
            return Err(FdiError::config("fd.b", "gains must be positive"));
        }
        if self.rho.iter().any(|r| !(*r >= 0.0)) || self.xi.iter().any(|x| !(*x >= 0.0)) {
            return Err(FdiError::config("fd.rho/xi", "must be nonnegative"));
        }
        if !(self.window > 0.0) {
            return Err(FdiError::config("fd.window", "must be positive"));
        }
        for i in 0..m {
            if !(self.threshold(i) > 0.0) {
                return Err(FdiError::config("fd", format!("threshold {} is not positive", i + 1)));
            }
        }
        Ok(())
    }

    pub fn threshold(&self, i: usize) -> f64 {
        fd_threshold(self.xi[i], self.rho[i], self.b[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiConfig {
    /// Estimator gains `b_i`.
    pub b: Vec<f64>,
    pub xi: Vec<f64>,
    pub window: f64,
    /// How long the FI bank runs after detection.
    pub horizon: f64,
}

impl FiConfig {
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.b.len() != m || self.xi.len() != m {
            return Err(FdiError::config("fi.b/xi", format!("need {m} values")));
        }
        if self.b.iter().any(|b| !(*b > 0.0)) {
            return Err(FdiError::config("fi.b", "gains must be positive"));
        }
        if !(self.window > 0.0 && self.horizon > 0.0) {
            return Err(FdiError::config("fi", "window and horizon must be positive"));
        }
        Ok(())
    }
}

/// Residual, windowed norm and threshold of one estimator at every stamp.
/// Norms and thresholds are `NaN` during warmup.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTrace {
    /// State component, 0-based.
    pub i: usize,
    /// Mode (0 for the FD bank).
    pub k: usize,
    pub t0: f64,
    pub dt: f64,
    pub residual: Vec<f64>,
    pub norm: Vec<f64>,
    pub threshold: Vec<f64>,
    pub warmup: usize,
}

impl ResidualTrace {
    pub fn len(&self) -> usize {
        self.residual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residual.is_empty()
    }

    pub fn time(&self, n: usize) -> f64 {
        stamp(self.t0, self.dt, n)
    }

    pub fn crossed(&self, n: usize) -> bool {
        n >= self.warmup && self.norm[n] > self.threshold[n]
    }

    pub fn first_crossing(&self) -> Option<usize> {
        (self.warmup..self.len()).find(|&n| self.crossed(n))
    }

    /// Largest `norm − threshold` over post-warmup stamps.
    pub fn max_margin(&self) -> f64 {
        (self.warmup..self.len())
            .map(|n| self.norm[n] - self.threshold[n])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionKind {
    Detected,
    Isolated,
    Ambiguous,
    NoneMatched,
    NoFault,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub mode: usize,
    pub time: f64,
    /// State component (1-based) whose norm crossed first.
    pub component: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DecisionDetail {
    /// 1-based components that crossed at the decision stamp.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub survivors: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclusions: Vec<Exclusion>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionEvent {
    pub kind: DecisionKind,
    pub time: f64,
    pub detail: DecisionDetail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdOutcome {
    pub traces: Vec<ResidualTrace>,
    pub event: DecisionEvent,
    /// Stamp index of the detection, if any.
    pub detection: Option<usize>,
}

impl FdOutcome {
    pub fn detection_time(&self) -> Option<f64> {
        (self.event.kind == DecisionKind::Detected).then_some(self.event.time)
    }
}

fn check_finite(values: &[f64], what: impl Fn() -> String) -> Result<()> {
    if values.iter().any(|v| !v.is_finite() || v.abs() > ESTIMATOR_GUARD) {
        return Err(FdiError::EstimatorDiverged(what()));
    }
    Ok(())
}

fn residual_of(traj: &ModalTrajectory, i: usize, xbar: &[f64]) -> Vec<f64> {
    xbar.iter()
        .zip(traj.states.iter().skip(i).step_by(traj.m))
        .map(|(a, b)| a - b)
        .collect()
}

/// FD estimator bank over the whole stream, starting at its first stamp.
pub fn run_fd(
    model: &TrainedModel,
    traj: &ModalTrajectory,
    eigvals: &[f64],
    cfg: &FdConfig,
    par: Parallelism,
) -> Result<FdOutcome> {
    let m = traj.m;
    cfg.validate(m)?;
    if model.m != m || model.q != traj.q {
        return Err(FdiError::Dimension {
            what: "model state/input dimension",
            expected: m,
            got: model.m,
        });
    }
    let w = window_samples(cfg.window, traj.dt)?;
    let weights: Vec<&[f64]> = (0..m).map(|i| model.weight(i, 0).weights.as_slice()).collect();
    let forcing = model_forcing(traj, &model.lattice, &weights, par)?;
    let mut traces = Vec::with_capacity(m);
    for i in 0..m {
        let xbar = run_estimator(traj, i, eigvals[i], cfg.b[i], &forcing[i]);
        check_finite(&xbar, || format!("FD estimator i={}", i + 1))?;
        let residual = residual_of(traj, i, &xbar);
        let (norm, warmup) = l1_window(&residual, w as f64 * traj.dt, traj.dt)?;
        let threshold = (0..residual.len())
            .map(|n| if n < warmup { f64::NAN } else { cfg.threshold(i) })
            .collect();
        traces.push(ResidualTrace {
            i,
            k: 0,
            t0: traj.t0,
            dt: traj.dt,
            residual,
            norm,
            threshold,
            warmup,
        });
    }
    let detection = traces.iter().filter_map(|t| t.first_crossing()).min();
    let event = match detection {
        Some(n) => DecisionEvent {
            kind: DecisionKind::Detected,
            time: traj.time(n),
            detail: DecisionDetail {
                components: traces.iter().filter(|t| t.crossed(n)).map(|t| t.i + 1).collect(),
                ..Default::default()
            },
        },
        None => {
            let mut detail = DecisionDetail::default();
            if traj.len() <= w {
                detail
                    .warnings
                    .push(format!("stream shorter than the L1 window ({} s): all stamps are warmup", cfg.window));
            }
            DecisionEvent {
                kind: DecisionKind::NoFault,
                time: traj.end_time(),
                detail,
            }
        }
    };
    Ok(FdOutcome {
        traces,
        event,
        detection,
    })
}

/// `ξ*/b + ‖v‖₁(t)` with `v̇ = −b v + ρ̄`, `v(t_d) = 0`; `rho_bar` starts at `t_d`.
/// Warmup stamps are `NaN`.
pub fn fi_adaptive_threshold(rho_bar: &[f64], b: f64, xi: f64, t_window: f64, dt: f64) -> Result<Vec<f64>> {
    if rho_bar.is_empty() {
        return Ok(Vec::new());
    }
    let v = integrate_filter(b, &to_half_grid(rho_bar), 0.0, dt, 0.0);
    let (norm, _) = l1_window(&v, t_window, dt)?;
    Ok(norm.into_iter().map(|n| xi / b + n).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiOutcome {
    /// Ordered by mode `k = 1..=N`, then component.
    pub traces: Vec<ResidualTrace>,
    /// Exclusion per mode (index `k − 1`), `None` for survivors.
    pub exclusions: Vec<Option<Exclusion>>,
    pub event: DecisionEvent,
}

impl FiOutcome {
    pub fn trace(&self, i: usize, k: usize) -> &ResidualTrace {
        let m = self.traces.len() / self.exclusions.len().max(1);
        &self.traces[(k - 1) * m + i]
    }

    pub fn isolated_mode(&self) -> Option<usize> {
        (self.event.kind == DecisionKind::Isolated)
            .then_some(self.event.detail.mode)
            .flatten()
    }
}

/// FI estimator bank from the detection stamp `detected_at` for `cfg.horizon`.
/// `bounds[k − 1][i]` holds `ρ̄_i^k` at every stamp of `traj`.
pub fn run_fi(
    model: &TrainedModel,
    traj: &ModalTrajectory,
    eigvals: &[f64],
    detected_at: Option<usize>,
    cfg: &FiConfig,
    bounds: &[Vec<Vec<f64>>],
    par: Parallelism,
) -> Result<FiOutcome> {
    let n_d = detected_at.ok_or(FdiError::NotDetected)?;
    let m = traj.m;
    cfg.validate(m)?;
    let modes = model.modes;
    if bounds.len() != modes || bounds.iter().any(|b| b.len() != m) {
        return Err(FdiError::Dimension {
            what: "similarity bound streams (modes x components)",
            expected: modes * m,
            got: bounds.iter().map(|b| b.len()).sum(),
        });
    }
    if n_d >= traj.len() {
        return Err(FdiError::Invalid(format!("detection stamp {n_d} beyond stream")));
    }
    let steps = (cfg.horizon / traj.dt).round() as usize;
    let end = (n_d + steps + 1).min(traj.len());
    let sub = traj.slice(n_d, end);
    let w = window_samples(cfg.window, traj.dt)?;
    let t_window = w as f64 * traj.dt;

    let weights: Vec<&[f64]> = (1..=modes)
        .flat_map(|k| (0..m).map(move |i| (i, k)))
        .map(|(i, k)| model.weight(i, k).weights.as_slice())
        .collect();
    let forcing = model_forcing(&sub, &model.lattice, &weights, par)?;

    let results = par.map(modes * m, |idx| -> Result<ResidualTrace> {
        let (k, i) = (idx / m + 1, idx % m);
        let xbar = run_estimator(&sub, i, eigvals[i], cfg.b[i], &forcing[idx]);
        check_finite(&xbar, || format!("FI estimator i={}, k={k}", i + 1))?;
        let residual = residual_of(&sub, i, &xbar);
        let (norm, warmup) = l1_window(&residual, t_window, traj.dt)?;
        let threshold = fi_adaptive_threshold(&bounds[k - 1][i][n_d..end], cfg.b[i], cfg.xi[i], t_window, traj.dt)?;
        Ok(ResidualTrace {
            i,
            k,
            t0: sub.t0,
            dt: sub.dt,
            residual,
            norm,
            threshold,
            warmup,
        })
    });
    let traces = results.into_iter().collect::<Result<Vec<_>>>()?;

    let exclusions: Vec<Option<Exclusion>> = (1..=modes)
        .map(|k| {
            traces[(k - 1) * m..k * m]
                .iter()
                .filter_map(|t| t.first_crossing().map(|n| (n, t.i)))
                .min()
                .map(|(n, i)| Exclusion {
                    mode: k,
                    time: sub.time(n),
                    component: i + 1,
                })
        })
        .collect();
    let survivors: Vec<usize> = (1..=modes).filter(|k| exclusions[k - 1].is_none()).collect();
    let excluded: Vec<Exclusion> = exclusions.iter().flatten().copied().collect();
    let last_exclusion = excluded.iter().map(|e| e.time).fold(sub.t0, f64::max);
    let event = match survivors.len() {
        1 => DecisionEvent {
            kind: DecisionKind::Isolated,
            time: last_exclusion,
            detail: DecisionDetail {
                mode: Some(survivors[0]),
                exclusions: excluded,
                ..Default::default()
            },
        },
        0 => DecisionEvent {
            kind: DecisionKind::NoneMatched,
            time: last_exclusion,
            detail: DecisionDetail {
                exclusions: excluded,
                ..Default::default()
            },
        },
        _ => DecisionEvent {
            kind: DecisionKind::Ambiguous,
            time: sub.end_time(),
            detail: DecisionDetail {
                survivors,
                exclusions: excluded,
                ..Default::default()
            },
        },
    };
    Ok(FiOutcome {
        traces,
        exclusions,
        event,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_arithmetic() {
        assert!((fd_threshold(0.0860, 0.12, 2.0) - 0.1030).abs() < 1e-12);
        assert!((fd_threshold(0.043, 0.12, 2.0) - 0.0815).abs() < 1e-12);
        assert!((fi_constant_threshold(0.0495, 0.2, 1.0) - 0.2495).abs() < 1e-12);
        assert!((fi_constant_threshold(0.086, 0.1, 2.0) - 0.093).abs() < 1e-12);
        assert!((fd_threshold(0.3, 0.0, 3.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn adaptive_threshold_limits() {
        let dt = 0.01;
        let zero = fi_adaptive_threshold(&vec![0.0; 500], 2.0, 0.1, 1.0, dt).unwrap();
        assert!(zero[100..].iter().all(|v| (v - 0.05).abs() < 1e-15));
        let c = fi_adaptive_threshold(&vec![0.2; 5000], 1.0, 0.0495, 2.0, dt).unwrap();
        assert!((c.last().unwrap() - 0.2495).abs() < 1e-12);
        assert!(c[..200].iter().all(|v| v.is_nan()));
    }
}
