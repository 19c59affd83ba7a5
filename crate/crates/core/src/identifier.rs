//! Deterministic-learning identification of the modal dynamics
//! `η_i^k(x_s, u)` with the adaptive identifier
//!
//! ```text
//! x̂̇_i = −a_i (x̂_i − x_si) + λ_i x_si + Ŵ_iᵀ S(x_s, u)
//! Ŵ̇_i  = −σ_i Γ_i Ŵ_i − Γ_i (x̂_i − x_si) S(x_s, u)
//! ```
//!
//! The weight equation is linear in `Ŵ`, so every RK4 stage weight is a
//! combination `α Ŵ + β_0 S(t) + β_½ S(t + h/2) + β_1 S(t + h)`. A step
//! therefore needs only dot products against the three basis vectors and one
//! update pass, and the basis vectors are shared by all components `i`.

use serde::{Deserialize, Serialize};

use crate::error::{FdiError, Result};
use crate::ode::{integrate_filter, stamp};
use crate::par::Parallelism;
use crate::pdesim::ModalTrajectory;
use crate::rbf::{dot, BasisEvaluator, RbfLattice, WeightFile, WeightHeader, WeightVector};

/// Largest |x̂| or weight norm tolerated before training is aborted.
const DIVERGENCE_GUARD: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentifierGains {
    pub a: f64,
    pub gamma: f64,
    pub sigma: f64,
}

impl IdentifierGains {
    pub const BENCHMARK: IdentifierGains = IdentifierGains {
        a: 4.0,
        gamma: 0.35,
        sigma: 0.001,
    };

    pub fn validate(&self, i: usize) -> Result<()> {
        if !(self.a > 0.0 && self.gamma > 0.0 && self.sigma > 0.0) {
            return Err(FdiError::config(
                format!("gains[{i}]"),
                "a, gamma and sigma must be strictly positive",
            ));
        }
        if self.sigma > 0.01 * self.gamma {
            return Err(FdiError::config(
                format!("gains[{i}].sigma"),
                format!("sigma {} exceeds 0.01 * gamma", self.sigma),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    /// Averaging window `[t1, t2]`.
    pub window: [f64; 2],
    /// Keep a weight snapshot every this many stamps.
    pub snapshot_every: usize,
    /// Emit a trace row every this many stamps.
    pub trace_every: usize,
}

/// Strided weight snapshots.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightHistory {
    pub times: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
}

impl WeightHistory {
    /// Weights at the snapshot nearest to `t`.
    pub fn at(&self, t: f64) -> Option<&[f64]> {
        let n = self.times.len();
        if n == 0 {
            return None;
        }
        let j = self.times.partition_point(|&s| s < t).min(n - 1);
        let j = if j > 0 && (t - self.times[j - 1]).abs() <= (self.times[j] - t).abs() {
            j - 1
        } else {
            j
        };
        Some(&self.weights[j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub xhat: f64,
    pub xs: f64,
    pub err: f64,
    pub weight_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub i: usize,
    pub k: usize,
    /// max |x̂ − x_s| inside the averaging window.
    pub steady_error: f64,
    pub max_abs_xhat: f64,
    pub max_weight_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifierRun {
    pub averaged: WeightVector,
    pub history: WeightHistory,
    pub trace: Vec<TraceRow>,
    pub stats: TrainStats,
}

/// Stage weight `α Ŵ + Σ β_j S_j` over `S(t), S(t + h/2), S(t + h)`.
#[derive(Debug, Clone, Copy)]
struct Combo {
    alpha: f64,
    beta: [f64; 3],
}

impl Combo {
    const IDENTITY: Combo = Combo {
        alpha: 1.0,
        beta: [0.0; 3],
    };

    fn axpy(self, s: f64, other: Combo) -> Combo {
        Combo {
            alpha: self.alpha + s * other.alpha,
            beta: [
                self.beta[0] + s * other.beta[0],
                self.beta[1] + s * other.beta[1],
                self.beta[2] + s * other.beta[2],
            ],
        }
    }

    /// Dot with `S_j` given `p = Ŵ·S_*` and the Gram matrix.
    fn dot(self, j: usize, p: &[f64; 3], gram: &[[f64; 3]; 3]) -> f64 {
        self.alpha * p[j] + self.beta[0] * gram[0][j] + self.beta[1] * gram[1][j] + self.beta[2] * gram[2][j]
    }
}

struct Lane {
    i: usize,
    gains: IdentifierGains,
    lambda: f64,
    xhat: f64,
    w: Vec<f64>,
    acc: Vec<f64>,
    /// `Ŵ·S(t_n)`, carried algebraically from the previous update.
    p0: f64,
    run: IdentifierRun,
}

/// Train the identifiers of the listed components for mode `k` along one
/// modal trajectory. Components share basis evaluations.
pub fn train_mode(
    traj: &ModalTrajectory,
    eigvals: &[f64],
    lat: &RbfLattice,
    gains: &[IdentifierGains],
    components: &[usize],
    k: usize,
    opts: &TrainOptions,
) -> Result<Vec<IdentifierRun>> {
    let d = traj.m + traj.q;
    if lat.dims() != d {
        return Err(FdiError::Dimension {
            what: "lattice dimension vs m + q",
            expected: d,
            got: lat.dims(),
        });
    }
    if eigvals.len() < traj.m || gains.len() < traj.m {
        return Err(FdiError::Dimension {
            what: "eigenvalues/gains per state",
            expected: traj.m,
            got: eigvals.len().min(gains.len()),
        });
    }
    let len = traj.len();
    if len < 2 {
        return Err(FdiError::Invalid("training trajectory needs at least two stamps".into()));
    }
    let h = traj.dt;
    let [t1, t2] = opts.window;
    let n1 = ((t1 - traj.t0) / h).round();
    let n2 = ((t2 - traj.t0) / h).round();
    if !(t1 < t2) || n1 < 0.0 || n2 > (len - 1) as f64 || n2 <= n1 {
        return Err(FdiError::WindowOutsideHistory {
            t1,
            t2,
            start: traj.t0,
            end: traj.end_time(),
        });
    }
    let (n1, n2) = (n1 as usize, n2 as usize);
    let nn = lat.len();
    let snap_every = opts.snapshot_every.max(1);
    let trace_every = opts.trace_every.max(1);

    let mut lanes: Vec<Lane> = components
        .iter()
        .map(|&i| {
            gains[i].validate(i)?;
            if i >= traj.m {
                return Err(FdiError::Invalid(format!("state index {i} >= m = {}", traj.m)));
            }
            Ok(Lane {
                i,
                gains: gains[i],
                lambda: eigvals[i],
                xhat: traj.state(0)[i],
                w: vec![0.0; nn],
                acc: vec![0.0; nn],
                p0: 0.0,
                run: IdentifierRun {
                    averaged: WeightVector::zeros(i, k, nn),
                    history: WeightHistory::default(),
                    trace: Vec::new(),
                    stats: TrainStats {
                        i,
                        k,
                        steady_error: 0.0,
                        max_abs_xhat: 0.0,
                        max_weight_norm: 0.0,
                    },
                },
            })
        })
        .collect::<Result<_>>()?;

    let mut eval = BasisEvaluator::new(lat);
    let mut z = vec![0.0; d];
    let mut s0 = vec![0.0; nn];
    let mut sh = vec![0.0; nn];
    let mut s1 = vec![0.0; nn];
    traj.regressor_into(0, &mut z);
    eval.eval_into(&z, &mut s0);
    let mut g00 = dot(&s0, &s0);

    for lane in &mut lanes {
        record(lane, traj, 0, n1, n2, h, snap_every, trace_every);
    }

    for n in 0..len - 1 {
        let t = stamp(traj.t0, h, n);
        traj.regressor_mid_into(n, &mut z);
        eval.eval_into(&z, &mut sh);
        traj.regressor_into(n + 1, &mut z);
        eval.eval_into(&z, &mut s1);

        let (mut g0h, mut g01, mut ghh, mut gh1, mut g11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for ((&a, &b), &c) in s0.iter().zip(&sh).zip(&s1) {
            g0h += a * b;
            g01 += a * c;
            ghh += b * b;
            gh1 += b * c;
            g11 += c * c;
        }
        let gram = [[g00, g0h, g01], [g0h, ghh, gh1], [g01, gh1, g11]];

        for lane in &mut lanes {
            let (mut ph, mut p1) = (0.0, 0.0);
            for ((&w, &b), &c) in lane.w.iter().zip(&sh).zip(&s1) {
                ph += w * b;
                p1 += w * c;
            }
            let p = [lane.p0, ph, p1];
            let xs0 = traj.state(n)[lane.i];
            let xs1 = traj.state(n + 1)[lane.i];
            let xsh = 0.5 * (xs0 + xs1);
            let IdentifierGains { a, gamma, sigma } = lane.gains;
            let c = sigma * gamma;
            let lam = lane.lambda;

            // (time-sample index, x_s at that time, step fraction to reach the stage)
            let stages = [(0usize, xs0, 0.0), (1, xsh, 0.5), (1, xsh, 0.5), (2, xs1, 1.0)];
            let mut kx = [0.0; 4];
            let mut kw = [Combo { alpha: 0.0, beta: [0.0; 3] }; 4];
            for (s, &(j, xs, frac)) in stages.iter().enumerate() {
                let (ws, xh) = if s == 0 {
                    (Combo::IDENTITY, lane.xhat)
                } else {
                    (
                        Combo::IDENTITY.axpy(frac * h, kw[s - 1]),
                        lane.xhat + frac * h * kx[s - 1],
                    )
                };
                let e = xh - xs;
                kx[s] = -a * e + lam * xs + ws.dot(j, &p, &gram);
                let mut kws = Combo {
                    alpha: -c * ws.alpha,
                    beta: [-c * ws.beta[0], -c * ws.beta[1], -c * ws.beta[2]],
                };
                kws.beta[j] -= gamma * e;
                kw[s] = kws;
            }
            let sixth = h / 6.0;
            lane.xhat += sixth * (kx[0] + 2.0 * kx[1] + 2.0 * kx[2] + kx[3]);
            let upd = Combo::IDENTITY
                .axpy(sixth, kw[0])
                .axpy(2.0 * sixth, kw[1])
                .axpy(2.0 * sixth, kw[2])
                .axpy(sixth, kw[3]);
            let [b0, bh, b1] = upd.beta;
            let alpha = upd.alpha;
            for (((w, &x0), &xh), &x1) in lane.w.iter_mut().zip(&s0).zip(&sh).zip(&s1) {
                *w = alpha * *w + b0 * x0 + bh * xh + b1 * x1;
            }
            lane.p0 = upd.dot(2, &p, &gram);

            if !lane.xhat.is_finite() || lane.xhat.abs() > DIVERGENCE_GUARD || !lane.p0.is_finite() {
                return Err(FdiError::IdentifierDiverged {
                    context: format!("i={}, k={k}, t={}", lane.i + 1, t + h),
                });
            }
            record(lane, traj, n + 1, n1, n2, h, snap_every, trace_every);
        }
        std::mem::swap(&mut s0, &mut s1);
        g00 = g11;
    }

    let span = (n2 - n1) as f64 * h;
    Ok(lanes
        .into_iter()
        .map(|mut lane| {
            for (o, a) in lane.run.averaged.weights.iter_mut().zip(&lane.acc) {
                *o = a / span;
            }
            lane.run
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn record(
    lane: &mut Lane,
    traj: &ModalTrajectory,
    n: usize,
    n1: usize,
    n2: usize,
    h: f64,
    snap_every: usize,
    trace_every: usize,
) {
    let t = traj.time(n);
    let xs = traj.state(n)[lane.i];
    let err = lane.xhat - xs;
    let stats = &mut lane.run.stats;
    stats.max_abs_xhat = stats.max_abs_xhat.max(lane.xhat.abs());
    if n >= n1 && n <= n2 {
        stats.steady_error = stats.steady_error.max(err.abs());
        let coef = if n == n1 || n == n2 { 0.5 * h } else { h };
        for (a, w) in lane.acc.iter_mut().zip(&lane.w) {
            *a += coef * w;
        }
    }
    let snap = n % snap_every == 0;
    let trace = n % trace_every == 0;
    if snap || trace {
        let norm = dot(&lane.w, &lane.w).sqrt();
        stats.max_weight_norm = stats.max_weight_norm.max(norm);
        if snap {
            lane.run.history.times.push(t);
            lane.run.history.weights.push(lane.w.clone());
        }
        if trace {
            lane.run.trace.push(TraceRow {
                t,
                xhat: lane.xhat,
                xs,
                err,
                weight_norm: norm,
            });
        }
    }
}

/// Single-component convenience wrapper around [`train_mode`].
pub fn train_identifier(
    traj: &ModalTrajectory,
    eigvals: &[f64],
    lat: &RbfLattice,
    gains: &[IdentifierGains],
    i: usize,
    k: usize,
    opts: &TrainOptions,
) -> Result<IdentifierRun> {
    Ok(train_mode(traj, eigvals, lat, gains, &[i], k, opts)?.remove(0))
}

/// Trapezoidal time average of a piecewise-linear weight history over `[t1, t2]`.
pub fn average_weights(history: &WeightHistory, t1: f64, t2: f64) -> Result<Vec<f64>> {
    let times = &history.times;
    let (start, end) = match (times.first(), times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => {
            return Err(FdiError::WindowOutsideHistory {
                t1,
                t2,
                start: f64::NAN,
                end: f64::NAN,
            })
        }
    };
    let tol = 1e-9 * (1.0 + end.abs());
    if !(t1 < t2) || t1 < start - tol || t2 > end + tol {
        return Err(FdiError::WindowOutsideHistory { t1, t2, start, end });
    }
    let n = history.weights[0].len();
    let mut acc = vec![0.0; n];
    let lerp = |j: usize, t: f64, out: &mut Vec<f64>| {
        let (ta, tb) = (times[j], times[j + 1]);
        let f = if tb > ta { (t - ta) / (tb - ta) } else { 0.0 };
        out.clear();
        out.extend(
            history.weights[j]
                .iter()
                .zip(&history.weights[j + 1])
                .map(|(a, b)| a + f * (b - a)),
        );
    };
    let (mut wa, mut wb) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for j in 0..times.len().saturating_sub(1) {
        let lo = times[j].max(t1);
        let hi = times[j + 1].min(t2);
        if hi <= lo {
            continue;
        }
        lerp(j, lo, &mut wa);
        lerp(j, hi, &mut wb);
        let half = 0.5 * (hi - lo);
        for ((o, a), b) in acc.iter_mut().zip(&wa).zip(&wb) {
            *o += half * (a + b);
        }
    }
    if times.len() == 1 {
        return Ok(history.weights[0].clone());
    }
    let span = t2 - t1;
    acc.iter_mut().for_each(|v| *v /= span);
    Ok(acc)
}

/// Constant RBF models `W̄_i^k` for all states and modes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub lattice: RbfLattice,
    pub m: usize,
    pub q: usize,
    /// Number of trained fault modes `N` (models cover `k = 0..=N`).
    pub modes: usize,
    pub window: [f64; 2],
    /// Ordered by mode, then state.
    pub weights: Vec<WeightVector>,
    pub stats: Vec<TrainStats>,
}

impl TrainedModel {
    pub fn weight(&self, i: usize, k: usize) -> &WeightVector {
        &self.weights[k * self.m + i]
    }

    pub fn header(&self) -> WeightHeader {
        WeightHeader::new(&self.lattice, self.m, self.q, self.modes)
    }

    pub fn to_weight_file(&self) -> Result<WeightFile> {
        WeightFile::new(self.header(), self.weights.clone())
    }

    pub fn from_weight_file(file: WeightFile) -> Result<Self> {
        let h = &file.header;
        Ok(Self {
            lattice: h.lattice()?,
            m: h.m,
            q: h.q,
            modes: h.modes,
            window: [f64::NAN; 2],
            weights: file.blocks,
            stats: Vec::new(),
        })
    }
}

/// Train every `(i, k)` pair; `trajs[k]` is the mode-`k` training trajectory.
pub fn train_all(
    trajs: &[ModalTrajectory],
    eigvals: &[f64],
    lat: &RbfLattice,
    gains: &[IdentifierGains],
    opts: &TrainOptions,
    par: Parallelism,
) -> Result<(TrainedModel, Vec<IdentifierRun>)> {
    let first = trajs
        .first()
        .ok_or_else(|| FdiError::Invalid("no training trajectories".into()))?;
    let (m, q) = (first.m, first.q);
    let components: Vec<usize> = (0..m).collect();
    let per_mode = par.map(trajs.len(), |k| {
        train_mode(&trajs[k], eigvals, lat, gains, &components, k, opts)
    });
    let mut runs = Vec::with_capacity(m * trajs.len());
    for r in per_mode {
        runs.extend(r?);
    }
    let model = TrainedModel {
        lattice: lat.clone(),
        m,
        q,
        modes: trajs.len() - 1,
        window: opts.window,
        weights: runs.iter().map(|r| r.averaged.clone()).collect(),
        stats: runs.iter().map(|r| r.stats).collect(),
    };
    Ok((model, runs))
}

/// `W_jᵀ S(Z)` for several weight vectors at every stamp and midpoint of a
/// trajectory (half-step grid, length `2·len − 1`).
pub fn model_forcing(
    traj: &ModalTrajectory,
    lat: &RbfLattice,
    weights: &[&[f64]],
    par: Parallelism,
) -> Result<Vec<Vec<f64>>> {
    let d = traj.m + traj.q;
    if lat.dims() != d {
        return Err(FdiError::Dimension {
            what: "lattice dimension vs m + q",
            expected: d,
            got: lat.dims(),
        });
    }
    for w in weights {
        if w.len() != lat.len() {
            return Err(FdiError::Dimension {
                what: "weight vector",
                expected: lat.len(),
                got: w.len(),
            });
        }
    }
    let len = traj.len();
    if len == 0 {
        return Ok(vec![Vec::new(); weights.len()]);
    }
    let half = 2 * len - 1;
    let nw = weights.len();
    // interleaved: flat[h * nw + j]
    let mut flat = vec![0.0; half * nw];
    let chunk_samples = 256;
    par.fill_chunks(&mut flat, chunk_samples * nw.max(1), |start, out| {
        let mut eval = BasisEvaluator::new(lat);
        let mut z = vec![0.0; d];
        let mut s = vec![0.0; lat.len()];
        let first = start / nw.max(1);
        for (c, row) in out.chunks_mut(nw.max(1)).enumerate() {
            let hidx = first + c;
            if hidx % 2 == 0 {
                traj.regressor_into(hidx / 2, &mut z);
            } else {
                traj.regressor_mid_into(hidx / 2, &mut z);
            }
            eval.eval_into(&z, &mut s);
            for (o, w) in row.iter_mut().zip(weights) {
                *o = dot(w, &s);
            }
        }
    });
    Ok((0..nw)
        .map(|j| flat.iter().skip(j).step_by(nw).copied().collect())
        .collect())
}

/// Run `x̄̇ = −b(x̄ − x_si) + λ_i x_si + f(t)` from `x̄(t0) = x_si(t0)` with `f`
/// on the half-step grid; returns `x̄` at every stamp.
pub fn run_estimator(traj: &ModalTrajectory, i: usize, lambda: f64, b: f64, forcing: &[f64]) -> Vec<f64> {
    let xs = traj.component(i);
    let mut total = Vec::with_capacity(forcing.len());
    for (h, f) in forcing.iter().enumerate() {
        let x = if h % 2 == 0 {
            xs[h / 2]
        } else {
            0.5 * (xs[h / 2] + xs[h / 2 + 1])
        };
        total.push(f + (lambda + b) * x);
    }
    integrate_filter(b, &total, traj.t0, traj.dt, xs[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiStarEstimate {
    /// `ξ*_i` per state component.
    pub xi: Vec<f64>,
    /// `max |x̃_i^k|` after settling, indexed `[i][k]`.
    pub per_mode: Vec<Vec<f64>>,
    pub probe_gain: f64,
    pub settle: f64,
    pub modes_scanned: usize,
}

/// Probe estimators with gain `b = 1`: `ξ*_i = max_k max_{t ≥ t0 + settle} |x̄_i^k − x_si|`.
pub fn estimate_xi_star(
    model: &TrainedModel,
    trajs: &[ModalTrajectory],
    eigvals: &[f64],
    settle: f64,
    par: Parallelism,
) -> Result<XiStarEstimate> {
    let probe = 1.0;
    if trajs.len() != model.modes + 1 {
        return Err(FdiError::Dimension {
            what: "validation trajectories per mode",
            expected: model.modes + 1,
            got: trajs.len(),
        });
    }
    let m = model.m;
    let mut per_mode = vec![vec![0.0; trajs.len()]; m];
    for (k, traj) in trajs.iter().enumerate() {
        let ws: Vec<&[f64]> = (0..m).map(|i| model.weight(i, k).weights.as_slice()).collect();
        let forcing = model_forcing(traj, &model.lattice, &ws, par)?;
        let skip = (settle / traj.dt).round() as usize;
        for i in 0..m {
            let xbar = run_estimator(traj, i, eigvals[i], probe, &forcing[i]);
            let xs = traj.component(i);
            let mut worst = 0.0f64;
            for (n, (a, b)) in xbar.iter().zip(&xs).enumerate() {
                let e = (a - b).abs();
                if !e.is_finite() || e > DIVERGENCE_GUARD {
                    return Err(FdiError::EstimatorDiverged(format!("probe i={}, k={k}", i + 1)));
                }
                if n >= skip {
                    worst = worst.max(e);
                }
            }
            per_mode[i][k] = worst;
        }
    }
    let xi = per_mode
        .iter()
        .map(|row| row.iter().fold(0.0f64, |a, &b| a.max(b)))
        .collect();
    Ok(XiStarEstimate {
        xi,
        per_mode,
        probe_gain: probe,
        settle,
        modes_scanned: trajs.len(),
    })
}
