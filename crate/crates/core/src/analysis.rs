//! Offline detectability and isolatability checks over sampled fault streams.
//!
//! Detectability of component `i` on `I = [t_a, t_b]` (`l = t_b − t_a ≤ T`):
//!
//! ```text
//! μ_i > 2ξ*_i + 2ϱ_i
//! l ≥ (1/b_i⁰) ln((7μ_i − 6ξ*_i)/(μ_i − 2ξ*_i)) + T (4ξ*_i + 4ϱ_i)/(3μ_i − 2ξ*_i)
//! ```
//!
//! with `μ_i = min_I |φ_si|`. Exclusion of mode `k` through component `i` on
//! `I^k` needs `μ_i = min_I (|ρ_i| − ρ̄_i) > 2ξ*_i` and
//!
//! ```text
//! l ≥ (2ξ* + 2ρ̄_max)/(μ + 2ρ̄_max) · (T + (1/b) ln((μ + 2ρ̄_max + ξ*)/(μ − 2ξ*)))
//!     + (μ − 2ξ*)/(μ + 2ρ̄_max) · (1/b) ln((3μ + 4ρ̄_max)/(μ − 2ξ*))
//! ```

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{FdiError, Result};
use crate::fdi::{FdConfig, FiConfig};

/// Minimum dwell for detection, `None` when the magnitude condition fails.
pub fn detect_dwell(mu: f64, xi: f64, rho: f64, b: f64, t_window: f64) -> Option<f64> {
    if !(mu > 2.0 * xi + 2.0 * rho) {
        return None;
    }
    let log = ((7.0 * mu - 6.0 * xi) / (mu - 2.0 * xi)).ln();
    Some(log / b + t_window * (4.0 * xi + 4.0 * rho) / (3.0 * mu - 2.0 * xi))
}

/// Minimum dwell for excluding a mode, `None` when `μ ≤ 2ξ*`.
pub fn isolate_dwell(mu: f64, xi: f64, rho_bar_max: f64, b: f64, t_window: f64) -> Option<f64> {
    if !(mu > 2.0 * xi) {
        return None;
    }
    let r = rho_bar_max;
    let den = mu + 2.0 * r;
    let gap = mu - 2.0 * xi;
    let first = (2.0 * xi + 2.0 * r) / den * (t_window + ((mu + 2.0 * r + xi) / gap).ln() / b);
    let second = gap / den * ((3.0 * mu + 4.0 * r) / gap).ln() / b;
    Some(first + second)
}

/// Uniformly sampled scalar stream.
#[derive(Debug, Clone, Copy)]
pub struct Stream<'a> {
    pub t0: f64,
    pub dt: f64,
    pub values: &'a [f64],
}

impl Stream<'_> {
    fn index_of(&self, t: f64) -> isize {
        ((t - self.t0) / self.dt).round() as isize
    }

    fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.dt
    }
}

/// Candidate intervals `[t_b − w, t_b]`: `t_b` on a stride of `t_step`,
/// `w` from `widths`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub t_step: f64,
    pub widths: Vec<f64>,
}

impl ScanGrid {
    /// `count` equal steps up to `w_max`.
    pub fn uniform(t_step: f64, w_max: f64, count: usize) -> Self {
        Self {
            t_step,
            widths: (1..=count).map(|j| w_max * j as f64 / count as f64).collect(),
        }
    }
}

/// Ranking of unsatisfied candidates: magnitude-feasible ones by dwell
/// shortfall, the rest by magnitude slack.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Closeness(u8, f64);

impl Closeness {
    const WORST: Closeness = Closeness(0, f64::NEG_INFINITY);

    fn of(required: Option<f64>, available: f64, slack: f64) -> Self {
        match required {
            Some(r) => Closeness(1, available - r),
            None => Closeness(0, slack),
        }
    }

    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

/// Sliding minimum (or maximum with `max = true`) over `values[n − w ..= n]`.
fn sliding_extreme(values: &[f64], w: usize, max: bool) -> Vec<f64> {
    let better = |a: f64, b: f64| if max { a >= b } else { a <= b };
    let mut q: VecDeque<usize> = VecDeque::new();
    let mut out = Vec::with_capacity(values.len());
    for (n, &v) in values.iter().enumerate() {
        while let Some(&back) = q.back() {
            if better(v, values[back]) {
                q.pop_back();
            } else {
                break;
            }
        }
        q.push_back(n);
        while let Some(&front) = q.front() {
            if front + w < n {
                q.pop_front();
            } else {
                break;
            }
        }
        out.push(values[*q.front().expect("non-empty")]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectComponent {
    /// 1-based state component.
    pub i: usize,
    pub mu: f64,
    /// `2ξ* + 2ϱ`
    pub magnitude_floor: f64,
    pub magnitude_ok: bool,
    /// `None` when the magnitude condition fails.
    pub required_dwell: Option<f64>,
    pub available_dwell: f64,
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectabilityReport {
    pub t_a: f64,
    pub t_b: f64,
    pub components: Vec<DetectComponent>,
    pub verdict: bool,
    /// `t_b` of the reported interval when the verdict holds.
    pub predicted_detection: Option<f64>,
    /// Number of candidate intervals examined.
    pub candidates: usize,
}

fn detect_components(cfg: &FdConfig, mus: &[f64], w: f64) -> Vec<DetectComponent> {
    mus.iter()
        .enumerate()
        .map(|(i, &mu)| {
            let floor = 2.0 * cfg.xi[i] + 2.0 * cfg.rho[i];
            let req = detect_dwell(mu, cfg.xi[i], cfg.rho[i], cfg.b[i], cfg.window);
            DetectComponent {
                i: i + 1,
                mu,
                magnitude_floor: floor,
                magnitude_ok: mu > floor,
                required_dwell: req,
                available_dwell: w,
                verdict: req.is_some_and(|r| w >= r),
            }
        })
        .collect()
}

fn check_stream_shapes(streams: &[Stream<'_>], m: usize) -> Result<()> {
    if streams.len() != m {
        return Err(FdiError::Dimension {
            what: "fault streams per component",
            expected: m,
            got: streams.len(),
        });
    }
    let first = streams[0];
    if streams.iter().any(|s| s.values.len() != first.values.len() || s.dt != first.dt || s.t0 != first.t0) {
        return Err(FdiError::Invalid("fault streams must share one time base".into()));
    }
    if !(first.dt > 0.0) || first.values.is_empty() {
        return Err(FdiError::Invalid("fault streams must be non-empty with dt > 0".into()));
    }
    Ok(())
}

/// Detectability of a fault from `|φ_si(t)|` streams starting at the
/// occurrence time. With `interval = None`, every `[t_b − w, t_b]` of the
/// grid with `w ≤ T` is tried and the earliest satisfying one is reported;
/// if none satisfies, the interval with the largest magnitude margin at
/// the longest admissible width is reported.
pub fn check_detectability(
    projections: &[Stream<'_>],
    cfg: &FdConfig,
    interval: Option<[f64; 2]>,
    grid: &ScanGrid,
) -> Result<DetectabilityReport> {
    let m = cfg.b.len();
    cfg.validate(m)?;
    check_stream_shapes(projections, m)?;
    let base = projections[0];
    let len = base.values.len();
    let abs: Vec<Vec<f64>> = projections.iter().map(|s| s.values.iter().map(|v| v.abs()).collect()).collect();

    if let Some([t_a, t_b]) = interval {
        let (na, nb) = (base.index_of(t_a), base.index_of(t_b));
        if na < 0 || nb >= len as isize || nb < na {
            return Err(FdiError::Invalid(format!(
                "interval [{t_a}, {t_b}] outside stream [{}, {}]",
                base.t0,
                base.time(len - 1)
            )));
        }
        if t_b - t_a > cfg.window + 0.5 * base.dt {
            return Err(FdiError::Invalid(format!(
                "interval length {} exceeds the L1 window {}",
                t_b - t_a,
                cfg.window
            )));
        }
        let (na, nb) = (na as usize, nb as usize);
        let mus: Vec<f64> = abs.iter().map(|a| a[na..=nb].iter().copied().fold(f64::INFINITY, f64::min)).collect();
        let components = detect_components(cfg, &mus, t_b - t_a);
        let verdict = components.iter().any(|c| c.verdict);
        return Ok(DetectabilityReport {
            t_a,
            t_b,
            components,
            verdict,
            predicted_detection: verdict.then_some(t_b),
            candidates: 1,
        });
    }

    let stride = ((grid.t_step / base.dt).round() as usize).max(1);
    let widths: Vec<usize> = grid
        .widths
        .iter()
        .filter(|&&w| w > 0.0 && w <= cfg.window + 0.5 * base.dt)
        .map(|&w| ((w / base.dt).round() as usize).max(1))
        .collect();
    if widths.is_empty() {
        return Err(FdiError::Invalid("scan grid has no width inside (0, T]".into()));
    }
    let mut candidates = 0;
    let mut best: Option<(usize, usize)> = None;
    let mut fallback: Option<(Closeness, usize, usize)> = None;
    let wmax = *widths.iter().max().expect("non-empty");
    let mins: Vec<Vec<Vec<f64>>> = widths
        .iter()
        .map(|&w| abs.iter().map(|a| sliding_extreme(a, w, false)).collect())
        .collect();
    'scan: for nb in (0..len).step_by(stride) {
        for (wi, &w) in widths.iter().enumerate() {
            if w > nb {
                continue;
            }
            candidates += 1;
            let mus: Vec<f64> = mins[wi].iter().map(|mn| mn[nb]).collect();
            let comps = detect_components(cfg, &mus, w as f64 * base.dt);
            if comps.iter().any(|c| c.verdict) {
                best = Some((nb, w));
                break 'scan;
            }
            let score = comps
                .iter()
                .map(|c| Closeness::of(c.required_dwell, c.available_dwell, c.mu - c.magnitude_floor))
                .fold(Closeness::WORST, Closeness::max);
            if fallback.as_ref().is_none_or(|(b, _, _)| score > *b) {
                fallback = Some((score, nb, w));
            }
        }
    }
    let (nb, w) = best
        .or(fallback.map(|(_, nb, w)| (nb, w)))
        .unwrap_or((len - 1, wmax.min(len - 1)));
    let t_b = base.time(nb);
    let t_a = base.time(nb - w);
    let mus: Vec<f64> = abs.iter().map(|a| a[nb - w..=nb].iter().copied().fold(f64::INFINITY, f64::min)).collect();
    let components = detect_components(cfg, &mus, w as f64 * base.dt);
    let verdict = components.iter().any(|c| c.verdict);
    Ok(DetectabilityReport {
        t_a,
        t_b,
        components,
        verdict,
        predicted_detection: verdict.then_some(t_b),
        candidates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolateComponent {
    /// 1-based state component.
    pub i: usize,
    pub t_a: f64,
    pub t_b: f64,
    /// `min_I (|ρ_i| − ρ̄_i)`
    pub mu: f64,
    pub rho_bar_max: f64,
    /// `μ > 2ξ*`
    pub magnitude_ok: bool,
    pub required_dwell: Option<f64>,
    pub available_dwell: f64,
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeExclusion {
    pub mode: usize,
    /// Best interval found per component.
    pub components: Vec<IsolateComponent>,
    pub verdict: bool,
    /// Earliest `t_b^k` over satisfying components.
    pub predicted_exclusion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolatabilityReport {
    /// The mode the occurring fault is declared similar to.
    pub matched_mode: usize,
    /// Candidate intervals start no earlier than this.
    pub t_start: f64,
    pub modes: Vec<ModeExclusion>,
    pub verdict: bool,
    /// `max_k t_b^k` when every mode is excluded.
    pub predicted_isolation: Option<f64>,
}

impl IsolatabilityReport {
    /// Modes the conditions predict to be excluded.
    pub fn predicted_exclusions(&self) -> Vec<usize> {
        self.modes.iter().filter(|m| m.verdict).map(|m| m.mode).collect()
    }
}

/// Mismatch and bound streams of one candidate mode `k`, per component.
#[derive(Debug, Clone)]
pub struct ModeStreams<'a> {
    pub mode: usize,
    /// `ρ_i^{k,l'}(t)`
    pub mismatch: Vec<Stream<'a>>,
    /// `ρ̄_i^k(t)`
    pub bound: Vec<Stream<'a>>,
}

#[allow(clippy::too_many_arguments)]
fn isolate_component(
    cfg: &FiConfig,
    i: usize,
    diff: &[f64],
    bound: &[f64],
    base: Stream<'_>,
    n0: usize,
    widths: &[usize],
    stride: usize,
) -> IsolateComponent {
    let xi = cfg.xi[i];
    let b = cfg.b[i];
    let eval = |nb: usize, w: usize, mu: f64, rmax: f64| {
        let wt = w as f64 * base.dt;
        let req = isolate_dwell(mu, xi, rmax, b, cfg.window);
        IsolateComponent {
            i: i + 1,
            t_a: base.time(nb - w),
            t_b: base.time(nb),
            mu,
            rho_bar_max: rmax,
            magnitude_ok: mu > 2.0 * xi,
            required_dwell: req,
            available_dwell: wt,
            verdict: req.is_some_and(|r| wt >= r),
        }
    };
    let mut fallback: Option<(Closeness, IsolateComponent)> = None;
    // earliest t_b wins; for each t_b the shortest satisfying width
    let mut best: Option<IsolateComponent> = None;
    let tables: Vec<(usize, Vec<f64>, Vec<f64>)> = widths
        .iter()
        .map(|&w| (w, sliding_extreme(diff, w, false), sliding_extreme(bound, w, true)))
        .collect();
    'scan: for nb in (n0..diff.len()).step_by(stride) {
        for (w, mins, maxs) in &tables {
            let w = *w;
            if nb < n0 + w {
                continue;
            }
            let c = eval(nb, w, mins[nb], maxs[nb]);
            if c.verdict {
                best = Some(c);
                break 'scan;
            }
            let score = Closeness::of(c.required_dwell, c.available_dwell, c.mu - 2.0 * xi);
            if fallback.as_ref().is_none_or(|(b, _)| score > *b) {
                fallback = Some((score, c));
            }
        }
    }
    best.or(fallback.map(|(_, c)| c)).unwrap_or(IsolateComponent {
        i: i + 1,
        t_a: base.time(n0),
        t_b: base.time(n0),
        mu: f64::NAN,
        rho_bar_max: f64::NAN,
        magnitude_ok: false,
        required_dwell: None,
        available_dwell: 0.0,
        verdict: false,
    })
}

/// Isolatability of an occurring fault declared similar to `matched_mode`:
/// every other mode must be excludable through some component on some
/// interval starting at or after `t_start` (the detection time).
pub fn check_isolatability(
    streams: &[ModeStreams<'_>],
    matched_mode: usize,
    cfg: &FiConfig,
    t_start: f64,
    grid: &ScanGrid,
) -> Result<IsolatabilityReport> {
    let m = cfg.b.len();
    cfg.validate(m)?;
    let mut modes = Vec::new();
    for ms in streams.iter().filter(|s| s.mode != matched_mode) {
        check_stream_shapes(&ms.mismatch, m)?;
        check_stream_shapes(&ms.bound, m)?;
        let base = ms.mismatch[0];
        if ms.bound[0].values.len() != base.values.len() || ms.bound[0].t0 != base.t0 {
            return Err(FdiError::Invalid("bound and mismatch streams must share one time base".into()));
        }
        let n0 = base.index_of(t_start).max(0) as usize;
        let stride = ((grid.t_step / base.dt).round() as usize).max(1);
        let widths: Vec<usize> = grid
            .widths
            .iter()
            .filter(|&&w| w > 0.0)
            .map(|&w| ((w / base.dt).round() as usize).max(1))
            .collect();
        if widths.is_empty() {
            return Err(FdiError::Invalid("scan grid has no positive width".into()));
        }
        let components: Vec<IsolateComponent> = (0..m)
            .map(|i| {
                let diff: Vec<f64> = ms.mismatch[i]
                    .values
                    .iter()
                    .zip(ms.bound[i].values)
                    .map(|(r, rb)| r.abs() - rb)
                    .collect();
                isolate_component(cfg, i, &diff, ms.bound[i].values, base, n0, &widths, stride)
            })
            .collect();
        let predicted_exclusion = components
            .iter()
            .filter(|c| c.verdict)
            .map(|c| c.t_b)
            .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))));
        modes.push(ModeExclusion {
            mode: ms.mode,
            verdict: predicted_exclusion.is_some(),
            components,
            predicted_exclusion,
        });
    }
    let verdict = !modes.is_empty() && modes.iter().all(|m| m.verdict);
    let predicted_isolation = if verdict {
        modes.iter().filter_map(|m| m.predicted_exclusion).fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))))
    } else {
        None
    };
    Ok(IsolatabilityReport {
        matched_mode,
        t_start,
        modes,
        verdict,
        predicted_isolation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sliding_extremes_match_brute_force() {
        let v: Vec<f64> = (0..50).map(|n| ((n * 37) % 11) as f64 - 5.0).collect();
        for w in [1, 3, 7] {
            let mn = sliding_extreme(&v, w, false);
            let mx = sliding_extreme(&v, w, true);
            for n in 0..v.len() {
                let lo = n.saturating_sub(w);
                let slice = &v[lo..=n];
                assert_eq!(mn[n], slice.iter().copied().fold(f64::INFINITY, f64::min));
                assert_eq!(mx[n], slice.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            }
        }
    }

    #[test]
    fn magnitude_boundary_is_strict() {
        assert!(detect_dwell(2.0 * 0.086 + 2.0 * 0.12, 0.086, 0.12, 2.0, 2.5).is_none());
        assert!(isolate_dwell(0.1, 0.05, 0.0, 1.0, 2.0).is_none());
    }
}
