use crate::error::{FdiError, Result};

/// Number of samples spanned by a window of length `t_window` at step `dt`.
pub fn window_samples(t_window: f64, dt: f64) -> Result<usize> {
    if !(t_window > 0.0 && dt > 0.0) {
        return Err(FdiError::config("fd.window", "window length and dt must be positive"));
    }
    let w = (t_window / dt).round();
    if w < 1.0 {
        return Err(FdiError::config("fd.window", format!("window {t_window} shorter than dt {dt}")));
    }
    Ok(w as usize)
}

/// Streaming trapezoidal moving average of `|x|` over the trailing window.
///
/// Yields `None` until a full window is available (warmup). The running sum
/// is rebuilt from the ring buffer once per window length so rounding cannot
/// accumulate.
#[derive(Debug, Clone)]
pub struct WindowNorm {
    w: usize,
    scale: f64,
    ring: Vec<f64>,
    head: usize,
    seen: usize,
    sum: f64,
    since_rebuild: usize,
}

impl WindowNorm {
    /// `w` intervals of length `dt`; the effective window is `w·dt`.
    pub fn new(w: usize) -> Self {
        Self {
            w,
            scale: 1.0 / w as f64,
            ring: vec![0.0; w + 1],
            head: 0,
            seen: 0,
            sum: 0.0,
            since_rebuild: 0,
        }
    }

    pub fn push(&mut self, x: f64) -> Option<f64> {
        let a = x.abs();
        let len = self.ring.len();
        let oldest = self.ring[self.head];
        self.ring[self.head] = a;
        self.head = (self.head + 1) % len;
        self.seen += 1;
        if self.seen > len {
            self.sum += a - oldest;
        } else {
            self.sum += a;
        }
        self.since_rebuild += 1;
        if self.since_rebuild >= self.w {
            self.sum = self.ring.iter().sum();
            self.since_rebuild = 0;
        }
        if self.seen < len {
            return None;
        }
        // head now points at the oldest sample of the window
        let first = self.ring[self.head];
        Some(self.scale * (self.sum - 0.5 * (first + a)))
    }
}

/// Windowed norms of a whole residual series; warmup stamps are `NaN`.
/// Returns the norms and the number of warmup stamps.
pub fn l1_window(residual: &[f64], t_window: f64, dt: f64) -> Result<(Vec<f64>, usize)> {
    let w = window_samples(t_window, dt)?;
    let mut win = WindowNorm::new(w);
    let out: Vec<f64> = residual.iter().map(|&x| win.push(x).unwrap_or(f64::NAN)).collect();
    Ok((out, w.min(residual.len())))
}
