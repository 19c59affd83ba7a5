//! Fixed-step classical Runge-Kutta integration.
//!
//! Every time integration in the crate (PDE method of lines, the adaptive
//! identifier, the estimator banks and the threshold filters) goes through
//! [`Rk4`]. Signals that are only known at sample stamps are treated as
//! piecewise linear, so the mid-step stage of a step of length `h` sees the
//! average of the two neighbouring samples.

/// Right-hand side of `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn derivative(&mut self, t: f64, y: &[f64], dy: &mut [f64]);
}

/// Classical fourth-order Runge-Kutta stepper with reusable buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    stage: Vec<f64>,
    acc: Vec<f64>,
    k: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            stage: vec![0.0; dim],
            acc: vec![0.0; dim],
            k: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.stage.len()
    }

    /// Advance `y` from `t` to `t + h` in place.
    pub fn step<S: OdeSystem + ?Sized>(&mut self, sys: &mut S, t: f64, h: f64, y: &mut [f64]) {
        debug_assert_eq!(y.len(), self.stage.len());
        let half = 0.5 * h;

        self.stage.copy_from_slice(y);
        sys.derivative(t, &self.stage, &mut self.k);
        for ((a, s), (&k, &y0)) in self
            .acc
            .iter_mut()
            .zip(self.stage.iter_mut())
            .zip(self.k.iter().zip(y.iter()))
        {
            *a = k;
            *s = y0 + half * k;
        }

        sys.derivative(t + half, &self.stage, &mut self.k);
        for ((a, s), (&k, &y0)) in self
            .acc
            .iter_mut()
            .zip(self.stage.iter_mut())
            .zip(self.k.iter().zip(y.iter()))
        {
            *a += 2.0 * k;
            *s = y0 + half * k;
        }

        sys.derivative(t + half, &self.stage, &mut self.k);
        for ((a, s), (&k, &y0)) in self
            .acc
            .iter_mut()
            .zip(self.stage.iter_mut())
            .zip(self.k.iter().zip(y.iter()))
        {
            *a += 2.0 * k;
            *s = y0 + h * k;
        }

        sys.derivative(t + h, &self.stage, &mut self.k);
        let sixth = h / 6.0;
        for ((y, &a), &k) in y.iter_mut().zip(self.acc.iter()).zip(self.k.iter()) {
            *y += sixth * (a + k);
        }
    }
}

/// Time of stamp `n` on a uniform grid. Computed by multiplication so that
/// stamps never accumulate rounding drift.
#[inline]
pub fn stamp(t0: f64, dt: f64, n: usize) -> f64 {
    t0 + n as f64 * dt
}

/// Scalar filter `x' = -b x + f(t)` whose forcing is tabulated on the half-step
/// grid (`forcing[2n]` at stamp `n`, `forcing[2n+1]` at its midpoint).
struct HalfStepFilter<'a> {
    gain: f64,
    forcing: &'a [f64],
    t0: f64,
    half_h: f64,
}

impl OdeSystem for HalfStepFilter<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn derivative(&mut self, t: f64, y: &[f64], dy: &mut [f64]) {
        let idx = ((t - self.t0) / self.half_h).round() as usize;
        dy[0] = -self.gain * y[0] + self.forcing[idx.min(self.forcing.len() - 1)];
    }
}

/// Integrate `x' = -gain * x + f(t)` over `(forcing.len() - 1) / 2` steps of
/// length `h`, returning the state at every stamp (including the initial one).
pub fn integrate_filter(gain: f64, forcing: &[f64], t0: f64, h: f64, x0: f64) -> Vec<f64> {
    assert!(forcing.len() % 2 == 1, "half-step forcing must have odd length");
    let steps = (forcing.len() - 1) / 2;
    let mut sys = HalfStepFilter {
        gain,
        forcing,
        t0,
        half_h: 0.5 * h,
    };
    let mut rk = Rk4::new(1);
    let mut y = [x0];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x0);
    for n in 0..steps {
        rk.step(&mut sys, stamp(t0, h, n), h, &mut y);
        out.push(y[0]);
    }
    out
}

/// Expand stamp samples onto the half-step grid by linear interpolation.
pub fn to_half_grid(samples: &[f64]) -> Vec<f64> {
    if samples.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(2 * samples.len() - 1);
    for w in samples.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.push(*samples.last().unwrap());
    out
}
