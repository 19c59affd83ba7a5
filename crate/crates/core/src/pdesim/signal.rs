use serde::{Deserialize, Serialize};

/// `amplitude · sin(frequency · t + phase)`, serialized as `[a, ω, φ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic(pub f64, pub f64, pub f64);

impl Harmonic {
    pub fn amplitude(&self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputChannel {
    pub offset: f64,
    #[serde(default)]
    pub harmonics: Vec<Harmonic>,
}

impl InputChannel {
    pub fn eval(&self, t: f64) -> f64 {
        self.harmonics
            .iter()
            .fold(self.offset, |acc, h| acc + h.0 * (h.1 * t + h.2).sin())
    }

    /// `|offset| + Σ |amplitude|`
    pub fn bound(&self) -> f64 {
        self.harmonics
            .iter()
            .fold(self.offset.abs(), |acc, h| acc + h.0.abs())
    }
}

/// Multi-channel harmonic input `u(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSignal {
    pub channels: Vec<InputChannel>,
}

impl InputSignal {
    pub fn constant(value: f64) -> Self {
        Self {
            channels: vec![InputChannel {
                offset: value,
                harmonics: Vec::new(),
            }],
        }
    }

    /// `1.1 + 2 sin(5t) − 2 cos(5t)`
    pub fn catalytic_rod() -> Self {
        Self {
            channels: vec![InputChannel {
                offset: 1.1,
                harmonics: vec![
                    Harmonic(2.0, 5.0, 0.0),
                    Harmonic(2.0, 5.0, -std::f64::consts::FRAC_PI_2),
                ],
            }],
        }
    }

    pub fn q(&self) -> usize {
        self.channels.len()
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.channels.iter().map(|c| c.eval(t)).collect()
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.channels) {
            *o = c.eval(t);
        }
    }
}

/// Value of the fault time profile: 0 before `t0`, 1 from `t0` on.
#[inline]
pub fn beta_profile(t: f64, t0: f64) -> f64 {
    if t < t0 {
        0.0
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn benchmark_input_values() {
        let sig = InputSignal::catalytic_rod();
        // sin(0) = 0, cos(0) = 1
        assert!((sig.eval(0.0)[0] - (-0.9)).abs() < 1e-12);
        // 5 · π/10 = π/2
        assert!((sig.eval(PI / 10.0)[0] - 3.1).abs() < 1e-12);
        assert_eq!(InputSignal::constant(5.0).eval(123.4), vec![5.0]);
    }

    #[test]
    fn fault_profile() {
        assert_eq!(beta_profile(29.9, 30.0), 0.0);
        assert_eq!(beta_profile(30.0, 30.0), 1.0);
        assert_eq!(beta_profile(0.0, 0.0), 1.0);
    }

    #[test]
    fn input_is_bounded() {
        let sig = InputSignal::catalytic_rod();
        let bound = sig.channels[0].bound();
        for n in 0..10_000 {
            let t = n as f64 * 0.0137;
            assert!(sig.eval(t)[0].abs() <= bound);
        }
    }
}
