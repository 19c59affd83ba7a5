//! Synthetic plant with known RBF weights: `ẋ = −x + W*ᵀ S(x, u)`, `u = sin t`.

#![allow(dead_code)]

use galerkin_fdi::ode::{OdeSystem, Rk4};
use galerkin_fdi::pdesim::ModalTrajectory;
use galerkin_fdi::rbf::{RbfLattice, WeightVector};

pub const LAMBDA: f64 = -1.0;
pub const DT: f64 = 0.01;

pub fn lattice() -> RbfLattice {
    RbfLattice::new(vec![[-2.0, 2.0], [-1.5, 1.5]], vec![9, 7], 0.5).unwrap()
}

pub fn true_weights(lat: &RbfLattice) -> WeightVector {
    let weights = lat
        .centers()
        .iter()
        .map(|c| 0.4 * (1.5 * c[0]).sin() + 0.3 * c[1] - 0.1 * c[0] * c[1])
        .collect();
    WeightVector { i: 0, k: 0, weights }
}

struct Plant<'a> {
    lat: &'a RbfLattice,
    w: &'a WeightVector,
    extra: &'a dyn Fn(f64, f64) -> f64,
}

impl OdeSystem for Plant<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn derivative(&mut self, t: f64, y: &[f64], dy: &mut [f64]) {
        let u = t.sin();
        dy[0] = LAMBDA * y[0] + self.lat.eval_network(self.w, &[y[0], u]).unwrap() + (self.extra)(t, y[0]);
    }
}

pub fn orbit(lat: &RbfLattice, w: &WeightVector, horizon: f64, dt: f64) -> ModalTrajectory {
    orbit_with(lat, w, horizon, dt, &|_, _| 0.0)
}

/// Orbit of the plant with an additional term `extra(t, x)`.
pub fn orbit_with(
    lat: &RbfLattice,
    w: &WeightVector,
    horizon: f64,
    dt: f64,
    extra: &dyn Fn(f64, f64) -> f64,
) -> ModalTrajectory {
    let steps = (horizon / dt).round() as usize;
    let mut traj = ModalTrajectory::new(0.0, dt, 1, 1);
    let mut plant = Plant { lat, w, extra };
    let mut rk = Rk4::new(1);
    let mut y = [0.5];
    traj.push(&y, &[0.0]);
    for n in 0..steps {
        rk.step(&mut plant, n as f64 * dt, dt, &mut y);
        traj.push(&y, &[((n + 1) as f64 * dt).sin()]);
    }
    traj
}

/// The benchmark with short horizons and a coarser grid, for end-to-end
/// runs that must finish in seconds.
pub fn short_scenario() -> galerkin_fdi::scenario::Scenario {
    let mut s = galerkin_fdi::scenario::Scenario::benchmark();
    s.name = "catalytic_rod_short".into();
    s.eig.grid_size = 100;
    let t = &mut s.timing;
    t.train_horizon = 12.0;
    t.monitor_horizon = 16.0;
    t.averaging_window = [8.0, 12.0];
    t.settle = 4.0;
    t.fault_onset = 8.0;
    t.snapshot_stride = 1000;
    t.trace_stride = 100;
    t.output_stride = 50;
    t.field_stride = 2000;
    s.fi.horizon = 6.0;
    for f in &mut s.faults.test {
        f.t0 = 8.0;
    }
    s
}
