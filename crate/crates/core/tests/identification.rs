//! Deterministic learning on the synthetic known-weight plant.

mod common;

use galerkin_fdi::identifier::{
    estimate_xi_star, train_all, train_identifier, IdentifierGains, TrainOptions, TrainedModel,
};
use galerkin_fdi::par::Parallelism;
use galerkin_fdi::pdesim::ModalTrajectory;
use galerkin_fdi::rbf::{RbfLattice, WeightVector};

use common::{lattice, orbit, true_weights, DT, LAMBDA};

/// Largest `|W̄ᵀS − W*ᵀS|` along the last `span` seconds of the orbit.
fn orbit_error(lat: &RbfLattice, traj: &ModalTrajectory, w_bar: &WeightVector, w_star: &WeightVector, span: f64) -> f64 {
    let start = traj.len() - (span / DT).round() as usize;
    (start..traj.len())
        .map(|n| {
            let z = [traj.state(n)[0], traj.input(n)[0]];
            (lat.eval_network(w_bar, &z).unwrap() - lat.eval_network(w_star, &z).unwrap()).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn orbit_stays_inside_lattice() {
    let lat = lattice();
    let w = true_weights(&lat);
    let traj = orbit(&lat, &w, 50.0, DT);
    for n in 0..traj.len() {
        let x = traj.state(n)[0];
        assert!(x > -2.0 && x < 2.0, "x = {x} at stamp {n}");
    }
}

#[test]
fn learned_model_matches_true_weights_along_orbit() {
    let lat = lattice();
    let w_star = true_weights(&lat);
    let horizon = 1000.0;
    let traj = orbit(&lat, &w_star, horizon, DT);
    let opts = TrainOptions {
        window: [horizon - 50.0, horizon],
        snapshot_every: 10,
        trace_every: 100,
    };
    let run = train_identifier(&traj, &[LAMBDA], &lat, &[IdentifierGains::BENCHMARK], 0, 0, &opts).unwrap();
    let err = orbit_error(&lat, &traj, &run.averaged, &w_star, 2.0 * std::f64::consts::PI);
    println!("synthetic orbit error {err:.4}");
    assert!(err < 0.05, "orbit error {err}");
    let last = run.trace.last().unwrap();
    assert!(last.err.abs() < 0.01, "terminal estimation error {}", last.err);
}

fn xi_with(lat: &RbfLattice, traj: &ModalTrajectory, horizon: f64) -> f64 {
    let opts = TrainOptions {
        window: [horizon - 50.0, horizon],
        snapshot_every: 10,
        trace_every: 1000,
    };
    let trajs = vec![traj.clone()];
    let (model, _) = train_all(&trajs, &[LAMBDA], lat, &[IdentifierGains::BENCHMARK], &opts, Parallelism::Sequential).unwrap();
    estimate_xi_star(&model, &trajs, &[LAMBDA], 10.0, Parallelism::Sequential).unwrap().xi[0]
}

#[test]
fn exact_model_gives_negligible_xi_star() {
    let lat = lattice();
    let w_star = true_weights(&lat);
    // midpoint regressors are interpolated, so the residual is O(dt²)
    let traj = orbit(&lat, &w_star, 60.0, 0.001);
    let model = TrainedModel {
        lattice: lat.clone(),
        m: 1,
        q: 1,
        modes: 0,
        window: [0.0, 60.0],
        weights: vec![w_star],
        stats: Vec::new(),
    };
    let xi = estimate_xi_star(&model, &[traj], &[LAMBDA], 10.0, Parallelism::Sequential).unwrap();
    assert!(xi.xi[0] < 1e-6, "xi* = {}", xi.xi[0]);
}

#[test]
fn finer_lattice_does_not_raise_xi_star() {
    let coarse = lattice();
    let w_star = true_weights(&coarse);
    let horizon = 400.0;
    let traj = orbit(&coarse, &w_star, horizon, DT);
    let fine = RbfLattice::new(vec![[-2.0, 2.0], [-1.5, 1.5]], vec![17, 13], 0.5).unwrap();
    let xi_coarse = xi_with(&coarse, &traj, horizon);
    let xi_fine = xi_with(&fine, &traj, horizon);
    println!("xi* coarse {xi_coarse:.5} fine {xi_fine:.5}");
    assert!(xi_fine <= xi_coarse, "{xi_fine} > {xi_coarse}");
}
