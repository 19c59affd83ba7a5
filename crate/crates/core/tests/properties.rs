use galerkin_fdi::fdi::{fd_threshold, fi_adaptive_threshold, fi_constant_threshold, l1_window};
use galerkin_fdi::rbf::{RbfLattice, WeightVector};
use proptest::prelude::*;

fn small_lattice() -> RbfLattice {
    RbfLattice::new(vec![[-1.0, 1.0], [0.0, 2.0], [-0.5, 0.5]], vec![5, 4, 3], 0.5).unwrap()
}

fn weights(v: Vec<f64>) -> WeightVector {
    WeightVector { i: 0, k: 0, weights: v }
}

/// Direct Gaussian `exp(−‖z − c‖²/ν²)`.
fn gaussian(z: &[f64], c: &[f64], width: f64) -> f64 {
    let d2: f64 = z.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (width * width)).exp()
}

proptest! {
    #[test]
    fn network_is_linear_in_weights(
        z in prop::collection::vec(-2.0f64..2.0, 3),
        a in prop::collection::vec(-3.0f64..3.0, 60),
        b in prop::collection::vec(-3.0f64..3.0, 60),
        alpha in -2.0f64..2.0,
    ) {
        let lat = small_lattice();
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + y).collect();
        let lhs = lat.eval_network(&weights(combo), &z).unwrap();
        let rhs = alpha * lat.eval_network(&weights(a), &z).unwrap() + lat.eval_network(&weights(b), &z).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn activations_match_direct_gaussians(z in prop::collection::vec(-3.0f64..3.0, 3)) {
        let lat = small_lattice();
        let s = lat.eval_basis(&z).unwrap();
        prop_assert_eq!(s.len(), lat.len());
        for (j, v) in s.iter().enumerate() {
            prop_assert!(*v >= 0.0 && *v <= 1.0);
            let direct = gaussian(&z, &lat.center(j), lat.width());
            prop_assert!((v - direct).abs() < 1e-14);
        }
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(norm <= lat.norm_bound() + 1e-12);
    }

    #[test]
    fn thresholds_increase_with_error_bound(
        xi in 0.0f64..1.0,
        dxi in 0.0f64..1.0,
        rho in 0.0f64..1.0,
        b in 0.1f64..10.0,
    ) {
        prop_assert!(fd_threshold(xi + dxi, rho, b) >= fd_threshold(xi, rho, b));
        prop_assert!(fi_constant_threshold(xi + dxi, rho, b) >= fi_constant_threshold(xi, rho, b));
        prop_assert!(fd_threshold(xi, rho, 2.0 * b) <= fd_threshold(xi, rho, b));
    }

    #[test]
    fn window_norm_bounded_by_peak(r in prop::collection::vec(-5.0f64..5.0, 20..300), w in 1usize..20) {
        let dt = 0.01;
        let (norm, warm) = l1_window(&r, w as f64 * dt, dt).unwrap();
        for n in warm..r.len() {
            let window = &r[n - w..=n];
            let peak = window.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            prop_assert!(norm[n] >= -1e-12 && norm[n] <= peak + 1e-12);
            let trap: f64 = window.windows(2).map(|p| 0.5 * (p[0].abs() + p[1].abs())).sum::<f64>() / w as f64;
            prop_assert!((norm[n] - trap).abs() < 1e-10);
        }
    }

    #[test]
    fn adaptive_threshold_grows_with_bound(level in 0.0f64..1.0, extra in 0.0f64..1.0, xi in 0.0f64..0.2) {
        let dt = 0.01;
        let lo = fi_adaptive_threshold(&vec![level; 600], 1.0, xi, 2.0, dt).unwrap();
        let hi = fi_adaptive_threshold(&vec![level + extra; 600], 1.0, xi, 2.0, dt).unwrap();
        for (a, b) in lo.iter().zip(&hi).skip(200) {
            prop_assert!(b + 1e-12 >= *a);
            prop_assert!(*a >= xi - 1e-12);
        }
    }
}
