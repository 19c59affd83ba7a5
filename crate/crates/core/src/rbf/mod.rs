//! Gaussian RBF networks with centers on a regular lattice.
//!
//! Centers are enumerated row-major: the first declared dimension varies
//! slowest. Because the Gaussian factorizes over dimensions, a basis vector
//! costs one exponential per lattice line plus one product per node.

mod persist;

pub use persist::{WeightFile, WeightHeader, WEIGHT_FORMAT_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{FdiError, Result};

/// Default activation floor for localization diagnostics.
pub const DEFAULT_THETA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfLattice {
    bounds: Vec<[f64; 2]>,
    counts: Vec<usize>,
    width: f64,
}

impl RbfLattice {
    pub fn new(bounds: Vec<[f64; 2]>, counts: Vec<usize>, width: f64) -> Result<Self> {
        if bounds.len() != counts.len() || bounds.is_empty() {
            return Err(FdiError::config(
                "lattice",
                format!("{} bounds for {} counts", bounds.len(), counts.len()),
            ));
        }
        for (d, (b, &c)) in bounds.iter().zip(&counts).enumerate() {
            if c < 2 {
                return Err(FdiError::config(format!("lattice.counts[{d}]"), "need at least 2 nodes"));
            }
            if !(b[1] > b[0]) {
                return Err(FdiError::config(format!("lattice.bounds[{d}]"), "need hi > lo"));
            }
        }
        if !(width > 0.0) {
            return Err(FdiError::config("lattice.width", "must be positive"));
        }
        Ok(Self { bounds, counts, width })
    }

    /// The benchmark lattice: 14 × 9 × 8 × 13 nodes, spacing 0.5, ν = 0.5.
    pub fn catalytic_rod() -> Self {
        Self::new(
            vec![[17.5, 24.0], [-1.0, 3.0], [0.0, 3.5], [-2.0, 4.0]],
            vec![14, 9, 8, 13],
            0.5,
        )
        .expect("benchmark lattice is valid")
    }

    pub fn dims(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn spacing(&self, d: usize) -> f64 {
        (self.bounds[d][1] - self.bounds[d][0]) / (self.counts[d] - 1) as f64
    }

    /// Center coordinate `c` along dimension `d`.
    pub fn axis_point(&self, d: usize, c: usize) -> f64 {
        let [lo, hi] = self.bounds[d];
        if c + 1 == self.counts[d] {
            hi
        } else {
            lo + c as f64 * self.spacing(d)
        }
    }

    pub fn multi_index(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims()];
        for d in (0..self.dims()).rev() {
            out[d] = index % self.counts[d];
            index /= self.counts[d];
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.counts)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn center(&self, index: usize) -> Vec<f64> {
        self.multi_index(index)
            .iter()
            .enumerate()
            .map(|(d, &c)| self.axis_point(d, c))
            .collect()
    }

    pub fn centers(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.center(i)).collect()
    }

    /// Coarse bound `S_M = √N_n` on `‖S(Z)‖`.
    pub fn norm_bound(&self) -> f64 {
        (self.len() as f64).sqrt()
    }

    fn check_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dims() {
            return Err(FdiError::Dimension {
                what: "lattice input",
                expected: self.dims(),
                got: z.len(),
            });
        }
        Ok(())
    }

    pub fn evaluator(&self) -> BasisEvaluator<'_> {
        BasisEvaluator::new(self)
    }

    /// `S(Z)` with components `exp(−‖Z − ς_i‖²/ν²)`.
    pub fn eval_basis(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_point(z)?;
        let mut out = vec![0.0; self.len()];
        self.evaluator().eval_into(z, &mut out);
        Ok(out)
    }

    /// `Wᵀ S(Z)`
    pub fn eval_network(&self, w: &WeightVector, z: &[f64]) -> Result<f64> {
        if w.weights.len() != self.len() {
            return Err(FdiError::Dimension {
                what: "weight vector",
                expected: self.len(),
                got: w.weights.len(),
            });
        }
        let s = self.eval_basis(z)?;
        Ok(dot(&w.weights, &s))
    }

    /// Indices with `s_i(Z) > θ`, ascending.
    pub fn localized_indices(&self, z: &[f64], theta: f64) -> Result<Vec<usize>> {
        self.check_point(z)?;
        if !(theta > 0.0 && theta < 1.0) {
            return Err(FdiError::Invalid(format!("activation floor {theta} outside (0, 1)")));
        }
        // each factor bounds the product, so only lines with a factor > θ matter
        let inv = 1.0 / (self.width * self.width);
        let mut cands: Vec<Vec<(usize, f64)>> = Vec::with_capacity(self.dims());
        for (d, &zd) in z.iter().enumerate() {
            let line: Vec<(usize, f64)> = (0..self.counts[d])
                .map(|c| {
                    let r = zd - self.axis_point(d, c);
                    (c, (-r * r * inv).exp())
                })
                .filter(|(_, f)| *f > theta)
                .collect();
            if line.is_empty() {
                return Ok(Vec::new());
            }
            cands.push(line);
        }
        let mut out = Vec::new();
        let mut pos = vec![0usize; self.dims()];
        let mut multi = vec![0usize; self.dims()];
        'outer: loop {
            let mut act = 1.0;
            for d in 0..self.dims() {
                let (c, f) = cands[d][pos[d]];
                multi[d] = c;
                act *= f;
            }
            if act > theta {
                out.push(self.flat_index(&multi));
            }
            for d in (0..self.dims()).rev() {
                pos[d] += 1;
                if pos[d] < cands[d].len() {
                    continue 'outer;
                }
                pos[d] = 0;
            }
            break;
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Per-index visit fraction (`s_i > θ`) and max activation along a trajectory.
    pub fn excitation_diagnostic<'a, I>(&self, points: I, theta: f64, visit_floor: f64) -> Result<ExcitationReport>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let n = self.len();
        let mut visits = vec![0usize; n];
        let mut max_activation = vec![0.0f64; n];
        let mut max_norm = 0.0f64;
        let mut samples = 0usize;
        let mut s = vec![0.0; n];
        let mut eval = self.evaluator();
        for z in points {
            self.check_point(z)?;
            eval.eval_into(z, &mut s);
            let mut sq = 0.0;
            for ((v, m), &si) in visits.iter_mut().zip(max_activation.iter_mut()).zip(&s) {
                if si > theta {
                    *v += 1;
                }
                if si > *m {
                    *m = si;
                }
                sq += si * si;
            }
            max_norm = max_norm.max(sq.sqrt());
            samples += 1;
        }
        if samples == 0 {
            return Err(FdiError::Invalid("excitation diagnostic needs a non-empty trajectory".into()));
        }
        let visit_fraction: Vec<f64> = visits.iter().map(|&v| v as f64 / samples as f64).collect();
        let excited = visit_fraction
            .iter()
            .enumerate()
            .filter(|(_, f)| **f > visit_floor)
            .map(|(i, _)| i)
            .collect();
        Ok(ExcitationReport {
            theta,
            visit_floor,
            samples,
            visit_fraction,
            max_activation,
            excited,
            max_norm,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationReport {
    pub theta: f64,
    pub visit_floor: f64,
    pub samples: usize,
    pub visit_fraction: Vec<f64>,
    pub max_activation: Vec<f64>,
    /// Indices whose visit fraction exceeds the floor.
    pub excited: Vec<usize>,
    /// Largest observed `‖S(Z)‖`.
    pub max_norm: f64,
}

/// Reusable scratch for repeated basis evaluations.
#[derive(Debug, Clone)]
pub struct BasisEvaluator<'a> {
    lat: &'a RbfLattice,
    inv_w2: f64,
    factors: Vec<Vec<f64>>,
    partial: Vec<Vec<f64>>,
}

impl<'a> BasisEvaluator<'a> {
    pub fn new(lat: &'a RbfLattice) -> Self {
        let mut partial = Vec::new();
        let mut size = 1;
        for &c in &lat.counts[..lat.dims() - 1] {
            size *= c;
            partial.push(vec![0.0; size]);
        }
        Self {
            lat,
            inv_w2: 1.0 / (lat.width * lat.width),
            factors: lat.counts.iter().map(|&c| vec![0.0; c]).collect(),
            partial,
        }
    }

    /// Write `S(z)` into `out` (length `N_n`, not checked against `z`).
    pub fn eval_into(&mut self, z: &[f64], out: &mut [f64]) {
        let lat = self.lat;
        for (d, f) in self.factors.iter_mut().enumerate() {
            for (c, v) in f.iter_mut().enumerate() {
                let r = z[d] - lat.axis_point(d, c);
                *v = (-r * r * self.inv_w2).exp();
            }
        }
        let dims = lat.dims();
        if dims == 1 {
            out.copy_from_slice(&self.factors[0]);
            return;
        }
        self.partial[0].copy_from_slice(&self.factors[0]);
        for d in 1..dims - 1 {
            let (prev, next) = self.partial.split_at_mut(d);
            let (prev, next) = (&prev[d - 1], &mut next[0]);
            let f = &self.factors[d];
            for (chunk, &p) in next.chunks_exact_mut(f.len()).zip(prev) {
                for (o, &fv) in chunk.iter_mut().zip(f) {
                    *o = p * fv;
                }
            }
        }
        let last = &self.factors[dims - 1];
        for (chunk, &p) in out.chunks_exact_mut(last.len()).zip(&self.partial[dims - 2]) {
            for (o, &fv) in chunk.iter_mut().zip(last) {
                *o = p * fv;
            }
        }
    }
}

/// Weight vector `W_i^k` tagged with its state index `i` (0-based) and mode `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub i: usize,
    pub k: usize,
    pub weights: Vec<f64>,
}

impl WeightVector {
    pub fn zeros(i: usize, k: usize, n: usize) -> Self {
        Self {
            i,
            k,
            weights: vec![0.0; n],
        }
    }

    pub fn norm(&self) -> f64 {
        dot(&self.weights, &self.weights).sqrt()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> RbfLattice {
        RbfLattice::new(vec![[0.0, 1.0]], vec![2], 1.0).unwrap()
    }

    #[test]
    fn two_node_example() {
        let lat = two_node();
        let s = lat.eval_basis(&[0.5]).unwrap();
        let e = (-0.25f64).exp();
        assert!((s[0] - e).abs() < 1e-15 && (s[1] - e).abs() < 1e-15);
        let w = WeightVector {
            i: 0,
            k: 0,
            weights: vec![1.0, 1.0],
        };
        assert!((lat.eval_network(&w, &[0.5]).unwrap() - 2.0 * e).abs() < 1e-15);
    }

    #[test]
    fn separable_matches_direct_formula() {
        let lat = RbfLattice::new(vec![[0.0, 1.0], [-1.0, 1.0], [2.0, 3.0]], vec![3, 4, 2], 0.7).unwrap();
        let z = [0.3, 0.2, 2.9];
        let s = lat.eval_basis(&z).unwrap();
        for (i, c) in lat.centers().iter().enumerate() {
            let r2: f64 = c.iter().zip(&z).map(|(c, z)| (z - c) * (z - c)).sum();
            assert!((s[i] - (-r2 / 0.49).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn row_major_order() {
        let lat = RbfLattice::new(vec![[0.0, 1.0], [0.0, 2.0]], vec![2, 3], 1.0).unwrap();
        assert_eq!(lat.center(0), vec![0.0, 0.0]);
        assert_eq!(lat.center(1), vec![0.0, 1.0]);
        assert_eq!(lat.center(3), vec![1.0, 0.0]);
        assert_eq!(lat.flat_index(&[1, 2]), 5);
    }

    #[test]
    fn center_and_unit_distance() {
        let lat = RbfLattice::catalytic_rod();
        assert_eq!(lat.len(), 13104);
        let c = lat.center(777);
        assert!((lat.eval_basis(&c).unwrap()[777] - 1.0).abs() < 1e-15);
        let mut z = c.clone();
        z[2] += 0.5;
        assert!((lat.eval_basis(&z).unwrap()[777] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn localization_is_small_and_nested() {
        let lat = RbfLattice::catalytic_rod();
        let z = [20.0, 1.0, 1.5, 1.0];
        let s = lat.eval_basis(&z).unwrap();
        let wide = lat.localized_indices(&z, 0.1).unwrap();
        let brute: Vec<usize> = (0..lat.len()).filter(|&i| s[i] > 0.1).collect();
        assert_eq!(wide, brute);
        assert!(!wide.is_empty() && wide.len() < 100);
        let narrow = lat.localized_indices(&z, 0.9).unwrap();
        assert!(narrow.iter().all(|i| wide.contains(i)));
        assert_eq!(narrow.len(), 1);
    }

    #[test]
    fn excitation_of_far_trajectory_is_empty() {
        let lat = two_node();
        let pts = [[50.0], [60.0]];
        let rep = lat
            .excitation_diagnostic(pts.iter().map(|p| &p[..]), DEFAULT_THETA, 0.0)
            .unwrap();
        assert!(rep.excited.is_empty());
        let at = [[0.0], [0.0]];
        let rep = lat
            .excitation_diagnostic(at.iter().map(|p| &p[..]), 0.5, 0.0)
            .unwrap();
        assert_eq!(rep.excited, lat.localized_indices(&[0.0], 0.5).unwrap());
    }

    #[test]
    fn invalid_lattices() {
        assert!(RbfLattice::new(vec![[0.0, 1.0]], vec![1], 1.0).is_err());
        assert!(RbfLattice::new(vec![[1.0, 1.0]], vec![2], 1.0).is_err());
        assert!(RbfLattice::new(vec![[0.0, 1.0]], vec![2], 0.0).is_err());
        assert!(two_node().eval_network(&WeightVector::zeros(0, 0, 3), &[0.0]).is_err());
    }
}
