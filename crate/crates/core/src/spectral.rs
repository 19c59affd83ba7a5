//! Eigenfunction expansion of the spatial operator `a1 d/dz + a2 d²/dz²`
//! with Robin boundary conditions, plus the quadrature used for every
//! projection between spatial fields and modal coordinates.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{FdiError, Result};

/// `m x + n dx/dz = d` at one endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Robin {
    pub m: f64,
    pub n: f64,
    #[serde(default)]
    pub d: f64,
}

impl Robin {
    pub const DIRICHLET: Robin = Robin { m: 1.0, n: 0.0, d: 0.0 };

    pub fn is_dirichlet(&self) -> bool {
        self.n == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub a1: f64,
    pub a2: f64,
    pub z1: f64,
    pub z2: f64,
    pub left: Robin,
    pub right: Robin,
}

impl OperatorSpec {
    /// `d²/dz²` on `[0, π]` with homogeneous Dirichlet conditions.
    pub fn dirichlet_diffusion(a2: f64) -> Self {
        Self {
            a1: 0.0,
            a2,
            z1: 0.0,
            z2: std::f64::consts::PI,
            left: Robin::DIRICHLET,
            right: Robin::DIRICHLET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z2 > self.z1) {
            return Err(FdiError::config(
                "plant.domain",
                format!("z2 ({}) must exceed z1 ({})", self.z2, self.z1),
            ));
        }
        for (endpoint, bc) in [(1, &self.left), (2, &self.right)] {
            if bc.m == 0.0 && bc.n == 0.0 {
                return Err(FdiError::DegenerateBoundary { endpoint });
            }
        }
        if !(self.a2 > 0.0) {
            return Err(FdiError::config("plant.a2", "diffusion coefficient must be positive"));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.z2 - self.z1
    }

    fn is_homogeneous(&self) -> bool {
        self.left.d == 0.0 && self.right.d == 0.0
    }

    /// Pure diffusion with homogeneous Dirichlet data: closed-form spectrum.
    fn has_analytic_spectrum(&self) -> bool {
        self.a1 == 0.0
            && self.left.is_dirichlet()
            && self.right.is_dirichlet()
            && self.is_homogeneous()
    }
}

/// Uniform grid with an even number of intervals (composite Simpson).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub z1: f64,
    pub z2: f64,
    pub intervals: usize,
}

impl SpatialGrid {
    pub fn new(z1: f64, z2: f64, intervals: usize) -> Result<Self> {
        if !(z2 > z1) {
            return Err(FdiError::Invalid(format!("grid bounds [{z1}, {z2}] are empty")));
        }
        if intervals < 2 || intervals % 2 != 0 {
            return Err(FdiError::Invalid(format!(
                "grid needs an even number of intervals (got {intervals})"
            )));
        }
        Ok(Self { z1, z2, intervals })
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dz(&self) -> f64 {
        (self.z2 - self.z1) / self.intervals as f64
    }

    /// Node `j`; the last node is exactly `z2`.
    pub fn point(&self, j: usize) -> f64 {
        self.z1 + (self.z2 - self.z1) * (j as f64 / self.intervals as f64)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.point(j)).collect()
    }

    /// Composite Simpson weights: h/3 · (1, 4, 2, 4, ..., 4, 1).
    pub fn simpson_weights(&self) -> Vec<f64> {
        let h3 = self.dz() / 3.0;
        (0..self.len())
            .map(|j| {
                if j == 0 || j == self.intervals {
                    h3
                } else if j % 2 == 1 {
                    4.0 * h3
                } else {
                    2.0 * h3
                }
            })
            .collect()
    }

    pub fn ensure_same(&self, other: &SpatialGrid) -> Result<()> {
        if self != other {
            return Err(FdiError::GridMismatch(format!(
                "[{}, {}]/{} vs [{}, {}]/{}",
                self.z1, self.z2, self.intervals, other.z1, other.z2, other.intervals
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    pub grid: SpatialGrid,
    pub values: Vec<f64>,
}

impl SpatialField {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FdiError::Dimension {
                what: "field samples",
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: SpatialGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: SpatialGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }
}

/// Composite Simpson quadrature of `∫ f g dz` over a shared grid.
pub fn inner_product(f: &SpatialField, g: &SpatialField) -> Result<f64> {
    f.grid.ensure_same(&g.grid)?;
    let w = f.grid.simpson_weights();
    Ok(weighted_dot(&w, &f.values, &g.values))
}

#[inline]
pub(crate) fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Eigenfunction {
    /// `amplitude · sin(wavenumber · z + phase)`
    Sine {
        amplitude: f64,
        wavenumber: f64,
        phase: f64,
    },
    /// Grid samples from the finite-difference eigensolve.
    Tabulated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalState {
    pub coords: Vec<f64>,
}

impl ModalState {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    /// λ_1..λ_M, non-increasing.
    pub eigenvalues: Vec<f64>,
    pub functions: Vec<Eigenfunction>,
    /// Samples of every eigenfunction on `grid`.
    pub samples: Vec<Vec<f64>>,
    pub grid: SpatialGrid,
    /// Slow-subspace dimension.
    pub m: usize,
    /// |‖φ_j‖₂ − 1| per function.
    pub norm_check: Vec<f64>,
    weighted: Vec<Vec<f64>>,
}

impl EigenSystem {
    fn assemble(
        eigenvalues: Vec<f64>,
        functions: Vec<Eigenfunction>,
        samples: Vec<Vec<f64>>,
        grid: SpatialGrid,
        m: usize,
    ) -> Self {
        let w = grid.simpson_weights();
        let norm_check = samples
            .iter()
            .map(|s| (weighted_dot(&w, s, s).sqrt() - 1.0).abs())
            .collect();
        let weighted = samples
            .iter()
            .take(m)
            .map(|s| s.iter().zip(&w).map(|(s, w)| s * w).collect())
            .collect();
        Self {
            eigenvalues,
            functions,
            samples,
            grid,
            m,
            norm_check,
            weighted,
        }
    }

    pub fn slow_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[..self.m]
    }

    pub fn eigenfunction(&self, j: usize) -> SpatialField {
        SpatialField {
            grid: self.grid,
            values: self.samples[j].clone(),
        }
    }

    /// Largest |⟨φ_j, φ_k⟩ − δ_jk| over the slow subspace.
    pub fn orthonormality_defect(&self) -> f64 {
        let w = self.grid.simpson_weights();
        let mut worst = 0.0f64;
        for j in 0..self.m {
            for k in 0..self.m {
                let ip = weighted_dot(&w, &self.samples[j], &self.samples[k]);
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }

    /// Modal coordinates of raw grid samples; `out.len() == m`.
    pub fn project_values(&self, values: &[f64], out: &mut [f64]) {
        for (o, wphi) in out.iter_mut().zip(&self.weighted) {
            *o = wphi.iter().zip(values).map(|(a, b)| a * b).sum();
        }
    }

    pub fn gap_report(&self, threshold: f64) -> Result<GapReport> {
        check_spectral_gap(&self.eigenvalues, self.m, threshold)
    }
}

/// Solve `A φ = λ φ` and keep `m` slow modes (plus a few fast ones for the
/// gap diagnostic).
pub fn solve_eigenproblem(op: &OperatorSpec, m: usize, grid_size: usize) -> Result<EigenSystem> {
    solve_eigenproblem_with(op, m, m + 5, grid_size)
}

/// As [`solve_eigenproblem`], returning `total ≥ m` eigenpairs.
pub fn solve_eigenproblem_with(
    op: &OperatorSpec,
    m: usize,
    total: usize,
    grid_size: usize,
) -> Result<EigenSystem> {
    op.validate()?;
    if m == 0 {
        return Err(FdiError::Invalid("slow subspace dimension m must be >= 1".into()));
    }
    if 4 * m >= grid_size {
        return Err(FdiError::Invalid(format!(
            "grid_size {grid_size} too coarse for m = {m} (need m < grid_size/4)"
        )));
    }
    if !op.is_homogeneous() {
        return Err(FdiError::Invalid(
            "eigensolve supports homogeneous boundary data only (d1 = d2 = 0)".into(),
        ));
    }
    let grid = SpatialGrid::new(op.z1, op.z2, grid_size)?;
    let total = total.max(m);
    if op.has_analytic_spectrum() {
        Ok(analytic_dirichlet(op, m, total, grid))
    } else {
        numerical(op, m, total, grid)
    }
}

/// Finite-difference eigenpairs even when a closed form exists.
pub fn solve_numerical(op: &OperatorSpec, m: usize, total: usize, grid_size: usize) -> Result<EigenSystem> {
    op.validate()?;
    if m == 0 || total < m || 4 * total >= grid_size {
        return Err(FdiError::Invalid(format!(
            "need 1 <= m <= total < grid_size/4, got m = {m}, total = {total}, grid_size = {grid_size}"
        )));
    }
    if !op.is_homogeneous() {
        return Err(FdiError::Invalid(
            "eigensolve supports homogeneous boundary data only (d1 = d2 = 0)".into(),
        ));
    }
    numerical(op, m, total, SpatialGrid::new(op.z1, op.z2, grid_size)?)
}

fn analytic_dirichlet(op: &OperatorSpec, m: usize, total: usize, grid: SpatialGrid) -> EigenSystem {
    let len = op.length();
    let base = std::f64::consts::PI / len;
    let amplitude = (2.0 / len).sqrt();
    let mut eigenvalues = Vec::with_capacity(total);
    let mut functions = Vec::with_capacity(total);
    let mut samples = Vec::with_capacity(total);
    let points = grid.points();
    for j in 1..=total {
        let jf = j as f64;
        eigenvalues.push(-op.a2 * jf * jf * base * base);
        let wavenumber = jf * base;
        let phase = -wavenumber * op.z1;
        functions.push(Eigenfunction::Sine {
            amplitude,
            wavenumber,
            phase,
        });
        samples.push(
            points
                .iter()
                .map(|&z| amplitude * (wavenumber * z + phase).sin())
                .collect(),
        );
    }
    EigenSystem::assemble(eigenvalues, functions, samples, grid, m)
}

/// Tridiagonal finite-difference matrix over the unknown nodes. Dirichlet
/// endpoints are eliminated; Robin endpoints use a ghost node.
struct Tridiag {
    diag: Vec<f64>,
    upper: Vec<f64>,
    lower: Vec<f64>,
    /// Grid index of the first unknown.
    offset: usize,
}

fn finite_difference_operator(op: &OperatorSpec, grid: &SpatialGrid) -> Tridiag {
    let n = grid.intervals;
    let dz = grid.dz();
    let c2 = op.a2 / (dz * dz);
    let c1 = op.a1 / (2.0 * dz);
    let first = if op.left.is_dirichlet() { 1 } else { 0 };
    let last = if op.right.is_dirichlet() { n - 1 } else { n };
    let size = last - first + 1;
    let mut diag = vec![-2.0 * c2; size];
    let mut upper = vec![c2 + c1; size - 1];
    let mut lower = vec![c2 - c1; size - 1];
    if !op.left.is_dirichlet() {
        // x_{-1} = x_1 + 2 dz (m/n) x_0
        let r = op.left.m / op.left.n;
        diag[0] = c2 * (-2.0 + 2.0 * dz * r) - op.a1 * r;
        upper[0] = 2.0 * c2;
    }
    if !op.right.is_dirichlet() {
        // x_{N+1} = x_{N-1} - 2 dz (m/n) x_N
        let r = op.right.m / op.right.n;
        diag[size - 1] = c2 * (-2.0 - 2.0 * dz * r) - op.a1 * r;
        lower[size - 2] = 2.0 * c2;
    }
    Tridiag {
        diag,
        upper,
        lower,
        offset: first,
    }
}

fn numerical(op: &OperatorSpec, m: usize, total: usize, grid: SpatialGrid) -> Result<EigenSystem> {
    let tri = finite_difference_operator(op, &grid);
    let size = tri.diag.len();
    let total = total.min(size);

    let pairs = match symmetrize(&tri) {
        Some(scale) => symmetric_pairs(&tri, &scale),
        None => general_pairs(&tri, m)?,
    };

    let mut eigenvalues = Vec::with_capacity(total);
    let mut samples = Vec::with_capacity(total);
    let w = grid.simpson_weights();
    for (lambda, vec) in pairs.into_iter().take(total) {
        let mut full = vec![0.0; grid.len()];
        full[tri.offset..tri.offset + size].copy_from_slice(&vec);
        let norm = weighted_dot(&w, &full, &full).sqrt();
        full.iter_mut().for_each(|v| *v /= norm);
        fix_sign(&mut full);
        eigenvalues.push(lambda);
        samples.push(full);
    }
    let functions = vec![Eigenfunction::Tabulated; eigenvalues.len()];
    Ok(EigenSystem::assemble(eigenvalues, functions, samples, grid, m))
}

/// Diagonal similarity making the tridiagonal matrix symmetric, when the
/// off-diagonal products are all positive.
fn symmetrize(tri: &Tridiag) -> Option<Vec<f64>> {
    let mut scale = Vec::with_capacity(tri.diag.len());
    scale.push(1.0);
    for (u, l) in tri.upper.iter().zip(&tri.lower) {
        if !(u * l > 0.0) {
            return None;
        }
        let next = scale.last().unwrap() * (l / u).sqrt();
        if !next.is_finite() || next == 0.0 {
            return None;
        }
        scale.push(next);
    }
    Some(scale)
}

fn symmetric_pairs(tri: &Tridiag, scale: &[f64]) -> Vec<(f64, Vec<f64>)> {
    let size = tri.diag.len();
    let mut b = DMatrix::<f64>::zeros(size, size);
    for i in 0..size {
        b[(i, i)] = tri.diag[i];
    }
    for i in 0..size - 1 {
        let off = (tri.upper[i] * tri.lower[i]).sqrt();
        b[(i, i + 1)] = off;
        b[(i + 1, i)] = off;
    }
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    order
        .into_iter()
        .map(|k| {
            let v = eig
                .eigenvectors
                .column(k)
                .iter()
                .zip(scale)
                .map(|(v, s)| v * s)
                .collect();
            (eig.eigenvalues[k], v)
        })
        .collect()
}

fn general_pairs(tri: &Tridiag, m: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let size = tri.diag.len();
    let mut a = DMatrix::<f64>::zeros(size, size);
    for i in 0..size {
        a[(i, i)] = tri.diag[i];
    }
    for i in 0..size - 1 {
        a[(i, i + 1)] = tri.upper[i];
        a[(i + 1, i)] = tri.lower[i];
    }
    let mut values: Vec<(f64, f64)> = a
        .complex_eigenvalues()
        .iter()
        .map(|c| (c.re, c.im))
        .collect();
    values.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut pairs = Vec::with_capacity(values.len());
    for (index, &(re, im)) in values.iter().enumerate() {
        if im.abs() > 1e-9 * re.abs().max(1.0) {
            if index < m {
                return Err(FdiError::ComplexSlowSpectrum { index: index + 1, re, im });
            }
            break;
        }
        pairs.push((re, inverse_iteration(&a, re)));
    }
    Ok(pairs)
}

fn inverse_iteration(a: &DMatrix<f64>, lambda: f64) -> Vec<f64> {
    let n = a.nrows();
    let shift = lambda + 1e-10 * lambda.abs().max(1.0);
    let shifted = a - DMatrix::<f64>::identity(n, n) * shift;
    let lu = shifted.lu();
    let mut v = nalgebra::DVector::<f64>::from_element(n, 1.0);
    for _ in 0..4 {
        if let Some(next) = lu.solve(&v) {
            let norm = next.norm();
            v = next / norm;
        }
    }
    v.iter().copied().collect()
}

fn fix_sign(values: &mut [f64]) {
    let peak = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let interior = &values[1..values.len() - 1];
    if let Some(first) = interior.iter().find(|v| v.abs() > 1e-10 * peak) {
        if *first < 0.0 {
            values.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// Project a field onto the slow eigenfunctions: `x_s,i = ⟨φ_i, x⟩`.
pub fn project(field: &SpatialField, eig: &EigenSystem) -> Result<ModalState> {
    field.grid.ensure_same(&eig.grid)?;
    let mut coords = vec![0.0; eig.m];
    eig.project_values(&field.values, &mut coords);
    Ok(ModalState { coords })
}

/// `Σ_i x_s,i φ_i(z)` on the eigenfunction grid.
pub fn reconstruct(state: &ModalState, eig: &EigenSystem) -> Result<SpatialField> {
    if state.len() != eig.m {
        return Err(FdiError::Dimension {
            what: "modal state",
            expected: eig.m,
            got: state.len(),
        });
    }
    let mut values = vec![0.0; eig.grid.len()];
    for (c, phi) in state.coords.iter().zip(&eig.samples) {
        for (v, p) in values.iter_mut().zip(phi) {
            *v += c * p;
        }
    }
    Ok(SpatialField {
        grid: eig.grid,
        values,
    })
}

pub const DEFAULT_GAP_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    /// |Re λ_1 / Re λ_{m+1}|
    pub iota: f64,
    /// Re λ_m / Re λ_{m+1}
    pub slow_fast_ratio: f64,
    pub threshold: f64,
    pub satisfied: bool,
}

pub fn check_spectral_gap(eigenvalues: &[f64], m: usize, threshold: f64) -> Result<GapReport> {
    if m == 0 || eigenvalues.len() < m + 1 {
        return Err(FdiError::Invalid(format!(
            "gap check needs at least m + 1 = {} eigenvalues (have {})",
            m + 1,
            eigenvalues.len()
        )));
    }
    let fast = eigenvalues[m];
    if fast >= 0.0 {
        return Err(FdiError::FastComplementUnstable {
            index: m + 1,
            value: fast,
        });
    }
    let iota = (eigenvalues[0] / fast).abs();
    Ok(GapReport {
        iota,
        slow_fast_ratio: eigenvalues[m - 1] / fast,
        threshold,
        satisfied: iota < threshold,
    })
}
