//! Discretized Hilbert spaces and dense operator primitives.
//!
//! Amplitudes carry the `√spacing` factor of their grid, so the discrete
//! 2-norm of a sampled wave function approximates its continuum L² norm.
//! Composite indices are row-major: for subsystems with dimensions
//! `d_0, …, d_{n-1}` the first subsystem is the most significant digit,
//! which matches `kronecker`.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest Hilbert-space dimension any state or operator may have.
pub const MAX_DIMENSION: usize = 1 << 20;

/// Tolerance for "normalized" pure states.
pub const NORM_TOL: f64 = 1e-12;
/// Tolerance for Hermiticity in max-norm.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues down to `-POSITIVITY_TOL` count as nonnegative.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Trace tolerance accepted by `fidelity`.
pub const TRACE_TOL: f64 = 1e-10;
/// Tolerance for `u† u = I`.
pub const UNITARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Index `n_points` is identified with index 0.
    Cyclic,
    /// No wrap-around.
    Truncated,
}

/// Uniform one-dimensional discretization of a position or energy interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n_points: usize,
    spacing: f64,
    origin: f64,
    boundary: Boundary,
}

impl Grid {
    pub fn new(n_points: usize, spacing: f64, origin: f64, boundary: Boundary) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::InvalidGrid(format!(
                "n_points must be at least 2, got {n_points}"
            )));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "spacing must be positive and finite, got {spacing}"
            )));
        }
        if !origin.is_finite() {
            return Err(Error::InvalidGrid(format!("origin must be finite, got {origin}")));
        }
        Ok(Grid {
            n_points,
            spacing,
            origin,
            boundary,
        })
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_cyclic(&self) -> bool {
        self.boundary == Boundary::Cyclic
    }

    /// Length of the half-open interval `[origin, origin + n·spacing)`.
    pub fn span(&self) -> f64 {
        self.n_points as f64 * self.spacing
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.spacing
    }

    pub fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.coord(i))
    }

    /// Center of the covered interval.
    pub fn center(&self) -> f64 {
        self.origin + 0.5 * self.span()
    }

    /// Number of grid steps in `length`, if it is an integer multiple of the
    /// spacing (within a relative tolerance of 1e-9).
    pub fn steps(&self, length: f64) -> Option<i64> {
        let k = length / self.spacing;
        let r = k.round();
        ((k - r).abs() <= 1e-9 * r.abs().max(1.0)).then_some(r as i64)
    }

    /// Index of the grid point at `value`, if `value` lies on the grid.
    pub fn index_of(&self, value: f64) -> Option<usize> {
        let k = self.steps(value - self.origin)?;
        (0..self.n_points as i64).contains(&k).then_some(k as usize)
    }

    /// Reduce a signed index modulo the grid length.
    pub fn wrap(&self, i: i64) -> usize {
        i.rem_euclid(self.n_points as i64) as usize
    }

    fn check_same(&self, other: &Grid) -> bool {
        self.n_points == other.n_points
            && self.boundary == other.boundary
            && (self.spacing - other.spacing).abs() <= 1e-12 * self.spacing
            && (self.origin - other.origin).abs() <= 1e-12 * self.spacing.max(self.origin.abs())
    }

    /// Same point set and boundary convention.
    pub fn same_as(&self, other: &Grid) -> bool {
        self.check_same(other)
    }
}

pub fn make_grid(n_points: usize, spacing: f64, origin: f64, boundary: Boundary) -> Result<Grid> {
    Grid::new(n_points, spacing, origin, boundary)
}

fn dimension(grids: &[Grid]) -> Result<usize> {
    let mut dim: usize = 1;
    for g in grids {
        dim = dim
            .checked_mul(g.len())
            .filter(|&d| d <= MAX_DIMENSION)
            .ok_or(Error::DimensionCap {
                dim: dim.saturating_mul(g.len()),
                cap: MAX_DIMENSION,
            })?;
    }
    Ok(dim)
}

fn shapes_match(a: &[Grid], b: &[Grid]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same_as(y))
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Complex amplitude vector over one grid or a tensor product of grids.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    grids: Vec<Grid>,
    amplitudes: CVector,
}

impl PureState {
    pub fn new(grids: Vec<Grid>, amplitudes: CVector) -> Result<Self> {
        if grids.is_empty() {
            return Err(Error::Empty("grid shape"));
        }
        let dim = dimension(&grids)?;
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: amplitudes.len(),
            });
        }
        Ok(PureState { grids, amplitudes })
    }

    /// Samples a wave function on a grid, absorbing `√spacing` into the
    /// amplitudes. The result is not normalized.
    pub fn sample<F>(grid: Grid, f: F) -> Self
    where
        F: Fn(f64) -> C64,
    {
        let w = grid.spacing().sqrt();
        let amplitudes = CVector::from_iterator(grid.len(), grid.coords().map(|x| f(x) * w));
        PureState {
            grids: vec![grid],
            amplitudes,
        }
    }

    /// Basis vector `|index⟩` on a composite grid.
    pub fn basis(grids: Vec<Grid>, index: usize) -> Result<Self> {
        let dim = dimension(&grids)?;
        if index >= dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: index,
            });
        }
        let mut amplitudes = CVector::zeros(dim);
        amplitudes[index] = C64::new(1.0, 0.0);
        PureState::new(grids, amplitudes)
    }

    pub fn grids(&self) -> &[Grid] {
        &self.grids
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOL
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.amplitudes.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        self.amplitudes.unscale_mut(n);
        Ok(self)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if !shapes_match(&self.grids, &other.grids) {
            return Err(Error::ShapeMismatch("inner product operands".into()));
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let mut grids = self.grids.clone();
        grids.extend_from_slice(&other.grids);
        dimension(&grids)?;
        let amplitudes = self.amplitudes.kronecker(&other.amplitudes);
        PureState::new(grids, amplitudes)
    }

    /// `|ψ⟩⟨ψ|` with trace equal to the squared norm.
    pub fn to_density(&self) -> DensityOperator {
        let matrix = &self.amplitudes * self.amplitudes.adjoint();
        DensityOperator {
            grids: self.grids.clone(),
            trace_hint: self.norm_sqr(),
            matrix,
        }
    }
}

/// Hermitian positive-semidefinite matrix over a grid shape. The trace is
/// not required to be one; unnormalized conditional operators use this type.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    grids: Vec<Grid>,
    matrix: CMatrix,
    trace_hint: f64,
}

impl DensityOperator {
    /// Validates shape and Hermiticity. Positivity is checked separately
    /// with [`DensityOperator::min_eigenvalue`], since it needs a full
    /// eigendecomposition.
    pub fn new(grids: Vec<Grid>, matrix: CMatrix) -> Result<Self> {
        if grids.is_empty() {
            return Err(Error::Empty("grid shape"));
        }
        let dim = dimension(&grids)?;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: matrix.nrows().max(matrix.ncols()),
            });
        }
        let herm = max_abs(&(&matrix - matrix.adjoint()));
        let scale = max_abs(&matrix).max(1.0);
        if herm > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian(herm));
        }
        let trace_hint = matrix.trace().re;
        Ok(DensityOperator {
            grids,
            matrix,
            trace_hint,
        })
    }

    /// Builds from a matrix known to be Hermitian by construction; the
    /// anti-Hermitian roundoff is projected away.
    pub(crate) fn from_hermitian_parts(grids: Vec<Grid>, matrix: CMatrix) -> Self {
        let matrix = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
        let trace_hint = matrix.trace().re;
        DensityOperator {
            grids,
            matrix,
            trace_hint,
        }
    }

    pub fn zeros(grids: Vec<Grid>) -> Result<Self> {
        let dim = dimension(&grids)?;
        DensityOperator::new(grids, CMatrix::zeros(dim, dim))
    }

    pub fn maximally_mixed(grids: Vec<Grid>) -> Result<Self> {
        let dim = dimension(&grids)?;
        let m = CMatrix::identity(dim, dim) * C64::new(1.0 / dim as f64, 0.0);
        DensityOperator::new(grids, m)
    }

    pub fn grids(&self) -> &[Grid] {
        &self.grids
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.trace_hint
    }

    pub fn scaled(&self, factor: f64) -> DensityOperator {
        DensityOperator {
            grids: self.grids.clone(),
            matrix: &self.matrix * C64::new(factor, 0.0),
            trace_hint: self.trace_hint * factor,
        }
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn is_positive(&self) -> bool {
        self.min_eigenvalue() >= -POSITIVITY_TOL
    }

    pub fn add_assign(&mut self, other: &DensityOperator) -> Result<()> {
        if !shapes_match(&self.grids, &other.grids) {
            return Err(Error::ShapeMismatch("operator sum".into()));
        }
        self.matrix += &other.matrix;
        self.trace_hint += other.trace_hint;
        Ok(())
    }

    pub fn tensor(&self, other: &DensityOperator) -> Result<DensityOperator> {
        let mut grids = self.grids.clone();
        grids.extend_from_slice(&other.grids);
        dimension(&grids)?;
        Ok(DensityOperator {
            grids,
            matrix: self.matrix.kronecker(&other.matrix),
            trace_hint: self.trace_hint * other.trace_hint,
        })
    }

    /// Traces out every subsystem not listed in `keep`. The kept subsystems
    /// retain their original relative order.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityOperator> {
        let n = self.grids.len();
        if keep.is_empty() {
            return Err(Error::InvalidSubsystems("keep set is empty".into()));
        }
        let mut kept: Vec<usize> = keep.to_vec();
        kept.sort_unstable();
        kept.dedup();
        if kept.len() != keep.len() {
            return Err(Error::InvalidSubsystems("duplicate subsystem index".into()));
        }
        if let Some(&bad) = kept.iter().find(|&&k| k >= n) {
            return Err(Error::InvalidSubsystems(format!(
                "subsystem {bad} out of range for {n} subsystems"
            )));
        }
        let traced: Vec<usize> = (0..n).filter(|i| !kept.contains(i)).collect();

        let dims: Vec<usize> = self.grids.iter().map(Grid::len).collect();
        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        let kept_offsets = digit_offsets(&kept, &dims, &strides);
        let traced_offsets = digit_offsets(&traced, &dims, &strides);

        let dk = kept_offsets.len();
        let out = CMatrix::from_fn(dk, dk, |r, c| {
            let (ro, co) = (kept_offsets[r], kept_offsets[c]);
            traced_offsets
                .iter()
                .map(|&t| self.matrix[(ro + t, co + t)])
                .sum()
        });
        let grids = kept.iter().map(|&k| self.grids[k]).collect();
        Ok(DensityOperator::from_hermitian_parts(grids, out))
    }
}

/// Full-space offsets of every multi-index over the listed subsystems, in
/// row-major order of that sub-list.
fn digit_offsets(subsystems: &[usize], dims: &[usize], strides: &[usize]) -> Vec<usize> {
    let mut offsets = vec![0usize];
    for &s in subsystems {
        let mut next = Vec::with_capacity(offsets.len() * dims[s]);
        for &o in &offsets {
            for d in 0..dims[s] {
                next.push(o + d * strides[s]);
            }
        }
        offsets = next;
    }
    offsets
}

pub fn partial_trace(rho: &DensityOperator, keep: &[usize]) -> Result<DensityOperator> {
    rho.partial_trace(keep)
}

/// Eigenvalues at or below this are roundoff; their square roots would
/// otherwise inject `O(√ε)` errors.
fn noise_floor(eigenvalues: &[f64]) -> f64 {
    let top = eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    10.0 * eigenvalues.len() as f64 * f64::EPSILON * top
}

/// Eigendecomposition-based square root of a PSD matrix, negative roundoff
/// eigenvalues clipped to zero.
fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let eig = m.clone().symmetric_eigen();
    let floor = noise_floor(eig.eigenvalues.as_slice());
    let roots = eig
        .eigenvalues
        .map(|l| C64::new(if l > floor { l.sqrt() } else { 0.0 }, 0.0));
    &eig.eigenvectors * CMatrix::from_diagonal(&roots) * eig.eigenvectors.adjoint()
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`, clamped to `[0, 1]`.
pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    if !shapes_match(&rho.grids, &sigma.grids) {
        return Err(Error::ShapeMismatch("fidelity operands".into()));
    }
    for op in [rho, sigma] {
        if (op.trace() - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotNormalized(op.trace()));
        }
    }
    let root = psd_sqrt(&rho.matrix);
    let inner = &root * &sigma.matrix * &root;
    let inner = (&inner + inner.adjoint()) * C64::new(0.5, 0.0);
    let ev = inner.symmetric_eigenvalues();
    let floor = noise_floor(ev.as_slice());
    let s: f64 = ev.iter().filter(|&&l| l > floor).map(|l| l.sqrt()).sum();
    Ok((s * s).clamp(0.0, 1.0))
}

/// `|⟨ψ|φ⟩|²` for normalized pure states.
pub fn pure_fidelity(psi: &PureState, phi: &PureState) -> Result<f64> {
    for s in [psi, phi] {
        if (s.norm_sqr() - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotNormalized(s.norm_sqr()));
        }
    }
    Ok(psi.inner(phi)?.norm_sqr().clamp(0.0, 1.0))
}

/// A square matrix verified to satisfy `u† u = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Unitary(CMatrix);

impl Unitary {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        let dev = unitarity_deviation(&matrix);
        if dev > UNITARY_TOL {
            return Err(Error::NotUnitary(dev));
        }
        Ok(Unitary(matrix))
    }

    pub fn identity(dim: usize) -> Self {
        Unitary(CMatrix::identity(dim, dim))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn adjoint(&self) -> Unitary {
        Unitary(self.0.adjoint())
    }

    pub fn apply_state(&self, state: &PureState) -> Result<PureState> {
        if state.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: state.dim(),
            });
        }
        PureState::new(state.grids.clone(), &self.0 * &state.amplitudes)
    }

    pub fn apply_density(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        if rho.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: rho.dim(),
            });
        }
        let m = &self.0 * &rho.matrix * self.0.adjoint();
        Ok(DensityOperator::from_hermitian_parts(rho.grids.clone(), m))
    }
}

/// `‖u† u − I‖_max`.
pub fn unitarity_deviation(u: &CMatrix) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

/// Apply a unitary to either kind of state.
pub trait ApplyUnitary: Sized {
    fn apply_unitary(&self, u: &Unitary) -> Result<Self>;
}

impl ApplyUnitary for PureState {
    fn apply_unitary(&self, u: &Unitary) -> Result<Self> {
        u.apply_state(self)
    }
}

impl ApplyUnitary for DensityOperator {
    fn apply_unitary(&self, u: &Unitary) -> Result<Self> {
        u.apply_density(self)
    }
}

pub fn apply_unitary<S: ApplyUnitary>(u: &Unitary, state: &S) -> Result<S> {
    state.apply_unitary(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(n: usize) -> Grid {
        Grid::new(n, 1.0, 0.0, Boundary::Truncated).unwrap()
    }

    #[test]
    fn grid_construction() {
        let grid = make_grid(64, 0.25, 0.0, Boundary::Cyclic).unwrap();
        assert_eq!(grid.span(), 16.0);
        assert_eq!(grid.coord(63), 15.75);
        assert!(make_grid(2, 1.0, 0.0, Boundary::Truncated).is_ok());
        assert!(make_grid(0, 1.0, 0.0, Boundary::Cyclic).is_err());
        assert!(make_grid(1, 1.0, 0.0, Boundary::Cyclic).is_err());
        assert!(make_grid(8, 0.0, 0.0, Boundary::Cyclic).is_err());
        assert!(make_grid(8, -1.0, 0.0, Boundary::Cyclic).is_err());
    }

    #[test]
    fn grid_lattice_helpers() {
        let grid = make_grid(16, 0.5, 1.0, Boundary::Cyclic).unwrap();
        assert_eq!(grid.index_of(3.0), Some(4));
        assert_eq!(grid.index_of(3.2), None);
        assert_eq!(grid.index_of(9.0), None);
        assert_eq!(grid.wrap(-1), 15);
        assert_eq!(grid.wrap(17), 1);
    }

    #[test]
    fn three_particle_dimension() {
        let grid = make_grid(64, 0.25, 0.0, Boundary::Cyclic).unwrap();
        let s = PureState::sample(grid, |x| C64::new((-(x - 8.0).powi(2)).exp(), 0.0))
            .normalized()
            .unwrap();
        let t = s.tensor(&s).unwrap().tensor(&s).unwrap();
        assert_eq!(t.dim(), 262_144);
        assert_eq!(t.grids().len(), 3);
        assert!(t.is_normalized());
    }

    #[test]
    fn dimension_cap_is_enforced() {
        let big = Grid::new(1 << 11, 1.0, 0.0, Boundary::Cyclic).unwrap();
        let s = PureState::basis(vec![big], 0).unwrap();
        assert!(matches!(s.tensor(&s), Err(Error::DimensionCap { .. })));
    }

    #[test]
    fn tensor_trace_is_multiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random::density(&mut rng, vec![g(3)]).scaled(0.5);
        let b = random::density(&mut rng, vec![g(4)]).scaled(3.0);
        let ab = a.tensor(&b).unwrap();
        assert!((ab.trace() - 1.5).abs() < 1e-12);
        assert!((ab.matrix().trace().re - 1.5).abs() < 1e-12);
    }

    #[test]
    fn partial_trace_of_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random::density(&mut rng, vec![g(3)]);
        let b = random::density(&mut rng, vec![g(5)]);
        let ab = a.tensor(&b).unwrap();
        let rb = ab.partial_trace(&[1]).unwrap();
        assert!(max_abs(&(rb.matrix() - b.matrix())) < 1e-12);
        let same = ab.partial_trace(&[0, 1]).unwrap();
        assert!(max_abs(&(same.matrix() - ab.matrix())) < 1e-15);
    }

    #[test]
    fn partial_trace_of_maximally_entangled() {
        let d = 4;
        let grids = vec![g(2), g(d)];
        // (|0⟩|φ0⟩ + |1⟩|φ1⟩)/√2 with orthonormal φ is maximally entangled
        // on the qubit side; trace over the qubit leaves a rank-2 state.
        // For the 2×d requirement, keep the qubit: reduced state is I/2.
        let mut amps = CVector::zeros(2 * d);
        amps[0] = C64::new(1.0, 0.0);
        amps[d + 1] = C64::new(1.0, 0.0);
        let psi = PureState::new(grids.clone(), amps).unwrap().normalized().unwrap();
        let rho = psi.to_density();
        let ra = rho.partial_trace(&[0]).unwrap();
        let want = CMatrix::identity(2, 2) * C64::new(0.5, 0.0);
        assert!(max_abs(&(ra.matrix() - want)) < 1e-12);

        // d×d maximally entangled: either reduced state is I/d.
        let grids = vec![g(d), g(d)];
        let mut amps = CVector::zeros(d * d);
        for k in 0..d {
            amps[k * d + k] = C64::new(1.0, 0.0);
        }
        let rho = PureState::new(grids, amps).unwrap().normalized().unwrap().to_density();
        for keep in [0usize, 1] {
            let r = rho.partial_trace(&[keep]).unwrap();
            let want = CMatrix::identity(d, d) * C64::new(1.0 / d as f64, 0.0);
            assert!(max_abs(&(r.matrix() - want)) < 1e-12);
        }
    }

    #[test]
    fn partial_trace_rejects_bad_keep_sets() {
        let rho = DensityOperator::maximally_mixed(vec![g(2), g(3)]).unwrap();
        assert!(rho.partial_trace(&[]).is_err());
        assert!(rho.partial_trace(&[2]).is_err());
        assert!(rho.partial_trace(&[0, 0]).is_err());
    }

    #[test]
    fn partial_trace_middle_subsystem() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random::density(&mut rng, vec![g(2)]);
        let b = random::density(&mut rng, vec![g(3)]);
        let c = random::density(&mut rng, vec![g(2)]);
        let abc = a.tensor(&b).unwrap().tensor(&c).unwrap();
        let ac = abc.partial_trace(&[0, 2]).unwrap();
        let want = a.tensor(&c).unwrap();
        assert!(max_abs(&(ac.matrix() - want.matrix())) < 1e-12);
    }

    #[test]
    fn fidelity_identity_and_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random::density(&mut rng, vec![g(4)]);
        assert!((fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-10);
        let e0 = PureState::basis(vec![g(4)], 0).unwrap().to_density();
        let e1 = PureState::basis(vec![g(4)], 1).unwrap().to_density();
        assert!(fidelity(&e0, &e1).unwrap() < 1e-12);
    }

    #[test]
    fn fidelity_pure_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..10 {
            let a = random::pure_state(&mut rng, vec![g(6)]);
            let b = random::pure_state(&mut rng, vec![g(6)]);
            let direct = pure_fidelity(&a, &b).unwrap();
            let uhlmann = fidelity(&a.to_density(), &b.to_density()).unwrap();
            assert!((direct - uhlmann).abs() < 1e-10, "{direct} vs {uhlmann}");
        }
    }

    #[test]
    fn fidelity_rejects_bad_inputs() {
        let a = DensityOperator::maximally_mixed(vec![g(2)]).unwrap();
        let b = DensityOperator::maximally_mixed(vec![g(3)]).unwrap();
        assert!(matches!(fidelity(&a, &b), Err(Error::ShapeMismatch(_))));
        assert!(matches!(fidelity(&a, &a.scaled(2.0)), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn unitary_application() {
        let grids = vec![g(3)];
        let psi = PureState::new(
            grids.clone(),
            CVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8), C64::new(0.0, 0.0)]),
        )
        .unwrap();
        let id = Unitary::identity(3);
        assert_eq!(apply_unitary(&id, &psi).unwrap(), psi);

        let phases = CMatrix::from_diagonal(&CVector::from_vec(vec![
            C64::from_polar(1.0, 0.3),
            C64::from_polar(1.0, 0.3),
            C64::from_polar(1.0, 0.3),
        ]));
        let phased = apply_unitary(&Unitary::new(phases).unwrap(), &psi).unwrap();
        assert!((pure_fidelity(&phased, &psi).unwrap() - 1.0).abs() < 1e-12);

        // cyclic permutation i -> i+1
        let perm = CMatrix::from_fn(3, 3, |r, c| {
            if r == (c + 1) % 3 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
        });
        let moved = apply_unitary(&Unitary::new(perm).unwrap(), &psi).unwrap();
        for i in 0..3 {
            assert_eq!(moved.amplitudes()[(i + 1) % 3], psi.amplitudes()[i]);
        }

        let rho = psi.to_density();
        let moved_rho = apply_unitary(&Unitary::identity(3), &rho).unwrap();
        assert!((moved_rho.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_unitary_is_rejected() {
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.5, 0.0)]));
        assert!(matches!(Unitary::new(m), Err(Error::NotUnitary(_))));
    }

    #[test]
    fn density_validation() {
        let m = CMatrix::from_row_slice(2, 2, &[
            C64::new(0.5, 0.0), C64::new(0.0, 1.0),
            C64::new(0.0, 1.0), C64::new(0.5, 0.0),
        ]);
        assert!(matches!(DensityOperator::new(vec![g(2)], m), Err(Error::NotHermitian(_))));
        let bad_dim = CMatrix::identity(3, 3);
        assert!(DensityOperator::new(vec![g(2)], bad_dim).is_err());
    }
}
