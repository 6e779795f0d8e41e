//! Regularized and ideal discrete EPR pairs.
//!
//! The singular pairs `δ(x − y)` and `δ(ε₂ + ε₃ − ε₀)` have no normalizable
//! continuum representative. Their ideal limits are represented by exact
//! discrete analogs (the maximally entangled diagonal and the anti-diagonal
//! sum); finite `σ` gives Gaussian regularizations for degradation sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Boundary, CMatrix, CVector, Grid, PureState, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EprKind {
    /// Correlated positions, `Ψ(x, y) → δ(x − y)`.
    PositionDelta,
    /// Anti-correlated energies, `ψ(ε₂, ε₃) → δ(ε₂ + ε₃ − ε₀)`.
    EnergySum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EprSpec {
    pub kind: EprKind,
    /// Width of the difference (position) or sum (energy) constraint.
    pub sigma: f64,
    /// Center-of-mass envelope width `L`; position pairs only.
    pub envelope: f64,
    /// Pump energy `ε₀`; energy pairs only.
    pub epsilon0: f64,
}

impl EprSpec {
    pub fn position(sigma: f64, envelope: f64) -> Self {
        EprSpec {
            kind: EprKind::PositionDelta,
            sigma,
            envelope,
            epsilon0: 0.0,
        }
    }

    pub fn energy(sigma: f64, epsilon0: f64) -> Self {
        EprSpec {
            kind: EprKind::EnergySum,
            sigma,
            envelope: 0.0,
            epsilon0,
        }
    }

    fn validate(&self, expected: EprKind) -> Result<()> {
        if self.kind != expected {
            return Err(Error::InvalidEpr(format!(
                "expected a {expected:?} spec, got {:?}",
                self.kind
            )));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidEpr(format!("sigma must be positive, got {}", self.sigma)));
        }
        if expected == EprKind::PositionDelta && !(self.envelope > self.sigma) {
            return Err(Error::InvalidEpr(format!(
                "envelope L = {} must exceed sigma = {}",
                self.envelope, self.sigma
            )));
        }
        Ok(())
    }
}

fn pair_grids(grid2: &Grid, grid3: &Grid, boundary: Boundary) -> Result<()> {
    if !grid2.same_as(grid3) {
        return Err(Error::ShapeMismatch("EPR particles need identical grids".into()));
    }
    if grid2.boundary() != boundary {
        return Err(Error::ShapeMismatch(format!(
            "EPR grid must be {boundary:?}, got {:?}",
            grid2.boundary()
        )));
    }
    Ok(())
}

fn from_matrix(grid2: Grid, grid3: Grid, amps: CMatrix) -> Result<PureState> {
    // row index = particle 2, column = particle 3; composite index is row-major
    let (n2, n3) = amps.shape();
    let v = CVector::from_fn(n2 * n3, |k, _| amps[(k / n3, k % n3)]);
    PureState::new(vec![grid2, grid3], v)?.normalized()
}

/// Gaussian-regularized position pair
/// `Ψ(x, y) ∝ exp(−(x − y)²/4σ² − (x + y − 2c)²/4L²)` on cyclic grids, with
/// `c` the grid center. The difference uses plain coordinates, so the
/// correlation does not wrap around the cyclic boundary.
pub fn build_epr_position(grid2: &Grid, grid3: &Grid, spec: &EprSpec) -> Result<PureState> {
    spec.validate(EprKind::PositionDelta)?;
    pair_grids(grid2, grid3, Boundary::Cyclic)?;
    let c = grid2.center();
    let (s2, l2) = (4.0 * spec.sigma * spec.sigma, 4.0 * spec.envelope * spec.envelope);
    let amps = CMatrix::from_fn(grid2.len(), grid3.len(), |i, j| {
        let (x, y) = (grid2.coord(i), grid3.coord(j));
        let e = -(x - y).powi(2) / s2 - (x + y - 2.0 * c).powi(2) / l2;
        C64::new(e.exp(), 0.0)
    });
    from_matrix(*grid2, *grid3, amps)
}

/// Discrete maximally entangled pair `Σ_k |k⟩|k⟩ / √N`.
pub fn ideal_epr_position(grid2: &Grid, grid3: &Grid) -> Result<PureState> {
    pair_grids(grid2, grid3, Boundary::Cyclic)?;
    let amps = CMatrix::from_fn(grid2.len(), grid3.len(), |i, j| {
        C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)
    });
    from_matrix(*grid2, *grid3, amps)
}

/// Grid index of `ε₀`, which must lie strictly inside an energy grid that
/// starts at zero.
pub fn pump_index(grid: &Grid, epsilon0: f64) -> Result<usize> {
    if grid.origin() != 0.0 {
        return Err(Error::InvalidEpr(format!(
            "energy grid must start at 0, got origin {}",
            grid.origin()
        )));
    }
    if !(epsilon0 > 0.0 && epsilon0 < grid.span()) {
        return Err(Error::InvalidEpr(format!(
            "epsilon0 = {epsilon0} outside (0, {})",
            grid.span()
        )));
    }
    grid.index_of(epsilon0)
        .ok_or_else(|| Error::InvalidEpr(format!("epsilon0 = {epsilon0} is not a grid point")))
}

/// Energy-entangled pair on truncated grids. For `σ ≤ spacing / 2` the sum
/// constraint is below grid resolution and the exact anti-diagonal state is
/// returned; otherwise `ψ(ε₂, ε₃) ∝ exp(−(ε₂ + ε₃ − ε₀)²/4σ²)` restricted
/// to `(0, ε₀)²`.
pub fn build_epr_energy(grid2: &Grid, grid3: &Grid, spec: &EprSpec) -> Result<PureState> {
    spec.validate(EprKind::EnergySum)?;
    pair_grids(grid2, grid3, Boundary::Truncated)?;
    let k0 = pump_index(grid2, spec.epsilon0)?;
    if spec.sigma <= 0.5 * grid2.spacing() {
        return ideal_epr_energy(grid2, grid3, spec.epsilon0);
    }
    let s2 = 4.0 * spec.sigma * spec.sigma;
    let inside = |i: usize| i > 0 && i < k0;
    let amps = CMatrix::from_fn(grid2.len(), grid3.len(), |i, j| {
        if inside(i) && inside(j) {
            let d = grid2.coord(i) + grid3.coord(j) - spec.epsilon0;
            C64::new((-d * d / s2).exp(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    from_matrix(*grid2, *grid3, amps)
}

/// `Σ_{0 < ε < ε₀} |ε⟩|ε₀ − ε⟩`, normalized, over grid points strictly
/// inside `(0, ε₀)`.
pub fn ideal_epr_energy(grid2: &Grid, grid3: &Grid, epsilon0: f64) -> Result<PureState> {
    pair_grids(grid2, grid3, Boundary::Truncated)?;
    let k0 = pump_index(grid2, epsilon0)?;
    if k0 < 2 {
        return Err(Error::InvalidEpr(
            "epsilon0 must be at least two grid steps".into(),
        ));
    }
    let amps = CMatrix::from_fn(grid2.len(), grid3.len(), |i, j| {
        C64::new(if i > 0 && i < k0 && i + j == k0 { 1.0 } else { 0.0 }, 0.0)
    });
    from_matrix(*grid2, *grid3, amps)
}

/// Squared Schmidt coefficients of a two-particle pure state, descending.
pub fn schmidt_coefficients(state: &PureState) -> Result<Vec<f64>> {
    let grids = state.grids();
    if grids.len() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "Schmidt decomposition needs 2 subsystems, got {}",
            grids.len()
        )));
    }
    let (n2, n3) = (grids[0].len(), grids[1].len());
    let a = state.amplitudes();
    let m = CMatrix::from_fn(n2, n3, |i, j| a[i * n3 + j]);
    let mut s: Vec<f64> = m.singular_values().iter().map(|x| x * x).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// `1 / Σ λ²` of the squared Schmidt coefficients.
pub fn schmidt_number(state: &PureState) -> Result<f64> {
    let s = schmidt_coefficients(state)?;
    let total: f64 = s.iter().sum();
    Ok(total * total / s.iter().map(|x| x * x).sum::<f64>())
}
