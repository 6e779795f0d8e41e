//! Random states and operators for experiments and property tests.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::hilbert::{CMatrix, CVector, DensityOperator, Grid, PureState, Unitary, C64};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn dim(grids: &[Grid]) -> usize {
    grids.iter().map(Grid::len).product()
}

pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-random normalized pure state.
pub fn pure_state<R: Rng + ?Sized>(rng: &mut R, grids: Vec<Grid>) -> PureState {
    let d = dim(&grids);
    let amps = CVector::from_fn(d, |_, _| gaussian(rng));
    PureState::new(grids, amps)
        .and_then(PureState::normalized)
        .expect("random state on a valid grid shape")
}

/// Full-rank trace-one density operator `G G† / Tr(G G†)`.
pub fn density<R: Rng + ?Sized>(rng: &mut R, grids: Vec<Grid>) -> DensityOperator {
    let d = dim(&grids);
    let g = ginibre(rng, d, d);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityOperator::from_hermitian_parts(grids, m / C64::new(tr, 0.0))
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix,
/// with the phases of `R`'s diagonal folded back into `Q`.
pub fn unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Unitary {
    let qr = ginibre(rng, d, d).qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = CVector::from_fn(d, |i, _| {
        let z = r[(i, i)];
        if z.norm() > 0.0 { z / z.norm() } else { C64::new(1.0, 0.0) }
    });
    let m = q * CMatrix::from_diagonal(&phases);
    Unitary::new(m).expect("QR factor is unitary")
}

/// Random unit vector in `C^d`.
pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CVector {
    let v = CVector::from_fn(d, |_, _| gaussian(rng));
    let n = v.norm();
    v / C64::new(n, 0.0)
}
