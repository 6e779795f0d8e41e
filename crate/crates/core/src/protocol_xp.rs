//! Position/momentum teleportation with an orthogonal measurement.
//!
//! On a cyclic grid of `N` points the continuum outcomes `(X, P)` become the
//! `N × N` lattice of shifts `X = sΔx` and Fourier frequencies
//! `P = 2πk/(NΔx)`. The measured vectors are
//! `Φ_XP(x₁, x₂) = e^{iPx₂} [x₁ = x₂ ⊕ X]` with `‖Φ_XP‖² = N` and bin
//! weight `1/N`, which makes `Σ w M = I` exact and the family orthogonal.

use std::f64::consts::PI;

use crate::epr::ideal_epr_position;
use crate::error::{Error, Result};
use crate::hilbert::{pure_fidelity, CMatrix, CVector, Grid, PureState, Unitary, C64};
use crate::measurement::{
    conditional_states_pure, ConditionalEnsemble, ConditionalState, OutcomeLabel, PovmElement,
    PovmFamily, PovmOperator, SparseVector,
};
use crate::record::TeleportRecord;

/// A lattice outcome: cyclic shift index and frequency index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct XpOutcome {
    pub shift: usize,
    pub freq: usize,
}

impl XpOutcome {
    /// Snaps `(X, P)` to the lattice of `grid`, rejecting off-lattice values.
    pub fn from_coords(grid: &Grid, x: f64, p: f64) -> Result<Self> {
        let n = grid.len() as i64;
        let shift = grid
            .steps(x)
            .map(|s| s.rem_euclid(n) as usize)
            .ok_or_else(|| Error::OffLattice(format!("X = {x} is not a multiple of Δx")))?;
        let k = p * grid.span() / (2.0 * PI);
        let kr = k.round();
        if (k - kr).abs() > 1e-9 * kr.abs().max(1.0) {
            return Err(Error::OffLattice(format!("P = {p} is not a multiple of 2π/(NΔx)")));
        }
        Ok(XpOutcome {
            shift,
            freq: (kr as i64).rem_euclid(n) as usize,
        })
    }

    pub fn from_label(label: &OutcomeLabel) -> Result<Self> {
        match label.indices.as_slice() {
            &[s, k] if s >= 0 && k >= 0 => Ok(XpOutcome {
                shift: s as usize,
                freq: k as usize,
            }),
            other => Err(Error::OffLattice(format!("not an XP label: {other:?}"))),
        }
    }

    pub fn x(&self, grid: &Grid) -> f64 {
        self.shift as f64 * grid.spacing()
    }

    pub fn p(&self, grid: &Grid) -> f64 {
        2.0 * PI * self.freq as f64 / grid.span()
    }

    pub fn label(&self, grid: &Grid) -> OutcomeLabel {
        OutcomeLabel::new(
            vec![self.x(grid), self.p(grid)],
            vec![self.shift as i64, self.freq as i64],
            1.0 / grid.len() as f64,
        )
    }
}

fn single_cyclic(state: &PureState) -> Result<Grid> {
    match state.grids() {
        [g] if g.is_cyclic() => Ok(*g),
        _ => Err(Error::ShapeMismatch(
            "expected a single-particle state on a cyclic grid".into(),
        )),
    }
}

pub fn build_xp_povm(grid1: &Grid, grid2: &Grid) -> Result<PovmFamily> {
    if !grid1.same_as(grid2) || !grid1.is_cyclic() {
        return Err(Error::ShapeMismatch(
            "XP measurement needs two identical cyclic grids".into(),
        ));
    }
    let n = grid1.len();
    let mut elements = Vec::with_capacity(n * n);
    for shift in 0..n {
        for freq in 0..n {
            let o = XpOutcome { shift, freq };
            let p = o.p(grid1);
            let entries = (0..n)
                .map(|i2| {
                    let i1 = (i2 + shift) % n;
                    (i1 * n + i2, C64::from_polar(1.0, p * grid2.coord(i2)))
                })
                .collect();
            elements.push(PovmElement {
                label: o.label(grid1),
                operator: PovmOperator::RankOne(SparseVector::new(n * n, entries)?),
            });
        }
    }
    PovmFamily::new(vec![*grid1, *grid2], elements)
}

/// `ψ_XP(x) = e^{−iPx} ψ(x ⊕ X)`: the state left on the receiving particle
/// by outcome `(X, P)` with the ideal pair.
pub fn predict_post_state(psi1: &PureState, x: f64, p: f64) -> Result<PureState> {
    let grid = single_cyclic(psi1)?;
    let o = XpOutcome::from_coords(&grid, x, p)?;
    Ok(predict_lattice(psi1, &grid, o))
}

fn predict_lattice(psi1: &PureState, grid: &Grid, o: XpOutcome) -> PureState {
    let n = grid.len();
    let p = o.p(grid);
    let a = psi1.amplitudes();
    let v = CVector::from_fn(n, |i, _| {
        C64::from_polar(1.0, -p * grid.coord(i)) * a[(i + o.shift) % n]
    });
    PureState::new(vec![*grid], v).expect("same shape")
}

/// `U_XP: ψ(x) ↦ e^{iP(x−X)} ψ(x − X)`.
pub fn correction_xp(psi3: &PureState, x: f64, p: f64) -> Result<PureState> {
    let grid = single_cyclic(psi3)?;
    let o = XpOutcome::from_coords(&grid, x, p)?;
    Ok(correct_lattice(psi3, &grid, o))
}

fn correct_lattice(psi3: &PureState, grid: &Grid, o: XpOutcome) -> PureState {
    let n = grid.len();
    let p = o.p(grid);
    let a = psi3.amplitudes();
    let v = CVector::from_fn(n, |i, _| {
        // x_i − X and x_{i⊖s} differ by a multiple of the span, where e^{iP·} is periodic
        let src = (i + n - o.shift) % n;
        C64::from_polar(1.0, p * grid.coord(src)) * a[src]
    });
    PureState::new(vec![*grid], v).expect("same shape")
}

/// Matrix form of `U_XP` for outcome `o`.
pub fn correction_unitary(grid: &Grid, o: XpOutcome) -> Unitary {
    let n = grid.len();
    let p = o.p(grid);
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        let src = (i + n - o.shift) % n;
        m[(i, src)] = C64::from_polar(1.0, p * grid.coord(src));
    }
    Unitary::new(m).expect("phase permutation is unitary")
}

/// The XP measurement on a fixed grid, reusable across runs.
#[derive(Debug, Clone)]
pub struct XpProtocol {
    grid: Grid,
    povm: PovmFamily,
}

impl XpProtocol {
    pub fn new(grid: &Grid) -> Result<Self> {
        Ok(XpProtocol {
            grid: *grid,
            povm: build_xp_povm(grid, grid)?,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn povm(&self) -> &PovmFamily {
        &self.povm
    }

    fn check_inputs(&self, psi1: &PureState, epr: &PureState) -> Result<()> {
        let g = single_cyclic(psi1)?;
        if !g.same_as(&self.grid) {
            return Err(Error::ShapeMismatch("input state grid differs from protocol grid".into()));
        }
        match epr.grids() {
            [a, b] if a.same_as(&self.grid) && b.same_as(&self.grid) => {}
            _ => return Err(Error::ShapeMismatch("EPR pair must live on the protocol grid".into())),
        }
        for s in [psi1, epr] {
            if !s.is_normalized() {
                return Err(Error::NotNormalized(s.norm_sqr()));
            }
        }
        Ok(())
    }

    /// Conditional states of particle 3 for `ψ₁ ⊗ Ψ₂₃`.
    pub fn conditional(&self, psi1: &PureState, epr: &PureState) -> Result<ConditionalEnsemble> {
        self.check_inputs(psi1, epr)?;
        conditional_states_pure(&psi1.tensor(epr)?, &self.povm)
    }

    pub fn run(&self, psi1: &PureState, epr: &PureState) -> Result<Vec<TeleportRecord>> {
        let ensemble = self.conditional(psi1, epr)?;
        ensemble
            .outcomes
            .into_iter()
            .map(|o| {
                let lattice = XpOutcome::from_label(&o.label)?;
                let corrected = match &o.state {
                    Some(ConditionalState::Pure(p)) => {
                        Some(ConditionalState::Pure(correct_lattice(p, &self.grid, lattice)))
                    }
                    Some(mixed) => Some(mixed.apply(&correction_unitary(&self.grid, lattice))?),
                    None => None,
                };
                let fidelity = corrected.as_ref().map(|c| c.fidelity_with(psi1)).transpose()?;
                Ok(TeleportRecord {
                    label: o.label,
                    density: o.density,
                    conditional: o.state,
                    corrected,
                    fidelity,
                    accepted: true,
                    clipped: false,
                })
            })
            .collect()
    }
}

/// One-shot protocol run; builds the measurement for the input's grid.
pub fn run_xp_protocol(psi1: &PureState, epr: &PureState) -> Result<Vec<TeleportRecord>> {
    let grid = single_cyclic(psi1)?;
    XpProtocol::new(&grid)?.run(psi1, epr)
}

/// Ideal-pair run, convenience for diagnostics.
pub fn run_xp_ideal(psi1: &PureState) -> Result<Vec<TeleportRecord>> {
    let grid = single_cyclic(psi1)?;
    let epr = ideal_epr_position(&grid, &grid)?;
    run_xp_protocol(psi1, &epr)
}

/// Fidelity of the corrected prediction with the input for every lattice
/// outcome; the minimum over all outcomes.
pub fn min_predicted_fidelity(psi1: &PureState) -> Result<f64> {
    let grid = single_cyclic(psi1)?;
    let n = grid.len();
    let mut worst: f64 = 1.0;
    for shift in 0..n {
        for freq in 0..n {
            let o = XpOutcome { shift, freq };
            let back = correct_lattice(&predict_lattice(psi1, &grid, o), &grid, o);
            worst = worst.min(pure_fidelity(&back, psi1)?);
        }
    }
    Ok(worst)
}
