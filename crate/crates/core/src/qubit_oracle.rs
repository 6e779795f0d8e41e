//! Exact qubit teleportation through the same conditional-state engine.
//!
//! Qubits are two-point grids. The shared pair is `|Φ+⟩ = (|00⟩ + |11⟩)/√2`
//! and the sender measures in the Bell basis. With that convention
//! `|ψ⟩|Φ+⟩ = ½ Σ_B |B⟩ ⊗ σ_B|ψ⟩` where `σ = I, Z, X, XZ` for
//! `B = Φ+, Φ−, Ψ+, Ψ−`, so the receiver applies `I, Z, X, ZX`.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::hilbert::{Boundary, CMatrix, CVector, DensityOperator, Grid, PureState, Unitary, C64};
use crate::measurement::{
    conditional_states_pure, corrected_aggregate, ConditionalEnsemble, OutcomeLabel, PovmElement,
    PovmFamily, PovmOperator, SparseVector,
};
use crate::record::TeleportRecord;

pub const BELL_NAMES: [&str; 4] = ["phi+", "phi-", "psi+", "psi-"];

pub fn qubit_grid() -> Grid {
    Grid::new(2, 1.0, 0.0, Boundary::Truncated).expect("two-point grid")
}

/// `a|0⟩ + b|1⟩`, normalized.
pub fn qubit_state(a: C64, b: C64) -> Result<PureState> {
    PureState::new(vec![qubit_grid()], CVector::from_vec(vec![a, b]))?.normalized()
}

fn bell_vector(k: usize) -> [(usize, C64); 2] {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    match k {
        0 => [(0, h), (3, h)],
        1 => [(0, h), (3, -h)],
        2 => [(1, h), (2, h)],
        _ => [(1, h), (2, -h)],
    }
}

/// The four Bell projectors on two qubits, weight 1 each.
pub fn bell_povm() -> PovmFamily {
    let g = qubit_grid();
    let elements = (0..4)
        .map(|k| PovmElement {
            label: OutcomeLabel::new(vec![k as f64], vec![k as i64], 1.0),
            operator: PovmOperator::RankOne(
                SparseVector::new(4, bell_vector(k).to_vec()).expect("4-dim"),
            ),
        })
        .collect();
    PovmFamily::new(vec![g, g], elements).expect("Bell basis")
}

/// `|Φ+⟩` on qubits 2 and 3.
pub fn epr_pair() -> PureState {
    let g = qubit_grid();
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    let z = C64::new(0.0, 0.0);
    PureState::new(vec![g, g], CVector::from_vec(vec![h, z, z, h])).expect("4-dim")
}

/// Pauli correction for Bell outcome `k`.
pub fn pauli_correction(k: usize) -> Unitary {
    let (o, l) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    let m = match k {
        0 => [l, o, o, l],
        1 => [l, o, o, -l],
        2 => [o, l, l, o],
        // Z·X
        _ => [o, l, -l, o],
    };
    Unitary::new(CMatrix::from_row_slice(2, 2, &m)).expect("Pauli")
}

fn check_qubit(psi: &PureState) -> Result<()> {
    match psi.grids() {
        [g] if g.same_as(&qubit_grid()) => {}
        _ => return Err(Error::ShapeMismatch("expected a single qubit".into())),
    }
    if !psi.is_normalized() {
        return Err(Error::NotNormalized(psi.norm_sqr()));
    }
    Ok(())
}

pub fn teleport_ensemble(psi: &PureState) -> Result<ConditionalEnsemble> {
    check_qubit(psi)?;
    conditional_states_pure(&psi.tensor(&epr_pair())?, &bell_povm())
}

pub fn teleport_qubit(psi: &PureState) -> Result<Vec<TeleportRecord>> {
    teleport_ensemble(psi)?
        .outcomes
        .into_iter()
        .map(|o| {
            let k = o.label.indices[0] as usize;
            let corrected = o.state.as_ref().map(|s| s.apply(&pauli_correction(k))).transpose()?;
            let fidelity = corrected.as_ref().map(|c| c.fidelity_with(psi)).transpose()?;
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

/// `Σ_z p_z U_z ρ_z U_z†` over all four outcomes.
pub fn corrected_total(psi: &PureState) -> Result<DensityOperator> {
    let ensemble = teleport_ensemble(psi)?;
    corrected_aggregate(
        &ensemble,
        |l| Some(pauli_correction(l.indices[0] as usize)),
        |_| true,
    )
}
