//! Energy/time teleportation with a non-orthogonal tight-frame measurement.
//!
//! Energies live on a truncated grid starting at zero, `ε_i = iΔε`, with the
//! pump `ε₀ = k₀Δε`. Outcomes are pairs `(2Ω, T)`: the sum lattice
//! `2Ω = mΔε` indexes the anti-diagonals `{(i, j) : i + j = m}` of the
//! two-particle grid, and each anti-diagonal with `d` points carries
//! `oversample · d` uniform time samples over one period `2π/Δε`. The vectors
//! `Φ_ΩT(ε₁, ε₂) = e^{i(ε₁−ε₂)T/2}/√d` with weight `1/oversample` resolve the
//! identity exactly and overlap for neighbouring `T` once `oversample ≥ 2`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::epr::pump_index;
use crate::error::{Error, Result};
use crate::hilbert::{Boundary, CMatrix, CVector, Grid, PureState, Unitary, C64};
use crate::measurement::{
    conditional_states_pure, ConditionalEnsemble, ConditionalState, OutcomeLabel, PovmElement,
    PovmFamily, PovmOperator, SparseVector,
};
use crate::record::TeleportRecord;

/// Amplitude threshold for the numerical support of an input state.
pub const TAU_SUPP: f64 = 1e-12;

/// Norm below which a predicted post-measurement state counts as empty.
const EMPTY_NORM_SQR: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyCase {
    /// `2Ω < ε₀`.
    Case1a,
    /// `2Ω > ε₀`.
    Case1b,
    /// `2Ω = ε₀`.
    Boundary,
}

/// A lattice outcome of the energy/time measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyOutcome {
    /// `m` with `2Ω = mΔε`.
    pub sum_index: usize,
    pub two_omega: f64,
    pub time: f64,
    /// `|ε₀ − 2Ω|`.
    pub gamma: f64,
    pub case: EnergyCase,
}

impl EnergyOutcome {
    /// Outcome at sum index `m` and an arbitrary time.
    pub fn new(grid: &Grid, sum_index: usize, time: f64, epsilon0: f64) -> Result<Self> {
        let k0 = pump_index(grid, epsilon0)?;
        if sum_index > 2 * (grid.len() - 1) {
            return Err(Error::OffLattice(format!(
                "sum index {sum_index} beyond 2(N − 1) = {}",
                2 * (grid.len() - 1)
            )));
        }
        let case = match sum_index.cmp(&k0) {
            std::cmp::Ordering::Less => EnergyCase::Case1a,
            std::cmp::Ordering::Greater => EnergyCase::Case1b,
            std::cmp::Ordering::Equal => EnergyCase::Boundary,
        };
        Ok(EnergyOutcome {
            sum_index,
            two_omega: sum_index as f64 * grid.spacing(),
            time,
            gamma: sum_index.abs_diff(k0) as f64 * grid.spacing(),
            case,
        })
    }

    /// Snaps `2Ω` to the sum lattice; `T` is free.
    pub fn from_coords(grid: &Grid, two_omega: f64, time: f64, epsilon0: f64) -> Result<Self> {
        match grid.steps(two_omega) {
            Some(m) if m >= 0 => Self::new(grid, m as usize, time, epsilon0),
            _ => Err(Error::OffLattice(format!(
                "2Ω = {two_omega} is not a sum of two grid energies"
            ))),
        }
    }

    /// Reads `[2Ω, T]` / `[m, t]` labels produced by [`build_energy_povm`].
    pub fn from_label(grid: &Grid, label: &OutcomeLabel, epsilon0: f64) -> Result<Self> {
        match (label.indices.as_slice(), label.coords.as_slice()) {
            (&[m, _], &[_, t]) if m >= 0 => Self::new(grid, m as usize, t, epsilon0),
            _ => Err(Error::OffLattice(format!("not an energy label: {label}"))),
        }
    }
}

/// Number of grid pairs on anti-diagonal `m`.
pub fn diagonal_len(n: usize, m: usize) -> usize {
    m.min(2 * (n - 1) - m) + 1
}

fn energy_grid(grid: &Grid) -> Result<()> {
    if grid.boundary() != Boundary::Truncated || grid.origin() != 0.0 {
        return Err(Error::ShapeMismatch(
            "energy grids must be truncated and start at 0".into(),
        ));
    }
    Ok(())
}

fn single_energy(state: &PureState) -> Result<Grid> {
    match state.grids() {
        [g] => {
            energy_grid(g)?;
            Ok(*g)
        }
        _ => Err(Error::ShapeMismatch("expected a single-particle energy state".into())),
    }
}

pub fn build_energy_povm(grid1: &Grid, grid2: &Grid, oversample: usize) -> Result<PovmFamily> {
    if !grid1.same_as(grid2) {
        return Err(Error::ShapeMismatch("energy measurement needs identical grids".into()));
    }
    energy_grid(grid1)?;
    if oversample == 0 {
        return Err(Error::InvalidPovm("oversample must be at least 1".into()));
    }
    let n = grid1.len();
    let de = grid1.spacing();
    let period = 2.0 * PI / de;
    let weight = 1.0 / oversample as f64;
    let mut elements = Vec::with_capacity(oversample * n * n);
    for m in 0..=2 * (n - 1) {
        let d = diagonal_len(n, m);
        let lo = m.saturating_sub(n - 1);
        let samples = oversample * d;
        let amp = 1.0 / (d as f64).sqrt();
        for t in 0..samples {
            let time = t as f64 * period / samples as f64;
            let entries = (lo..lo + d)
                .map(|i| {
                    let j = m - i;
                    let phase = (grid1.coord(i) - grid2.coord(j)) * time / 2.0;
                    (i * n + j, C64::from_polar(amp, phase))
                })
                .collect();
            elements.push(PovmElement {
                label: OutcomeLabel::new(
                    vec![m as f64 * de, time],
                    vec![m as i64, t as i64],
                    weight,
                ),
                operator: PovmOperator::RankOne(SparseVector::new(n * n, entries)?),
            });
        }
    }
    PovmFamily::new(vec![*grid1, *grid2], elements)
}

/// Largest `|⟨Φ_z|Φ_z'⟩|` over distinct elements sharing the same `2Ω`,
/// skipping the one-point corner diagonals where every `T` gives the same
/// vector.
pub fn same_omega_overlap(povm: &PovmFamily) -> f64 {
    let elements = povm.elements();
    let mut best: f64 = 0.0;
    let mut start = 0;
    while start < elements.len() {
        let m = elements[start].label.indices[0];
        let mut end = start;
        while end < elements.len() && elements[end].label.indices[0] == m {
            end += 1;
        }
        let points = match &elements[start].operator {
            PovmOperator::RankOne(v) => v.entries().len(),
            PovmOperator::Dense(_) => 0,
        };
        if points < 2 {
            start = end;
            continue;
        }
        for i in start..end {
            for j in (i + 1)..end {
                if let Some(z) = povm.overlap(i, j) {
                    best = best.max(z.norm());
                }
            }
        }
        start = end;
    }
    best
}

/// Numerical support `[e_min, e_max]` of a single-particle state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportWindow {
    pub e_min: f64,
    pub e_max: f64,
}

impl SupportWindow {
    pub fn from_state(psi: &PureState, tau: f64) -> Result<Self> {
        let (first, last) = support_indices(psi, tau)?;
        let g = psi.grids()[0];
        Ok(SupportWindow {
            e_min: g.coord(first),
            e_max: g.coord(last),
        })
    }
}

fn support_indices(psi: &PureState, tau: f64) -> Result<(usize, usize)> {
    let a = psi.amplitudes();
    let first = a.iter().position(|z| z.norm() > tau);
    let last = a.iter().rposition(|z| z.norm() > tau);
    match (first, last) {
        (Some(f), Some(l)) => Ok((f, l)),
        _ => Err(Error::ZeroNorm),
    }
}

/// `[E_max, ε₀ + E_min]` when `ε₀ > E_max − E_min`, otherwise `None`.
pub fn acceptance_region(window: &SupportWindow, epsilon0: f64) -> Option<(f64, f64)> {
    (epsilon0 > window.e_max - window.e_min).then_some((window.e_max, epsilon0 + window.e_min))
}

/// `2Ω` strictly inside the region; `spacing` sets the comparison scale.
pub fn is_accepted(region: Option<(f64, f64)>, two_omega: f64, spacing: f64) -> bool {
    let eps = 1e-9 * spacing;
    region.is_some_and(|(lo, hi)| two_omega > lo + eps && two_omega < hi - eps)
}

/// Sender-side energies reachable by outcome `m`: grid indices
/// `[max(0, m − k₀ + 1), min(N − 1, m − 1)]`, possibly empty.
fn covered_range(n: usize, k0: usize, m: usize) -> Option<(usize, usize)> {
    let lo = (m + 1).saturating_sub(k0);
    let hi = m.checked_sub(1)?.min(n - 1);
    (lo <= hi).then_some((lo, hi))
}

/// Predicted state of particle 3 and whether the outcome's window cut off
/// part of the input's support.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyPrediction {
    pub state: PureState,
    pub clipped: bool,
}

/// `ψ₃(ε) = e^{−i(ε + 2Ω − ε₀)T} ψ(ε + 2Ω − ε₀)` for `0 < ε < ε₀`,
/// renormalized. Case 1a with `γ = ε₀ − 2Ω` reads `e^{−i(ε−γ)T}ψ(ε−γ)`.
pub fn predict_post_state_energy(
    psi1: &PureState,
    outcome: &EnergyOutcome,
    epsilon0: f64,
) -> Result<EnergyPrediction> {
    let grid = single_energy(psi1)?;
    let k0 = pump_index(&grid, epsilon0)?;
    let n = grid.len();
    let m = outcome.sum_index;
    let a = psi1.amplitudes();
    let mut out = CVector::zeros(n);
    if let Some((lo, hi)) = covered_range(n, k0, m) {
        for src in lo..=hi {
            let i3 = src + k0 - m;
            out[i3] = a[src] * C64::from_polar(1.0, -grid.coord(src) * outcome.time);
        }
    }
    let (first, last) = support_indices(psi1, TAU_SUPP)?;
    let clipped = match covered_range(n, k0, m) {
        Some((lo, hi)) => first < lo || last > hi,
        None => true,
    };
    let state = PureState::new(vec![grid], out)?;
    if state.norm_sqr() < EMPTY_NORM_SQR {
        return Err(Error::ImpossibleOutcome);
    }
    Ok(EnergyPrediction {
        state: state.normalized()?,
        clipped,
    })
}

/// Correcting map for one outcome: output index `j` takes the amplitude at
/// `source[j]` times `phase[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyCorrection {
    source: Vec<usize>,
    phase: Vec<C64>,
}

impl EnergyCorrection {
    /// Case 1a (and `γ = 0`): rotation of grid indices `[0, ε₀]` by `γ`
    /// with `e^{iεT}` on `[0, 2Ω]`. Case 1b: rotation of `[0, 2Ω]` (capped at
    /// the grid top) by `γ` with `e^{iεT}` on `[γ, 2Ω]`. Identity elsewhere.
    pub fn new(grid: &Grid, outcome: &EnergyOutcome, epsilon0: f64) -> Result<Self> {
        energy_grid(grid)?;
        let k0 = pump_index(grid, epsilon0)?;
        let n = grid.len();
        let m = outcome.sum_index;
        let mut source: Vec<usize> = (0..n).collect();
        let mut phase = vec![C64::new(1.0, 0.0); n];
        let twist = |j: usize| C64::from_polar(1.0, grid.coord(j) * outcome.time);
        if m <= k0 {
            let g = k0 - m;
            for j in 0..=k0 {
                source[j] = (j + g) % (k0 + 1);
                if j <= m {
                    phase[j] = twist(j);
                }
            }
        } else {
            let g = m - k0;
            let top = m.min(n - 1);
            for j in 0..=top {
                source[j] = (j + top + 1 - g % (top + 1)) % (top + 1);
                if j >= g {
                    phase[j] = twist(j);
                }
            }
        }
        Ok(EnergyCorrection { source, phase })
    }

    pub fn dim(&self) -> usize {
        self.source.len()
    }

    pub fn apply(&self, psi: &PureState) -> Result<PureState> {
        self.check(psi)?;
        let a = psi.amplitudes();
        let out = CVector::from_fn(self.dim(), |j, _| self.phase[j] * a[self.source[j]]);
        PureState::new(psi.grids().to_vec(), out)
    }

    pub fn apply_adjoint(&self, psi: &PureState) -> Result<PureState> {
        self.check(psi)?;
        let a = psi.amplitudes();
        let mut out = CVector::zeros(self.dim());
        for (j, (&s, z)) in self.source.iter().zip(&self.phase).enumerate() {
            out[s] = z.conj() * a[j];
        }
        PureState::new(psi.grids().to_vec(), out)
    }

    pub fn to_unitary(&self) -> Result<Unitary> {
        let n = self.dim();
        let mut m = CMatrix::zeros(n, n);
        for j in 0..n {
            m[(j, self.source[j])] = self.phase[j];
        }
        Unitary::new(m)
    }

    fn check(&self, psi: &PureState) -> Result<()> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: psi.dim(),
            });
        }
        Ok(())
    }
}

pub fn correction_energy(psi3: &PureState, outcome: &EnergyOutcome, epsilon0: f64) -> Result<PureState> {
    let grid = single_energy(psi3)?;
    EnergyCorrection::new(&grid, outcome, epsilon0)?.apply(psi3)
}

/// The energy/time measurement on a fixed grid, reusable across runs.
#[derive(Debug, Clone)]
pub struct EnergyProtocol {
    grid: Grid,
    oversample: usize,
    povm: PovmFamily,
}

impl EnergyProtocol {
    pub fn new(grid: &Grid, oversample: usize) -> Result<Self> {
        Ok(EnergyProtocol {
            grid: *grid,
            oversample,
            povm: build_energy_povm(grid, grid, oversample)?,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn oversample(&self) -> usize {
        self.oversample
    }

    pub fn povm(&self) -> &PovmFamily {
        &self.povm
    }

    fn check_inputs(&self, psi1: &PureState, epr: &PureState, epsilon0: f64) -> Result<SupportWindow> {
        let g = single_energy(psi1)?;
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
        pump_index(&self.grid, epsilon0)?;
        let window = SupportWindow::from_state(psi1, TAU_SUPP)?;
        if self.grid.span() < epsilon0 + window.e_max - 1e-9 * self.grid.spacing() {
            return Err(Error::InvalidGrid(format!(
                "grid span {} is below ε₀ + E_max = {}",
                self.grid.span(),
                epsilon0 + window.e_max
            )));
        }
        Ok(window)
    }

    /// Conditional states of particle 3 for `ψ₁ ⊗ Ψ₂₃`.
    pub fn conditional(&self, psi1: &PureState, epr: &PureState, epsilon0: f64) -> Result<ConditionalEnsemble> {
        self.check_inputs(psi1, epr, epsilon0)?;
        conditional_states_pure(&psi1.tensor(epr)?, &self.povm)
    }

    /// Every outcome with a conditional state gets its case-formula
    /// correction and fidelity; `accepted` marks `2Ω` inside the acceptance
    /// region.
    pub fn run(&self, psi1: &PureState, epr: &PureState, epsilon0: f64) -> Result<Vec<TeleportRecord>> {
        let window = self.check_inputs(psi1, epr, epsilon0)?;
        let region = acceptance_region(&window, epsilon0);
        let (first, last) = support_indices(psi1, TAU_SUPP)?;
        let k0 = pump_index(&self.grid, epsilon0)?;
        let n = self.grid.len();
        let ensemble = conditional_states_pure(&psi1.tensor(epr)?, &self.povm)?;
        ensemble
            .outcomes
            .into_par_iter()
            .map(|o| {
                let outcome = EnergyOutcome::from_label(&self.grid, &o.label, epsilon0)?;
                let correction = EnergyCorrection::new(&self.grid, &outcome, epsilon0)?;
                let corrected = match &o.state {
                    Some(ConditionalState::Pure(p)) => Some(ConditionalState::Pure(correction.apply(p)?)),
                    Some(mixed) => Some(mixed.apply(&correction.to_unitary()?)?),
                    None => None,
                };
                let fidelity = corrected.as_ref().map(|c| c.fidelity_with(psi1)).transpose()?;
                let clipped = match covered_range(n, k0, outcome.sum_index) {
                    Some((lo, hi)) => first < lo || last > hi,
                    None => true,
                };
                Ok(TeleportRecord {
                    label: o.label,
                    density: o.density,
                    conditional: o.state,
                    corrected,
                    fidelity,
                    accepted: is_accepted(region, outcome.two_omega, self.grid.spacing()),
                    clipped,
                })
            })
            .collect()
    }
}

/// One-shot protocol run; builds the measurement for the input's grid.
pub fn run_energy_protocol(
    psi1: &PureState,
    epr: &PureState,
    epsilon0: f64,
    oversample: usize,
) -> Result<Vec<TeleportRecord>> {
    let grid = single_energy(psi1)?;
    EnergyProtocol::new(&grid, oversample)?.run(psi1, epr, epsilon0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epr::ideal_epr_energy;
    use crate::hilbert::pure_fidelity;
    use crate::measurement::check_completeness;
    use crate::random;
    use crate::states::bump;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Grid {
        Grid::new(n, 0.5, 0.0, Boundary::Truncated).unwrap()
    }

    #[test]
    fn tight_frame_is_complete() {
        for n in [2, 5, 16] {
            for o in [1, 2, 3] {
                let g = grid(n);
                let povm = build_energy_povm(&g, &g, o).unwrap();
                assert_eq!(povm.len(), o * n * n);
                let r = check_completeness(&povm);
                assert!(r.deviation < 1e-12, "n={n} o={o}: {}", r.deviation);
                assert_eq!(povm.is_orthogonal(), o == 1, "n={n} o={o}");
            }
        }
    }

    #[test]
    fn adjacent_times_overlap() {
        let g = grid(8);
        let povm = build_energy_povm(&g, &g, 2).unwrap();
        assert!(same_omega_overlap(&povm) > 0.1);
        let povm = build_energy_povm(&g, &g, 1).unwrap();
        assert!(same_omega_overlap(&povm) < 1e-12);
        // d = 2, oversample 2: |sin(π/2) / (2 sin(π/4))| = 1/√2
        let povm = build_energy_povm(&grid(2), &grid(2), 2).unwrap();
        let z = povm.overlap(2, 3).unwrap().norm();
        assert!((z - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_grids() {
        let g = grid(4);
        let cyc = Grid::new(4, 0.5, 0.0, Boundary::Cyclic).unwrap();
        let shifted = Grid::new(4, 0.5, 1.0, Boundary::Truncated).unwrap();
        assert!(build_energy_povm(&g, &grid(5), 1).is_err());
        assert!(build_energy_povm(&cyc, &cyc, 1).is_err());
        assert!(build_energy_povm(&shifted, &shifted, 1).is_err());
        assert!(build_energy_povm(&g, &g, 0).is_err());
    }

    #[test]
    fn outcome_cases() {
        let g = grid(16);
        let a = EnergyOutcome::from_coords(&g, 2.0, 0.3, 3.0).unwrap();
        assert_eq!((a.case, a.sum_index), (EnergyCase::Case1a, 4));
        assert!((a.gamma - 1.0).abs() < 1e-15);
        let b = EnergyOutcome::from_coords(&g, 4.5, 0.0, 3.0).unwrap();
        assert_eq!(b.case, EnergyCase::Case1b);
        assert!((b.gamma - 1.5).abs() < 1e-15);
        assert_eq!(EnergyOutcome::from_coords(&g, 3.0, 0.0, 3.0).unwrap().case, EnergyCase::Boundary);
        assert!(EnergyOutcome::from_coords(&g, 2.2, 0.0, 3.0).is_err());
        assert!(EnergyOutcome::from_coords(&g, 16.0, 0.0, 3.0).is_err());
    }

    #[test]
    fn region_formula() {
        let w = SupportWindow { e_min: 1.0, e_max: 3.0 };
        assert_eq!(acceptance_region(&w, 4.0), Some((3.0, 5.0)));
        assert_eq!(acceptance_region(&w, 2.0), None);
        let r = acceptance_region(&w, 4.0);
        assert!(!is_accepted(r, 3.0, 0.5));
        assert!(is_accepted(r, 3.5, 0.5));
        assert!(is_accepted(r, 4.0, 0.5));
        assert!(!is_accepted(r, 5.0, 0.5));
    }

    #[test]
    fn support_window_of_bump() {
        let g = grid(32);
        let psi = bump(&g, 2.0, 5.0, 0.0).unwrap();
        let w = SupportWindow::from_state(&psi, TAU_SUPP).unwrap();
        assert_eq!((w.e_min, w.e_max), (2.5, 4.5));
    }

    #[test]
    fn boundary_at_zero_time_is_identity() {
        let g = grid(16);
        let psi = bump(&g, 0.0, 3.0, 0.7).unwrap();
        let z = EnergyOutcome::from_coords(&g, 4.0, 0.0, 4.0).unwrap();
        let pred = predict_post_state_energy(&psi, &z, 4.0).unwrap();
        assert!(!pred.clipped);
        assert!((pred.state.amplitudes() - psi.amplitudes()).norm() < 1e-14);
        let back = correction_energy(&psi, &z, 4.0).unwrap();
        assert!((back.amplitudes() - psi.amplitudes()).norm() < 1e-15);
    }

    #[test]
    fn correction_inverts_prediction_inside_region() {
        let g = grid(32);
        let eps0 = 4.0;
        let psi = bump(&g, 1.0, 3.5, 0.4).unwrap();
        let w = SupportWindow::from_state(&psi, TAU_SUPP).unwrap();
        let region = acceptance_region(&w, eps0);
        for m in 0..=62 {
            for time in [0.0, 1.3, 7.0] {
                let z = EnergyOutcome::new(&g, m, time, eps0).unwrap();
                let Ok(pred) = predict_post_state_energy(&psi, &z, eps0) else {
                    continue;
                };
                let f = pure_fidelity(&correction_energy(&pred.state, &z, eps0).unwrap(), &psi).unwrap();
                let inside = is_accepted(region, z.two_omega, g.spacing());
                assert_eq!(!pred.clipped, inside, "m={m}");
                if inside {
                    assert!(f > 1.0 - 1e-12, "m={m}: {f}");
                } else {
                    assert!(f < 1.0 - 1e-6, "m={m}: {f}");
                }
            }
        }
    }

    #[test]
    fn clipped_prediction_cannot_be_undone() {
        // case 1a with E_max > 2Ω
        let g = grid(16);
        let eps0 = 4.0;
        let psi = bump(&g, 0.5, 3.0, 0.0).unwrap();
        let z = EnergyOutcome::from_coords(&g, 2.0, 0.0, eps0).unwrap();
        let pred = predict_post_state_energy(&psi, &z, eps0).unwrap();
        assert!(pred.clipped);
        let f = pure_fidelity(&correction_energy(&pred.state, &z, eps0).unwrap(), &psi).unwrap();
        assert!(f < 1.0 - 1e-6);
        let far = EnergyOutcome::from_coords(&g, 0.0, 0.0, eps0).unwrap();
        assert_eq!(predict_post_state_energy(&psi, &far, eps0), Err(Error::ImpossibleOutcome));
    }

    #[test]
    fn corrections_are_unitary_and_invertible() {
        let g = grid(12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for eps0 in [1.0, 3.0, 5.5] {
            for m in 0..=22 {
                let z = EnergyOutcome::new(&g, m, 0.9, eps0).unwrap();
                let c = EnergyCorrection::new(&g, &z, eps0).unwrap();
                let u = c.to_unitary().unwrap();
                let psi = random::pure_state(&mut rng, vec![g]);
                let out = c.apply(&psi).unwrap();
                assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
                assert!((out.amplitudes() - u.apply_state(&psi).unwrap().amplitudes()).norm() < 1e-14);
                let back = c.apply_adjoint(&out).unwrap();
                assert!((back.amplitudes() - psi.amplitudes()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn pipeline_matches_prediction() {
        let g = grid(16);
        let eps0 = 4.0;
        let psi = bump(&g, 0.5, 2.5, 0.3).unwrap();
        let epr = ideal_epr_energy(&g, &g, eps0).unwrap();
        let records = run_energy_protocol(&psi, &epr, eps0, 2).unwrap();
        assert_eq!(records.len(), 2 * 16 * 16);
        let total: f64 = records.iter().map(|r| r.probability()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for r in &records {
            let z = EnergyOutcome::from_label(&g, &r.label, eps0).unwrap();
            match (&r.conditional, predict_post_state_energy(&psi, &z, eps0)) {
                (Some(ConditionalState::Pure(p)), Ok(pred)) => {
                    assert!(pure_fidelity(p, &pred.state).unwrap() > 1.0 - 1e-10);
                    assert_eq!(pred.clipped, r.clipped);
                }
                (None, Err(Error::ImpossibleOutcome)) => {}
                (c, p) => panic!("disagree at {}: {c:?} vs {p:?}", r.label),
            }
            if r.accepted {
                assert!(r.fidelity.unwrap() > 1.0 - 1e-9);
            }
        }
        assert!(records.iter().any(|r| r.accepted));
    }

    #[test]
    fn run_validates_grid_span() {
        let g = grid(10);
        let psi = bump(&g, 1.0, 3.0, 0.0).unwrap();
        let epr = ideal_epr_energy(&g, &g, 2.0).unwrap();
        assert!(run_energy_protocol(&psi, &epr, 2.0, 1).is_ok());
        let epr = ideal_epr_energy(&g, &g, 3.0).unwrap();
        assert!(matches!(run_energy_protocol(&psi, &epr, 3.0, 1), Err(Error::InvalidGrid(_))));
    }
}
