//! Identity resolutions, the canonical projective update, and the
//! conditional-state engine
//! `ρ̃_z = Tr_A{(M_z ⊗ I_B) ρ_AB}`, `H(z) = Tr ρ̃_z`, `ρ_z = ρ̃_z / H(z)`.
//!
//! Only the identity resolution of the measured subsystem enters these
//! formulas; how the measurement disturbs subsystem A is never modeled.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    max_abs, pure_fidelity, CMatrix, CVector, DensityOperator, Grid, PureState, Unitary, C64,
};

/// Outcomes whose density falls below this carry no conditional state.
pub const TAU_PROB: f64 = 1e-14;
/// Tolerance for `Σ w_z M_z = I`.
pub const COMPLETENESS_TOL: f64 = 1e-10;
/// Cross products `M_z M_z'` below this count as vanishing.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;
/// Per-element positivity tolerance.
pub const ELEMENT_PSD_TOL: f64 = 1e-12;

/// A point of the outcome space together with its quadrature weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLabel {
    pub coords: Vec<f64>,
    pub indices: Vec<i64>,
    pub bin_weight: f64,
}

impl OutcomeLabel {
    pub fn new(coords: Vec<f64>, indices: Vec<i64>, bin_weight: f64) -> Self {
        OutcomeLabel {
            coords,
            indices,
            bin_weight,
        }
    }
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}@{:?}", self.indices, self.coords)
    }
}

/// Sparse vector, entries sorted by index with no duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, C64)>,
}

impl SparseVector {
    pub fn new(dim: usize, mut entries: Vec<(usize, C64)>) -> Result<Self> {
        entries.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, C64)> = Vec::with_capacity(entries.len());
        for (i, z) in entries {
            if i >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: i,
                });
            }
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += z,
                _ => merged.push((i, z)),
            }
        }
        Ok(SparseVector {
            dim,
            entries: merged,
        })
    }

    pub fn from_dense(v: &CVector) -> Self {
        let entries = v
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm_sqr() > 0.0)
            .map(|(i, &z)| (i, z))
            .collect();
        SparseVector { dim: v.len(), entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, C64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> CVector {
        let mut v = CVector::zeros(self.dim);
        for &(i, z) in &self.entries {
            v[i] = z;
        }
        v
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|(_, z)| z.norm_sqr()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, (_, z)| m.max(z.norm()))
    }

    /// `⟨self|other⟩` by merging sorted index lists.
    pub fn dotc(&self, other: &SparseVector) -> C64 {
        let (mut i, mut j) = (0, 0);
        let mut acc = C64::new(0.0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, za) = self.entries[i];
            let (b, zb) = other.entries[j];
            match a.cmp(&b) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += za.conj() * zb;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    fn support(&self) -> Vec<usize> {
        self.entries.iter().map(|&(i, _)| i).collect()
    }
}

/// Positive operator of a POVM element. Rank-one elements keep only their
/// factor `φ` (with `M = |φ⟩⟨φ|`); dense matrices are built on demand.
#[derive(Debug, Clone, PartialEq)]
pub enum PovmOperator {
    RankOne(SparseVector),
    Dense(CMatrix),
}

impl PovmOperator {
    pub fn dim(&self) -> usize {
        match self {
            PovmOperator::RankOne(v) => v.dim(),
            PovmOperator::Dense(m) => m.nrows(),
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        match self {
            PovmOperator::RankOne(v) => {
                let d = v.to_dense();
                &d * d.adjoint()
            }
            PovmOperator::Dense(m) => m.clone(),
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            PovmOperator::RankOne(v) if v.dim() > 1 => 0.0,
            PovmOperator::RankOne(v) => v.norm_sqr(),
            PovmOperator::Dense(m) => m
                .clone()
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PovmElement {
    pub label: OutcomeLabel,
    pub operator: PovmOperator,
}

/// Finite family of weighted positive operators on the measured subsystem.
#[derive(Debug, Clone)]
pub struct PovmFamily {
    space: Vec<Grid>,
    elements: Vec<PovmElement>,
    orthogonal: bool,
}

impl PovmFamily {
    /// Validates dimensions, weights and per-element positivity and computes
    /// the orthogonality flag.
    pub fn new(space: Vec<Grid>, elements: Vec<PovmElement>) -> Result<Self> {
        if space.is_empty() {
            return Err(Error::Empty("POVM space"));
        }
        if elements.is_empty() {
            return Err(Error::Empty("POVM family"));
        }
        let dim: usize = space.iter().map(Grid::len).product();
        for e in &elements {
            if e.operator.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: e.operator.dim(),
                });
            }
            if !(e.label.bin_weight > 0.0) {
                return Err(Error::InvalidPovm(format!(
                    "non-positive bin weight at {}",
                    e.label
                )));
            }
            if let PovmOperator::Dense(m) = &e.operator {
                let herm = max_abs(&(m - m.adjoint()));
                if herm > ELEMENT_PSD_TOL * max_abs(m).max(1.0) {
                    return Err(Error::InvalidPovm(format!("element {} not Hermitian", e.label)));
                }
                if e.operator.min_eigenvalue() < -ELEMENT_PSD_TOL {
                    return Err(Error::InvalidPovm(format!("element {} not positive", e.label)));
                }
            }
        }
        let mut family = PovmFamily {
            space,
            elements,
            orthogonal: false,
        };
        family.orthogonal = family.orthogonality_deviation() <= ORTHOGONALITY_TOL;
        Ok(family)
    }

    pub fn space(&self) -> &[Grid] {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.iter().map(Grid::len).product()
    }

    pub fn elements(&self) -> &[PovmElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonal
    }

    /// Groups rank-one elements by support. Returns `None` when some dense
    /// element exists or two distinct supports overlap, in which case no
    /// block structure is available.
    fn support_groups(&self) -> Option<Vec<(Vec<usize>, Vec<usize>)>> {
        let mut groups: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
        for (k, e) in self.elements.iter().enumerate() {
            match &e.operator {
                PovmOperator::RankOne(v) => groups.entry(v.support()).or_default().push(k),
                PovmOperator::Dense(_) => return None,
            }
        }
        let mut owner = vec![usize::MAX; self.dim()];
        let mut out: Vec<(Vec<usize>, Vec<usize>)> = groups.into_iter().collect();
        out.sort();
        for (g, (support, _)) in out.iter().enumerate() {
            for &i in support {
                if owner[i] != usize::MAX {
                    return None;
                }
                owner[i] = g;
            }
        }
        Some(out)
    }

    /// `max_{z≠z'} ‖M_z M_z'‖_max`.
    pub fn orthogonality_deviation(&self) -> f64 {
        match self.support_groups() {
            Some(groups) => groups
                .par_iter()
                .map(|(_, members)| self.rank_one_cross_max(members))
                .reduce(|| 0.0, f64::max),
            None => {
                let all_rank_one = self
                    .elements
                    .iter()
                    .all(|e| matches!(e.operator, PovmOperator::RankOne(_)));
                if all_rank_one {
                    let members: Vec<usize> = (0..self.elements.len()).collect();
                    self.rank_one_cross_max(&members)
                } else {
                    let dense: Vec<CMatrix> =
                        self.elements.iter().map(|e| e.operator.to_dense()).collect();
                    let mut dev: f64 = 0.0;
                    for i in 0..dense.len() {
                        for j in (i + 1)..dense.len() {
                            dev = dev.max(max_abs(&(&dense[i] * &dense[j])));
                        }
                    }
                    dev
                }
            }
        }
    }

    fn rank_one_cross_max(&self, members: &[usize]) -> f64 {
        let factors: Vec<&SparseVector> = members
            .iter()
            .map(|&k| match &self.elements[k].operator {
                PovmOperator::RankOne(v) => v,
                PovmOperator::Dense(_) => unreachable!("rank-one members only"),
            })
            .collect();
        let peaks: Vec<f64> = factors.iter().map(|v| v.max_abs()).collect();
        let mut dev: f64 = 0.0;
        for i in 0..factors.len() {
            for j in (i + 1)..factors.len() {
                let overlap = factors[i].dotc(factors[j]).norm();
                dev = dev.max(overlap * peaks[i] * peaks[j]);
            }
        }
        dev
    }

    /// Gram entry `⟨φ_i|φ_j⟩` of two rank-one elements.
    pub fn overlap(&self, i: usize, j: usize) -> Option<C64> {
        match (&self.elements[i].operator, &self.elements[j].operator) {
            (PovmOperator::RankOne(a), PovmOperator::RankOne(b)) => Some(a.dotc(b)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    /// `‖Σ_z w_z M_z − I‖_max`.
    pub deviation: f64,
    /// Smallest eigenvalue over all elements.
    pub min_eigenvalue: f64,
}

impl CompletenessReport {
    pub fn is_complete(&self) -> bool {
        self.deviation < COMPLETENESS_TOL
    }
}

pub fn check_completeness(povm: &PovmFamily) -> CompletenessReport {
    let min_eigenvalue = povm
        .elements
        .iter()
        .map(|e| e.operator.min_eigenvalue())
        .fold(f64::INFINITY, f64::min);
    let deviation = match povm.support_groups() {
        Some(groups) => block_deviation(povm, &groups),
        None => sparse_deviation(povm),
    };
    CompletenessReport {
        deviation,
        min_eigenvalue,
    }
}

fn block_deviation(povm: &PovmFamily, groups: &[(Vec<usize>, Vec<usize>)]) -> f64 {
    let covered: usize = groups.iter().map(|(s, _)| s.len()).sum();
    // Any basis index outside every support has diagonal sum 0.
    let uncovered = if covered < povm.dim() { 1.0 } else { 0.0 };
    groups
        .par_iter()
        .map(|(support, members)| {
            let s = support.len();
            let mut block = CMatrix::zeros(s, s);
            for &k in members {
                let e = &povm.elements[k];
                if let PovmOperator::RankOne(v) = &e.operator {
                    let w = e.label.bin_weight;
                    for (r, &(_, zr)) in v.entries().iter().enumerate() {
                        for (c, &(_, zc)) in v.entries().iter().enumerate() {
                            block[(r, c)] += zr * zc.conj() * w;
                        }
                    }
                }
            }
            for i in 0..s {
                block[(i, i)] -= C64::new(1.0, 0.0);
            }
            max_abs(&block)
        })
        .reduce(|| 0.0, f64::max)
        .max(uncovered)
}

fn sparse_deviation(povm: &PovmFamily) -> f64 {
    let dim = povm.dim();
    let mut acc: HashMap<(usize, usize), C64> = HashMap::new();
    for e in &povm.elements {
        let w = C64::new(e.label.bin_weight, 0.0);
        match &e.operator {
            PovmOperator::RankOne(v) => {
                for &(r, zr) in v.entries() {
                    for &(c, zc) in v.entries() {
                        *acc.entry((r, c)).or_default() += zr * zc.conj() * w;
                    }
                }
            }
            PovmOperator::Dense(m) => {
                for r in 0..dim {
                    for c in 0..dim {
                        if m[(r, c)].norm_sqr() > 0.0 {
                            *acc.entry((r, c)).or_default() += m[(r, c)] * w;
                        }
                    }
                }
            }
        }
    }
    let mut dev: f64 = 0.0;
    for i in 0..dim {
        if !acc.contains_key(&(i, i)) {
            dev = 1.0;
        }
    }
    for (&(r, c), z) in &acc {
        let target = if r == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
        dev = dev.max((z - target).norm());
    }
    dev
}

/// One branch of a projective measurement.
#[derive(Debug, Clone)]
pub struct ProjectiveOutcome {
    pub probability: f64,
    /// `E ρ E / Tr{E ρ}`; absent below [`TAU_PROB`].
    pub state: Option<DensityOperator>,
}

/// Lüders–von Neumann update: `ρ ↦ E_j ρ E_j / Tr{E_j ρ}` with probability
/// `Tr{E_j ρ}`, one entry per projector.
pub fn canonical_update(rho: &DensityOperator, projectors: &[CMatrix]) -> Result<Vec<ProjectiveOutcome>> {
    if projectors.is_empty() {
        return Err(Error::InvalidProjectors("empty family".into()));
    }
    let d = rho.dim();
    let mut total = CMatrix::zeros(d, d);
    for (j, e) in projectors.iter().enumerate() {
        if e.nrows() != d || e.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: e.nrows(),
            });
        }
        if max_abs(&(e - e.adjoint())) > COMPLETENESS_TOL {
            return Err(Error::InvalidProjectors(format!("E_{j} is not Hermitian")));
        }
        if max_abs(&(e * e - e)) > COMPLETENESS_TOL {
            return Err(Error::InvalidProjectors(format!("E_{j} is not idempotent")));
        }
        for (k, f) in projectors.iter().enumerate().skip(j + 1) {
            if max_abs(&(e * f)) > COMPLETENESS_TOL {
                return Err(Error::InvalidProjectors(format!("E_{j} E_{k} ≠ 0")));
            }
        }
        total += e;
    }
    let dev = max_abs(&(total - CMatrix::identity(d, d)));
    if dev > COMPLETENESS_TOL {
        return Err(Error::InvalidProjectors(format!(
            "projectors do not sum to the identity (deviation {dev:e})"
        )));
    }
    Ok(projectors
        .iter()
        .map(|e| {
            let probability = (e * rho.matrix()).trace().re;
            let state = (probability >= TAU_PROB).then(|| {
                let m = e * rho.matrix() * e / C64::new(probability, 0.0);
                DensityOperator::from_hermitian_parts(rho.grids().to_vec(), m)
            });
            ProjectiveOutcome { probability, state }
        })
        .collect())
}

/// Normalized post-measurement state of subsystem B.
#[derive(Debug, Clone, PartialEq)]
pub enum ConditionalState {
    Pure(PureState),
    Mixed(DensityOperator),
}

impl ConditionalState {
    pub fn to_density(&self) -> DensityOperator {
        match self {
            ConditionalState::Pure(p) => p.to_density(),
            ConditionalState::Mixed(m) => m.clone(),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            ConditionalState::Pure(p) => p.norm_sqr(),
            ConditionalState::Mixed(m) => m.trace(),
        }
    }

    pub fn apply(&self, u: &Unitary) -> Result<ConditionalState> {
        Ok(match self {
            ConditionalState::Pure(p) => ConditionalState::Pure(u.apply_state(p)?),
            ConditionalState::Mixed(m) => ConditionalState::Mixed(u.apply_density(m)?),
        })
    }

    /// Fidelity with a pure reference state.
    pub fn fidelity_with(&self, reference: &PureState) -> Result<f64> {
        match self {
            ConditionalState::Pure(p) => pure_fidelity(p, reference),
            ConditionalState::Mixed(m) => {
                crate::hilbert::fidelity(&reference.to_density(), m)
            }
        }
    }

    pub fn as_pure(&self) -> Option<&PureState> {
        match self {
            ConditionalState::Pure(p) => Some(p),
            ConditionalState::Mixed(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConditionalOutcome {
    pub label: OutcomeLabel,
    /// `H(z) = Tr ρ̃_z`.
    pub density: f64,
    pub state: Option<ConditionalState>,
}

impl ConditionalOutcome {
    /// Probability mass of the bin, `w_z H(z)`.
    pub fn probability(&self) -> f64 {
        self.label.bin_weight * self.density
    }
}

/// Conditional outcomes together with the grid shape of the unmeasured
/// subsystem they live on.
#[derive(Debug, Clone)]
pub struct ConditionalEnsemble {
    pub grids: Vec<Grid>,
    pub outcomes: Vec<ConditionalOutcome>,
}

impl ConditionalEnsemble {
    pub fn total_probability(&self) -> f64 {
        self.outcomes.iter().map(ConditionalOutcome::probability).sum()
    }
}

fn split_shape(full: &[Grid], povm: &PovmFamily) -> Result<(usize, usize, Vec<Grid>)> {
    let k = povm.space().len();
    if full.len() <= k {
        return Err(Error::ShapeMismatch(format!(
            "state has {} subsystems, measured part has {k}; nothing left over",
            full.len()
        )));
    }
    if !full[..k].iter().zip(povm.space()).all(|(a, b)| a.same_as(b)) {
        return Err(Error::ShapeMismatch(
            "POVM space does not match the leading subsystems".into(),
        ));
    }
    let da: usize = full[..k].iter().map(Grid::len).product();
    let db: usize = full[k..].iter().map(Grid::len).product();
    Ok((da, db, full[k..].to_vec()))
}

fn finish(label: OutcomeLabel, unnormalized: ConditionalState) -> ConditionalOutcome {
    let density = unnormalized.trace();
    let state = (density >= TAU_PROB).then(|| match unnormalized {
        ConditionalState::Pure(p) => {
            let n = density.sqrt();
            let grids = p.grids().to_vec();
            let amps = p.into_amplitudes() / C64::new(n, 0.0);
            ConditionalState::Pure(PureState::new(grids, amps).expect("shape unchanged"))
        }
        ConditionalState::Mixed(m) => ConditionalState::Mixed(m.scaled(1.0 / density)),
    });
    ConditionalOutcome {
        label,
        density,
        state,
    }
}

/// Conditional states of subsystem B for a general `ρ_AB`, where A is the
/// leading block of subsystems matching the POVM space.
pub fn conditional_states(rho_ab: &DensityOperator, povm: &PovmFamily) -> Result<ConditionalEnsemble> {
    let (da, db, grids_b) = split_shape(rho_ab.grids(), povm)?;
    let rho = rho_ab.matrix();
    let outcomes = povm
        .elements()
        .par_iter()
        .map(|e| {
            let m = match &e.operator {
                PovmOperator::RankOne(phi) => {
                    // (⟨φ|⊗I) ρ (|φ⟩⊗I)
                    let mut half = CMatrix::zeros(da * db, db);
                    for &(a, za) in phi.entries() {
                        for row in 0..da * db {
                            for b in 0..db {
                                half[(row, b)] += rho[(row, a * db + b)] * za;
                            }
                        }
                    }
                    let mut out = CMatrix::zeros(db, db);
                    for &(a, za) in phi.entries() {
                        for b in 0..db {
                            for b2 in 0..db {
                                out[(b, b2)] += za.conj() * half[(a * db + b, b2)];
                            }
                        }
                    }
                    out
                }
                PovmOperator::Dense(mz) => CMatrix::from_fn(db, db, |b, b2| {
                    let mut acc = C64::new(0.0, 0.0);
                    for a in 0..da {
                        for a2 in 0..da {
                            acc += mz[(a, a2)] * rho[(a2 * db + b, a * db + b2)];
                        }
                    }
                    acc
                }),
            };
            let op = DensityOperator::from_hermitian_parts(grids_b.clone(), m);
            finish(e.label.clone(), ConditionalState::Mixed(op))
        })
        .collect();
    Ok(ConditionalEnsemble {
        grids: grids_b,
        outcomes,
    })
}

/// Same as [`conditional_states`] for a pure `|Ψ_AB⟩`, without forming the
/// density matrix. Rank-one elements give pure conditional states.
pub fn conditional_states_pure(psi_ab: &PureState, povm: &PovmFamily) -> Result<ConditionalEnsemble> {
    let (da, db, grids_b) = split_shape(psi_ab.grids(), povm)?;
    let psi = psi_ab.amplitudes();
    let outcomes = povm
        .elements()
        .par_iter()
        .map(|e| {
            let unnormalized = match &e.operator {
                PovmOperator::RankOne(phi) => {
                    let mut v = CVector::zeros(db);
                    for &(a, za) in phi.entries() {
                        let zc = za.conj();
                        for b in 0..db {
                            v[b] += zc * psi[a * db + b];
                        }
                    }
                    ConditionalState::Pure(PureState::new(grids_b.clone(), v).expect("B shape"))
                }
                PovmOperator::Dense(mz) => {
                    let block = CMatrix::from_fn(da, db, |a, b| psi[a * db + b]);
                    let m = block.transpose() * mz.transpose() * block.conjugate();
                    ConditionalState::Mixed(DensityOperator::from_hermitian_parts(grids_b.clone(), m))
                }
            };
            finish(e.label.clone(), unnormalized)
        })
        .collect();
    Ok(ConditionalEnsemble {
        grids: grids_b,
        outcomes,
    })
}

/// `Σ_{z ∈ subset} w_z H(z) U_z ρ_z U_z†`; trace equals the selected
/// probability mass. Outcomes without a conditional state are skipped.
pub fn corrected_aggregate<C, S>(
    ensemble: &ConditionalEnsemble,
    correction: C,
    subset: S,
) -> Result<DensityOperator>
where
    C: Fn(&OutcomeLabel) -> Option<Unitary>,
    S: Fn(&OutcomeLabel) -> bool,
{
    let mut acc = DensityOperator::zeros(ensemble.grids.clone())?;
    for o in &ensemble.outcomes {
        if !subset(&o.label) {
            continue;
        }
        let Some(state) = &o.state else { continue };
        let u = correction(&o.label).ok_or_else(|| Error::MissingCorrection(o.label.to_string()))?;
        let corrected = state.apply(&u)?.to_density();
        acc.add_assign(&corrected.scaled(o.probability()))?;
    }
    Ok(acc)
}
