use serde::{Deserialize, Serialize};

use crate::measurement::{ConditionalState, OutcomeLabel};

/// Everything the protocols report about one measurement outcome.
#[derive(Debug, Clone)]
pub struct TeleportRecord {
    pub label: OutcomeLabel,
    /// `H(z)`.
    pub density: f64,
    /// Normalized state of the receiving particle before correction.
    pub conditional: Option<ConditionalState>,
    /// State after the outcome's correcting unitary (accepted outcomes).
    pub corrected: Option<ConditionalState>,
    /// Fidelity of `corrected` with the input state.
    pub fidelity: Option<f64>,
    /// Outcome lies in the acceptance region.
    pub accepted: bool,
    /// The conditional state misses part of the input's support.
    pub clipped: bool,
}

impl TeleportRecord {
    /// `w_z H(z)`.
    pub fn probability(&self) -> f64 {
        self.label.bin_weight * self.density
    }

    pub fn to_row(&self) -> RecordRow {
        RecordRow {
            label: self.label.clone(),
            density: self.density,
            probability: self.probability(),
            accepted: self.accepted,
            fidelity: self.fidelity,
            clipped: self.clipped,
        }
    }
}

/// Flat, serializable view of a [`TeleportRecord`] without state vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub label: OutcomeLabel,
    pub density: f64,
    pub probability: f64,
    pub accepted: bool,
    pub fidelity: Option<f64>,
    pub clipped: bool,
}
