//! Single-particle test states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Grid, PureState, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputState {
    /// `exp(−(x − c)²/4w² + i p x)`.
    GaussianPacket { center: f64, width: f64, momentum: f64 },
    /// `exp(−1/(1 − u²))` on `(e_min, e_max)`, zero outside, times `e^{i p x}`.
    Bump { e_min: f64, e_max: f64, momentum: f64 },
}

impl InputState {
    pub fn build(&self, grid: &Grid) -> Result<PureState> {
        match *self {
            InputState::GaussianPacket {
                center,
                width,
                momentum,
            } => gaussian_packet(grid, center, width, momentum),
            InputState::Bump {
                e_min,
                e_max,
                momentum,
            } => bump(grid, e_min, e_max, momentum),
        }
    }
}

pub fn gaussian_packet(grid: &Grid, center: f64, width: f64, momentum: f64) -> Result<PureState> {
    if !(width > 0.0) {
        return Err(Error::InvalidInput(format!("packet width must be positive, got {width}")));
    }
    let lo = grid.origin();
    let hi = grid.coord(grid.len() - 1);
    if center - 4.0 * width < lo || center + 4.0 * width > hi {
        return Err(Error::InvalidInput(format!(
            "packet center ± 4·width = [{}, {}] leaves the grid [{lo}, {hi}]",
            center - 4.0 * width,
            center + 4.0 * width
        )));
    }
    let s = 4.0 * width * width;
    PureState::sample(*grid, |x| {
        C64::from_polar((-(x - center).powi(2) / s).exp(), momentum * x)
    })
    .normalized()
}

/// Smooth compactly supported profile; amplitudes at the open interval's
/// endpoints are exactly zero.
pub fn bump(grid: &Grid, e_min: f64, e_max: f64, momentum: f64) -> Result<PureState> {
    if !(e_max > e_min) {
        return Err(Error::InvalidInput(format!("empty bump support [{e_min}, {e_max}]")));
    }
    if e_min < grid.origin() || e_max > grid.coord(grid.len() - 1) {
        return Err(Error::InvalidInput(format!(
            "bump support [{e_min}, {e_max}] leaves the grid"
        )));
    }
    let (mid, half) = (0.5 * (e_min + e_max), 0.5 * (e_max - e_min));
    PureState::sample(*grid, |x| {
        let u = (x - mid) / half;
        if u.abs() < 1.0 {
            C64::from_polar((-1.0 / (1.0 - u * u)).exp(), momentum * x)
        } else {
            C64::new(0.0, 0.0)
        }
    })
    .normalized()
    .map_err(|_| Error::InvalidInput(format!("bump [{e_min}, {e_max}] contains no grid point")))
}
