//! Discretized continuous-variable teleportation.
//!
//! Building blocks: grids and dense operators ([`hilbert`]), identity
//! resolutions and conditional states ([`measurement`]), EPR-pair factories
//! ([`epr`]), the position/momentum protocol ([`protocol_xp`]), the
//! energy/time protocol with its non-orthogonal tight-frame measurement
//! ([`protocol_energy`]), an exact qubit reference ([`qubit_oracle`]), and
//! experiment drivers ([`analysis`], [`cli`]).

pub mod analysis;
pub mod cli;
pub mod epr;
pub mod error;
pub mod hilbert;
pub mod measurement;
pub mod protocol_energy;
pub mod protocol_xp;
pub mod qubit_oracle;
pub mod random;
pub mod record;
pub mod states;

pub use error::{Error, Result};
