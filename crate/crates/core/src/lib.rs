//! Pauli-string scrambling: qudit Clifford gates, 3-bit reversible gates,
//! tree circuits, string-weight dynamics, OTOCs and phase-state ensembles.

pub mod circuits;
pub mod clifford;
pub mod dense;
pub mod dynamics;
pub mod field;
pub mod gates;
pub mod otoc;
pub mod pauli;
pub mod prs;
pub mod sampling;
#[cfg(feature = "cli")]
pub mod cli;
