//! Key-rate analysis for conference key agreement with coherent states and
//! a passive linear-optics relay.
//!
//! The crate layers as follows: [`interferometer`] builds the relay's mode
//! transform, [`channel_stats`] evaluates the detection statistics of the
//! symmetric channel model, [`decoy`] turns gains into yield upper bounds,
//! [`phase_error`] bounds the phase-error rate, [`keyrate`] combines
//! everything into an optimized key rate, and [`sweep`] drives loss sweeps.
//! [`fock_oracle`] is an independent brute-force simulator used to validate
//! the closed forms.

// Negated comparisons deliberately treat NaN as invalid input.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel_stats;
pub mod decoy;
pub mod error;
pub mod fock_oracle;
pub mod interferometer;
pub mod keyrate;
pub mod math;
pub mod params;
pub mod phase_error;
pub mod quadrature;
pub mod sweep;
pub mod tables;

pub use error::{Error, Result};
pub use interferometer::{build_transform, ModeTransform};
pub use params::ProtocolParams;
pub use quadrature::QuadratureSpec;
pub use tables::{GainTable, PhotonTuple, Symmetry, YieldKind, YieldTable};
