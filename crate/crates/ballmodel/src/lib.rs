//! Finite-dimensional operator models over the unit ball of `C^d`.
//!
//! The crate evaluates and classifies colligations whose transfer functions
//! are Schur-class multipliers of the Drury-Arveson space, builds and checks
//! their Agler decompositions and functional-model colligations, and computes
//! characteristic functions, moments and equivalence tests for row
//! contractions.
//!
//! Everything is generic over the real scalar type (`f32` or `f64`); the
//! `f64` aliases below are what most callers want.

pub mod agler;
pub mod colligation;
pub mod error;
pub mod matcore;
pub mod random;
pub mod rowmodel;
pub mod scalar;
pub mod series;
mod unitary_search;

pub use error::{Error, Result};
pub use scalar::{Real, Tolerances};

/// Dense complex matrix over `f64`.
pub type Matrix = matcore::CMat<f64>;
/// Orthonormal-basis subspace over `f64`.
pub type Subspace = matcore::Subspace<f64>;
/// Colligation over `f64`.
pub type Colligation = colligation::Colligation<f64>;
/// Row contraction over `f64`.
pub type RowContraction = rowmodel::RowContraction<f64>;
/// Commuting-variable series over `f64`.
pub type CommSeries = series::CommSeries<f64>;
/// Noncommuting-variable series over `f64`.
pub type NcSeries = series::NcSeries<f64>;
/// Complex scalar over `f64`.
pub type C64 = num_complex::Complex<f64>;
