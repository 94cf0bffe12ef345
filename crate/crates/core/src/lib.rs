//! Acoustic scattering by many small bodies embedded in an inhomogeneous
//! background, the continuum equations they converge to, and a recipe for
//! designing particle clouds that realise a prescribed refraction coefficient.
//!
//! Impedance particles are handled by [`foldy_impedance`], acoustically hard
//! ones by [`foldy_neumann`]; [`limit`] solves the continuum equations and
//! [`design`] inverts them. [`convergence`] ties the discrete and continuum
//! models together across shrinking particle sizes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convergence;
pub mod coupling;
pub mod cplx;
pub mod design;
pub mod error;
pub mod export;
pub mod foldy_impedance;
pub mod foldy_neumann;
pub mod geometry;
pub mod grid;
pub mod kernel;
pub mod limit;
pub mod linalg;
pub mod medium;
pub mod particles;
pub mod quadrature;
pub mod volume;

pub use error::{Error, ErrorClass, Result};
