//! Simulation and measurement toolkit for Brownian sheets on dyadic lattices.
//!
//! The crate builds (N, d)-Brownian sheets exactly at lattice vertices,
//! extracts dyadic occupancy of their zero sets, and measures fractal
//! quantities: box-counting dimensions, behaviour under orthogonal
//! projections, good-square counts along tubes, dimension doubling under the
//! sheet map, occupation-density local times along fibers, and excursion
//! statistics of the restricted processes. Closed-form oracles back the
//! statistical checks wherever an exact value exists.
//!
//! Box-counting slopes stand in for Hausdorff dimension throughout: at any
//! finite lattice level only covering counts are measurable, so every
//! dimension figure here is a regression estimate with a tolerance, not an
//! exact invariant. Thresholded occupancy rules additionally inflate counts
//! by slowly varying factors, which biases fitted slopes upward on the order
//! of `log(n)/n` at working levels.

pub mod closed_form;
pub mod error;
pub mod field;
pub mod geometry;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
