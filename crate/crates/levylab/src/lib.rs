//! Numerical potential theory for isotropic purely discontinuous jump
//! processes in `R^d`.
//!
//! The crate provides:
//!
//! * complete Bernstein functions of subordinators and the scaling /
//!   monotonicity inequalities they satisfy ([`bernstein`]),
//! * jump densities, free Green functions and asymptotic checkers for
//!   stable and subordinate-Brownian-motion models ([`kernels`]),
//! * open subsets of `R^d` built from geometric primitives with interior
//!   ball queries ([`geometry`]),
//! * exact sphere-stepping exit-law simulation for isotropic stable
//!   processes with exit-time, Green-function and harmonic-function
//!   estimators ([`simulate`]),
//! * Poisson kernels, accessibility classification, Martin-kernel limits
//!   and oscillation-reduction experiments ([`potential`]).
//!
//! All estimators are deterministic given a seed and independent of the
//! number of worker threads.

pub mod bernstein;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod potential;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::LabError;
