//! Joint hybrid beamforming and beyond-diagonal IRS optimization for THz
//! downlink systems.
//!
//! A base station with `M` antennas and `M_RF` RF chains serves `N`
//! single-antenna users through a `K`-element IRS operating in a hybrid
//! reflective/transmissive mode. The stacked scattering matrix
//! `Θ = [Θ_t; Θ_r]` lives on the set of `2K×K` matrices with orthonormal
//! columns, and the sum rate is maximized by block coordinate ascent on a
//! quadratic-transform surrogate:
//!
//! * [`channel`] synthesizes LoS THz channels with molecular absorption.
//! * [`fp`] holds SINR, sum rate, the surrogate and its auxiliary updates.
//! * [`beamforming`] solves the analog and digital precoder blocks.
//! * [`manifold`] optimizes `Θ` with rotation-matrix steps on the manifold.
//! * [`solver`] runs the outer block loop.
//! * [`baselines`] provides the TDMA and FDMA reference schemes.
//! * [`config`], [`harness`] and [`output`] drive seeded experiments.

pub mod baselines;
pub mod beamforming;
pub mod channel;
pub mod config;
pub mod error;
pub mod fp;
pub mod harness;
pub mod linalg;
pub mod manifold;
pub mod output;
pub mod solver;

pub use error::{Error, Result};

pub use num_complex::Complex64;

/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<Complex64>;
