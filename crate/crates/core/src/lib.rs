#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

//! Numerical toolkit for the multi-asset, multi-group asset flow model.
//!
//! Prices adjust to the ratio of cash demand to share supply; investor groups move cash
//! and shares through sentiment-driven transition rates. The crate simulates the system,
//! locates equilibria, analyses Jacobian spectra and Hopf thresholds, measures limit
//! cycles, excursions and cross-asset contagion, and calibrates parameters to price series.

pub mod model;
pub mod eigen;
pub mod integrator;
pub mod equilibrium;
pub mod params;
pub mod scenarios;
pub mod spectral;
pub mod bifurcation;
pub mod analysis;
pub mod calibration;
pub mod validation;
