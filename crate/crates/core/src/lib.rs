//! Simulation engine for photon-pair generation by four-wave mixing in
//! gas-filled inhibited-coupling hollow-core fibers.
//!
//! The crate is organised bottom-up:
//!
//! * [`gasmedia`]: Sellmeier models of the filling gas and the cladding glass,
//!   with pressure/temperature scaling.
//! * [`fibermodel`]: tube-type effective-index model, strut resonances,
//!   transmission bands and dispersion derivatives.
//! * [`phasematch`]: wavevector mismatch, multi-branch phase-matching roots and
//!   spectral density maps.
//! * [`jsa`]: joint spectral amplitude on a discretised frequency grid.
//! * [`schmidt`]: Schmidt decomposition, Schmidt number and marginals.
//! * [`tomography`]: forward model of stimulated emission tomography.
//! * [`sweeps`]: fiber-length, gas-pressure and strut-thickness studies.
//! * [`config`]: the strict run configuration consumed by the CLI.
//!
//! Public interfaces take vacuum wavelengths in nanometres; everything
//! internal runs on angular frequency in rad/s.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod fibermodel;
pub mod gasmedia;
pub mod jsa;
pub mod numerics;
pub mod phasematch;
pub mod schmidt;
pub mod sweeps;
pub mod tomography;
pub mod units;

pub use error::{Error, Result};
