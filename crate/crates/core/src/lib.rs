//! Simulation engine for all-analog broadband AC-signal detection.
//!
//! A register of dimension `d` carries a randomized SSH control Hamiltonian
//! whose interband gaps tile the search band. The single-register dynamics
//! under a drive `B cos(omega t) Z` are computed with a three-harmonic
//! Floquet truncation, read out through an `m`-register GHZ probe, and fed
//! into a layer of metrological witnesses (Bures angles, integrated-QFI
//! ceilings, flatness certificates and a two-time slope test). The
//! [`harness`] module sweeps stopping-time experiments and fits the scaling
//! of the stopping time against `sqrt(|delta_omega|) / (m B_min)^{3/2}`.
//!
//! The numerical kernels are generic over [`Real`]; the aliases at the crate
//! root fix them to `f64`, which is what the harness and CLI use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod floquet;
pub mod ghz;
pub mod harness;
pub mod linalg;
pub mod persist;
pub mod reference;
pub mod scalar;
pub mod seed;
pub mod witness;

pub use error::{Error, Result};
pub use scalar::Real;

pub type BandSpec = control::BandSpec<f64>;
pub type SshParams = control::SshParams<f64>;
pub type ControlInstance = control::ControlInstance<f64>;
pub type GapSpectrum = control::GapSpectrum<f64>;
pub type CoverageReport = control::CoverageReport<f64>;
pub type DriveParams = floquet::DriveParams<f64>;
pub type FloquetSolution = floquet::FloquetSolution<f64>;
pub type PropagatorSample = floquet::PropagatorSample<f64>;
pub type GhzReadout = ghz::GhzReadout<f64>;
pub type DetectionTrace = ghz::DetectionTrace<f64>;
pub type WitnessPoint = witness::WitnessPoint<f64>;
pub type FlatnessReport = witness::FlatnessReport<f64>;
pub type CMatrix = linalg::CMatrix<f64>;

/// Crate version recorded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
