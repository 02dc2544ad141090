//! FDTD simulation and analysis of light collection from emitters in
//! diamond nanopillar waveguides.
//!
//! The crate is organised bottom-up: [`geometry`] builds and rasterises
//! pillars, [`fdtd`] propagates dipole emission to frequency-domain
//! monitors, [`farfield`] projects monitor phasors to radiation patterns and
//! [`collection`] turns those into collection efficiencies. [`device`] wires
//! the chain together for one device and [`sweep`] runs cached parameter
//! studies. [`analysis`] holds the measurement-side numerics.

pub mod analysis;
pub mod cli;
pub mod collection;
pub mod device;
pub mod error;
pub mod farfield;
pub mod fdtd;
pub mod geometry;
pub mod sweep;

pub use error::{Error, Result};

/// Recorded with every stored result; bump when numerics change.
pub const SOLVER_VERSION: &str = concat!("pillarsim-", env!("CARGO_PKG_VERSION"));
