//! Numerical toolkit for the two-dimensional radiative transfer equation with
//! partial boundary data.
//!
//! The source domain `Omega` and the measurement domain `Omega_1` are
//! concentric disks of radii `R < R1`. Sources are rasters on the square
//! circumscribing `Omega_1`; intensities are rasters times a uniform grid of
//! directions; boundary data are sampled on `n_bdry` boundary angles times
//! the same directions.

pub mod coefficients;
pub mod error;
pub mod geometry;
pub mod io;
pub mod phantom;
pub mod raster;
pub mod spectral;
pub mod tomography;
pub mod transport;

pub use error::{Error, Result};
