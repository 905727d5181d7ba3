//! Numerically exact grid simulation of a single anharmonic molecular vibration
//! coupled to a cavity mode whose frequency is swept by a Gaussian pulse, with the
//! photon-counting and quadrature statistics of the intracavity field.

pub mod cavity_model;
pub mod config;
pub mod dense_oracle;
pub mod error;
pub mod field_stats;
pub mod molecule;
pub mod propagator;
pub mod qgrid;
pub mod runner;
pub mod units;

pub use error::{Error, Result};
