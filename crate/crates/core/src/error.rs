use thiserror::Error;

use crate::units::Unit;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot convert {from} to {to}: incompatible dimensions")]
    IncompatibleUnits { from: Unit, to: Unit },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("vibrational level v={v} is above dissociation ({bound} bound states)")]
    UnboundLevel { v: usize, bound: usize },

    #[error("eigensolver did not converge: max residual {residual:.3e} exceeds {tolerance:.1e}")]
    EigenNotConverged { residual: f64, tolerance: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("wavefunction reached the grid edge: edge/max amplitude {ratio:.3e} at t = {t_fs:.3} fs")]
    EdgeAmplitude { ratio: f64, t_fs: f64 },

    #[error("imaginary-time relaxation did not converge in {steps} steps (last drift {drift:.3e} hartree per au)")]
    RelaxNotConverged { steps: usize, drift: f64 },

    #[error("relaxation collapsed onto deflated state {index} (overlap {overlap:.3})")]
    RelaxCollapse { index: usize, overlap: f64 },

    #[error("non-positive quadrature variance {0}")]
    NonPositiveVariance(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
