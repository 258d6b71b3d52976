//! Crate-wide error type.

use crate::lattice::Site;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("convexity error: {0}")]
    Convexity(String),

    #[error("numerical error at site ({},{}): {msg}", site.x, site.y)]
    Numerical { site: Site, msg: String },

    #[error("solver error: {0}")]
    Solver(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
