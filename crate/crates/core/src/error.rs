//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Geometry or parameter outside its admissible range (cube outside the
    /// unit cube, `eps` outside `(0,1]`, `t` outside `(0,1/2)`, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Two grids that must match in `(d, n)` do not.
    #[error("shape error: expected d={expected_d}, n={expected_n}, got d={got_d}, n={got_n}")]
    Shape {
        expected_d: usize,
        expected_n: usize,
        got_d: usize,
        got_n: usize,
    },

    /// A cube family violates its invariants (overlap, side mismatch,
    /// cardinality cap, off-lattice cube where a lattice one is required).
    #[error("family error: {0}")]
    Family(String),

    /// An exact solver was asked to handle more candidates than it can.
    #[error(
        "capacity error: {candidates} candidates exceed the limit of {limit}; \
         use greedy mode for instances of this size"
    )]
    Capacity { candidates: usize, limit: usize },

    /// Malformed or inconsistent arguments (empty probe set, empty t grid,
    /// unrepresentable rescaled side, unknown mode, ...).
    #[error("argument error: {0}")]
    Argument(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
