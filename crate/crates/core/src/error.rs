use std::path::PathBuf;

/// Errors raised by the beamforming library and the simulation harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("entry {index} has modulus {modulus}, expected 1")]
    NotUnitModulus { index: usize, modulus: f64 },

    #[error(
        "infeasible antenna configuration: {factors} Kronecker factors (lengths {lengths:?}) cannot null \
         {paths} interference paths while separating {users} users; the {remaining} shortest factors \
         must span at least {users} dimensions (for power-of-two arrays MN >= 2^(Gamma + ceil(log2 K)))"
    )]
    Infeasible {
        factors: usize,
        lengths: Vec<usize>,
        paths: usize,
        users: usize,
        remaining: usize,
    },

    #[error("matrix is not positive definite: pivot {pivot} has value {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("exhaustive search needs {candidates} candidates per user, above the limit of {limit}")]
    SearchTooLarge { candidates: u128, limit: u128 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
