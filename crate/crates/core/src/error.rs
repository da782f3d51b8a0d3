use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rho * n = {product} is not a positive integer <= n (rho = {rho}, n = {n})")]
    RhoNotIntegral { rho: f64, n: usize, product: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("failed to load population from {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    #[error("empty population")]
    EmptyPopulation,

    #[error("config error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("selected set has {got} members, expected {expected}")]
    Cardinality { expected: usize, got: usize },

    #[error(
        "exhaustive enumeration needs {subsets} subsets (cap {cap}); use the alternating solver"
    )]
    EnumerationCap { subsets: u128, cap: u128 },

    #[error("alternating solver did not reach a fixed point within {max_iters} iterations")]
    NotConverged { max_iters: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}
