//! Crate-wide error type.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A state with non-positive density or pressure was produced.
    #[error("non-physical state{}: rho = {rho}, pressure = {pressure}", at_node(*.node))]
    InvalidState {
        rho: f64,
        pressure: f64,
        node: Option<usize>,
    },

    /// A triangle with non-positive area was produced by motion or adaptation.
    #[error("tangled mesh: triangle {triangle} has non-positive area {area}")]
    TangledMesh { triangle: usize, area: f64 },

    /// Bad argument to a numerical routine (e.g. dt <= 0).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A boundary tag without a boundary-condition entry (or vice versa).
    #[error("boundary tag {tag} has no boundary condition")]
    UnknownBoundaryTag { tag: u32 },

    /// Configuration file / CLI problem.
    #[error("configuration error: {0}")]
    Config(String),

    /// Mesh or data file could not be parsed.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// The pseudo-time iteration did not reach the requested tolerance.
    #[error("solver did not converge: residual {residual} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn at_node(node: Option<usize>) -> String {
    match node {
        Some(i) => format!(" at node {i}"),
        None => String::new(),
    }
}
