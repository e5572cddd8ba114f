use crate::lattice::{CellCoord, QubitSite};
use thiserror::Error;

/// Errors raised anywhere in the decoding front-end.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid lattice dimensions {nx}x{ny}x{nt}: every axis needs at least 2 cells")]
    InvalidDims { nx: i32, ny: i32, nt: i32 },
    #[error("cell {0} lies outside the lattice")]
    CellOutOfRange(CellCoord),
    #[error("{0} is not a qubit site of this lattice")]
    InvalidSite(QubitSite),
    #[error("cannot compare a primal cell with a dual cell")]
    MixedKinds,
    #[error("invalid error model: {0}")]
    InvalidModel(String),
    #[error("parity of cell {cell} needs detector frame {frame}")]
    MissingFrame { cell: CellCoord, frame: i32 },
    #[error("face {0} of the requested cell was lost; use the supercell path")]
    LostConstituent(QubitSite),
    #[error("site {0} is not a heralded loss")]
    NotLost(QubitSite),
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("merged loss check spans the whole lattice")]
    LossPercolation,
    #[error("component is empty")]
    EmptyComponent,
    #[error("window edge {n} exceeds the smallest lattice dimension {min_dim}")]
    WindowTooLarge { n: i32, min_dim: i32 },
    #[error("window edge must be at least 1, got {0}")]
    WindowTooSmall(i32),
    #[error("component with {events} events has no perfect matching")]
    Unmatchable { events: usize },
    #[error("exhaustive matching supports at most {max} events, got {n}")]
    TooManyNodes { n: usize, max: usize },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("tail has only {bins} usable bins; at least 3 are needed for a fit")]
    InsufficientTail { bins: usize },
    #[error("region size undefined: {0}")]
    RegionSize(String),
    #[error("timing curve covers edges {min}..={max}, asked for {edge}")]
    Extrapolation { edge: f64, min: f64, max: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
