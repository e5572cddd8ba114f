//! Classical front-end for topological cluster-state error correction.

pub mod analysis;
pub mod blossom;
pub mod error;
pub mod errorsim;
pub mod lattice;
pub mod matcher;
pub mod matchprep;
pub mod octree;
pub mod pipeline;
pub mod rng;
pub mod syndrome;
pub mod textio;

pub use error::{Error, Result};
pub use lattice::{CellCoord, LatticeDims, LatticeKind, Neighbor, QubitSite};
