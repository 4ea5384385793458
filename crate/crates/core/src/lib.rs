//! Sparse Ising models on random graphs: generation, near-forest excision,
//! Glauber dynamics, exact small-system oracles, spectral checks and
//! measure-decomposition diagnostics.

pub mod centered;
pub mod decomposition;
pub mod diagnostics;
pub mod error;
pub mod generate;
pub mod graph;
pub mod ising;
pub mod linalg;
pub mod localization;
pub mod neighborhood;
pub mod rng;
pub mod sparse;
pub mod spectral;

pub use centered::CenteredInteraction;
pub use error::{Error, Result};
pub use graph::{CommunityLabels, Edge, Graph};
pub use rng::{RngSeed, SimRng};
pub use sparse::CsrMatrix;
