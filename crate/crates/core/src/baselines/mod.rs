//! Reference alignment measures: mean map entropy and NDT likelihood.

mod mme;
mod ndt;

pub use mme::mme;
pub use ndt::{
    build_ndt, cell_eigenvalues, extract_features_relndt, ndt_assignments, ndt_score, Adjacency,
    GridKey, NdtCell, NdtGrid, NdtParams, NdtScore,
};
