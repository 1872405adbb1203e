//! Hermite polynomial chaos: truncated multi-index sets, orthonormal basis
//! evaluation, regularized collocation projection and moment extraction.

mod bundle;
mod hermite;
mod multi_index;
mod projection;

pub use bundle::{read_bundle, write_bundle, ProjectionBundle, StoredProjection};
pub use hermite::{eval_basis, eval_basis_into, hermite_orthonormal};
pub use multi_index::{binomial, MultiIndexSet};
pub use projection::{
    build_projection, build_projection_from_points, build_projection_woodbury, DensityWeighting, PceCoefficients,
    PceConfig, PceProjection,
};
