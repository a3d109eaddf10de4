//! Differentiable iso-surface extraction.
//!
//! Explicit triangle meshes are extracted from parameterized implicit
//! fields with marching cubes, and loss gradients at mesh vertices are
//! routed back into the field parameters in closed form, so gradient-based
//! shape optimization can change surface topology freely.
//!
//! Pipeline: [`field::ParamField`] -> [`mesher::sample_grid`] ->
//! [`mesher::marching_cubes`] -> a loss from [`losses`] ->
//! [`diffiso::backward`] -> [`optim`] drivers.

pub mod bvh;
pub mod diffiso;
pub mod field;
pub mod losses;
pub mod mesher;
pub mod mlp;
pub mod optim;
pub(crate) mod util;

pub use diffiso::{backward, ift_project_oracle, BackwardConfig, ParamGrad, VertexGrad};
pub use field::{FieldConvention, FieldEval, FieldFlavor, FieldKind, Metaball, ParamField, Vec3};
pub use mesher::{
    marching_cubes, occupancy_premap, resample_band, sample_grid, GridSpec, SampledGrid, TriMesh,
};
pub use mlp::{MlpSpec, MlpWeights};
pub use optim::{AdamConfig, AdamState, RunConfig, RunLog};
