//! LP data model: sparse instances, standard form, column permutations,
//! MPS I/O and sparsity images.

mod image;
mod instance;
mod mps;
mod permutation;
mod sparse;
mod standard;

pub use image::{emit_sparsity_image, SparsityImage};
pub use instance::{normalize_infinity, LpBuilder, LpInstance, RowSense, INFINITY_THRESHOLD};
pub use mps::{format_mps, parse_mps, read_mps, write_mps};
pub use permutation::{
    apply_permutation, expand_cluster_permutation, ColumnPermutation, PermutationSource,
};
pub use sparse::SparseColMatrix;
pub use standard::{to_standard_form, ColumnOrigin, StandardFormLp};
