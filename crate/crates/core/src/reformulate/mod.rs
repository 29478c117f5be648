//! Inference pipeline: featurize, embed, split and pool, decode a cluster
//! order, expand it to a column permutation, and pick the best of k shots.

mod pipeline;
mod split;

pub use pipeline::{
    k_shot_prepared, k_shot_reformulate, policy_forward, pool_clusters, propose_permutation,
    propose_prepared, ClusterEmbedding, KShotResult, PermutationSample, PolicyTrace,
    PreparedInstance, ProposalMode, ReformulateConfig, ReformulationReport,
};
pub use split::{split_variables, ClusterSplit, SplitMethod};
