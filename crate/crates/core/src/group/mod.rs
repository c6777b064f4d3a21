//! Groups, their elements, and their actions on latent vectors and graphs.

mod graph;
mod permutation;
mod spec;

pub use graph::{act_on_graph, DatasetHeader, Graph, GraphDataset, GraphRecord, DATASET_FORMAT};
pub use permutation::{apply_perm_vector, Permutation};
pub use spec::{
    enumerate_group, layout_dim, normalize_angle, random_element, rotate_layout, rotation_block_matrix, GroupElement,
    GroupSpec, DEFAULT_ENUMERATION_CAP, DEFAULT_ROTATION_STEPS,
};
