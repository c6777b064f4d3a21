//! Permutation-equivariant layers on node tensors (vectors of node
//! features and matrices of edge features), with exact gradients.

pub mod basis;
pub mod gradcheck;
pub mod layer;
pub mod ops;
pub mod partition;
pub mod tensor;

pub use basis::{basis_apply, basis_table, BasisTable};
pub use layer::{ChannelMix, EquivariantLayer, HybridLayer, LayerGrad};
pub use partition::{bell, enumerate_partitions, Partition};
pub use tensor::{NodeTensor, MAX_NODES};
