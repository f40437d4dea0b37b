//! Learning-side pieces: model architectures with analytic gradients,
//! dataset shards and heterogeneous partitioning, local SGD for the global
//! task, and the regularized personalized update.

pub mod data;
pub mod model;
pub mod partition;
pub mod train;

pub use data::{shard_weights, Dataset};
pub use model::{Activation, Architecture, ModelParams};
pub use partition::{dirichlet_partition, dirichlet_proportions, partition_by_proportions};
pub use train::{local_sgd, personal_grad_norm, personalized_steps, PersonalState};
