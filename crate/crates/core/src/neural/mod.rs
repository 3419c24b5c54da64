pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod policy;

pub use adam::{Adam, StepDecay};
pub use checkpoint::Checkpoint;
pub use mlp::{sync_target, Mlp, MlpCache, MlpShape, OutputActivation};
pub use policy::{ConstantPolicy, GaussianPolicy, Policy, TabularSoftmaxPolicy};
