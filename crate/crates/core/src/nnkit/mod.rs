//! Dense networks with flat parameters and hand-written backpropagation.

pub mod checkpoint;
pub mod mlp;
pub mod param;
pub mod policy;

pub use checkpoint::Checkpoint;
pub use mlp::{Activation, Head, Mlp, MlpSpec, LOG_STD_MAX, LOG_STD_MIN};
pub use param::ParamVector;
pub use policy::StochasticPolicy;
