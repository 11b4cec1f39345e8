//! Small differentiable stand-ins for the selector and the policy.

mod optim;
mod param;
pub mod policy;
mod selector;

pub use optim::{Optimizer, OptimizerSpec};
pub use param::ParamVector;
pub use policy::{PolicyModel, Vocabulary};
pub use selector::{SelectorArch, SelectorModel};

