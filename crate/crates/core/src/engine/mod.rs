//! Dense-tensor reverse-mode autodiff engine with exactly the operator set
//! LaKNet and its training loop need.

pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod param;
pub mod tensor;

pub use conv::{Conv2dSpec, Padding};
pub use gradcheck::{check_gradients, GradCheck};
pub use graph::{Graph, Mode, Var};
pub use optim::{cosine_lr, OptimizerKind, OptimizerState};
pub use checkpoint::Checkpoint;
pub use param::{kaiming, trunc_normal, NormState, ParamId, ParamStore, Parameter};
pub use tensor::{Precision, Scalar, Tensor};

/// Version string written into checkpoint headers.
pub const ENGINE_VERSION: &str = concat!("starlk-engine/", env!("CARGO_PKG_VERSION"));
