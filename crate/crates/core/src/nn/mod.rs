//! Dense float64 tensors, a tape-based autodiff graph, and the transformer
//! layers built on it.

pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use config::ModelConfig;
pub use gradcheck::{grad_check, grad_check_params, GradCheckReport};
pub use graph::{Grads, Graph, Var};
pub use optim::Adam;
pub use params::{Init, ParamGrads, ParamId, ParamStore};
pub use tensor::Tensor;
