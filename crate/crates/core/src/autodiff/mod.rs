//! Reverse-mode automatic differentiation over static graphs.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{gradient_check, GradientReport, ParamCheck};
pub use graph::{Evaluation, Gradients, Graph, GraphBuilder, NodeId, ParamId, ParamSet};
pub use tensor::Tensor;
