//! Reverse-mode automatic differentiation and the Adam optimizer.

mod adam;
mod gradcheck;
mod graph;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{gradcheck, relative_error, GradcheckReport, ParamCheck, DEFAULT_STEP};
pub use graph::{sigmoid, Binary, Gradients, Graph, NodeId, Unary};
