//! Dense tensors, the autodiff graph, and shared neural primitives.

mod dense;
pub mod gradcheck;
mod graph;
pub mod nn;
mod params;

pub use dense::{Tensor, MAX_RANK};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{sigmoid, Axis, Graph, Mask, Mode, NodeId, LAYER_NORM_EPS, LOG_CLAMP, MASK_VALUE};
pub use params::{Grads, ParamId, ParamSet};
