//! Conditional normalizing flow with masked-autoregressive layers and
//! monotone rational-quadratic spline transforms.

mod graph;
mod model;
pub mod spline;

pub use graph::NllGraph;
pub use model::{CnfModel, FlowLayer, LN_2PI};
pub use spline::{SplineConfig, SplineParams};
