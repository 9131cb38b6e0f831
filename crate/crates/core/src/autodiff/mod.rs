//! Reverse-mode gradient engine, MLP conditioner networks, and the Adam
//! optimizer.
//!
//! Training is bit-deterministic given a seed: the tape walks nodes in a
//! fixed order and every reduction sums in index order.

mod adam;
mod mlp;
mod tape;
mod tensor;

pub use adam::Adam;
pub use mlp::{MlpNodes, MlpParams};
pub use tape::{Gradients, NodeId, Tape, TapeOp};
pub use tensor::{affine_backward, affine_forward, sigmoid, softplus, Tensor};
