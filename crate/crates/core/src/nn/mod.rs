//! Minimal neural-network toolkit: matrices, a reverse-mode tape, recurrent
//! and attention layers, and Adam.

mod checkpoint;
mod graph;
mod layers;
mod mat;
mod optim;
mod params;

pub use checkpoint::{Checkpoint, CheckpointKind, OptimizerState, CHECKPOINT_MAGIC};
pub use graph::{AttnShape, Gradients, Graph, Var};
pub use layers::{BiGru, BiGruOutput, Gru, LayerNorm, Linear};
pub use mat::Mat;
pub use optim::Adam;
pub use params::{Param, ParamId, ParamStore};

#[cfg(test)]
mod gradcheck;
