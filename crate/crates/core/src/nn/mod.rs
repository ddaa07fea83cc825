//! Plain and highway layers, softmax cross-entropy, and whole-network
//! forward/backward passes.

pub mod checkpoint;
mod layer;
mod loss;
mod network;

pub use layer::{GateMode, HighwayCache, HighwayGrads, HighwayLayer, PlainCache, PlainGrads, PlainLayer};
pub use loss::{argmax, correct_count, softmax, softmax_xent, xent_grad};
pub use network::{Body, BodyCache, BodyGrads, BodyKind, ForwardTrace, Gradients, Network};
pub(crate) use network::batch_sums;

#[cfg(test)]
mod tests;
