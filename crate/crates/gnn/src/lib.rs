//! Graph-attention Q-network used by the learned routing policy.
//!
//! The network scores every node of a rover's padded local subgraph:
//! a linear embedding, a multi-head graph attention layer, a single-head
//! graph attention layer and a small MLP head that maps each node embedding,
//! plus a residual copy of its input embedding, to one Q-value. Slot `k` of the output is the value of forwarding to the
//! node stored in padded row `k`; invalid rows are masked to `-inf`.
//!
//! Everything here is plain numerics: parameters, forward pass with a cache,
//! exact reverse-mode gradients and a small binary checkpoint format.

mod checkpoint;
mod error;
mod graph;
mod layer;
mod model;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC, VERSION};
pub use error::GnnError;
pub use graph::{PaddedGraph, QValues};
pub use model::{backward, forward, forward_cached, AttentionRow, ForwardCache};
pub use params::{Architecture, ModelParams, DEFAULT_DROPOUT};

/// Floating point type the network can be evaluated in.
///
/// Training and checkpoints use `f32`; gradient checks use `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::iter::Sum
    + std::fmt::Debug
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type Result<T> = std::result::Result<T, GnnError>;
