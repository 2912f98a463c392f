//! Dense-tensor numeric kernels with reverse-mode automatic differentiation.
//!
//! Everything the trunk, expert branches, router and task heads are built
//! from: linear layers, layer norm, multi-head self-attention, GELU,
//! softmax, cross-entropy. Forward passes record onto a [`Tape`]; calling
//! [`Tape::backward`] fills gradients for every reachable trainable
//! parameter. Frozen parameters never receive gradients.

mod kernels;
mod layers;
mod params;
mod real;
mod tape;
mod tensor;

pub use kernels::{gelu_scalar, softmax_slice};

pub use layers::{AttentionLayer, EncoderBlock, LayerNormLayer, LinearLayer, INIT_STD};
pub use params::{LrGroup, Param, ParamId, ParamKind, Params};
pub use real::Real;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

/// Epsilon used by every layer-norm in the crate.
pub const LAYER_NORM_EPS: f32 = 1e-5;
