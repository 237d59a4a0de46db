//! Small differentiable function approximators with analytic gradients.

pub mod checkpoint;
mod embedding;
mod mlp;
mod optim;

pub use embedding::TimeEmbedding;
pub use mlp::{from_rows, hcat, to_rows, Activation, Mlp, Trace};
pub use optim::{clip_global_norm, clip_global_norm_in_place, l2_norm, AdamState, GradClipConfig};
