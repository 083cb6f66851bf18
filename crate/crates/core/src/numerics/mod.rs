//! Dense arithmetic substrate: matrices, MLPs with hand-written reverse mode,
//! Adam, and a splittable counter-based random source.

mod adam;
mod matrix;
mod mlp;
mod rng;

pub use adam::{AdamConfig, AdamState, ParamBlocks};
pub use matrix::Matrix;
pub use mlp::{mlp_backward, mlp_forward, Activation, MlpParams, MlpTape};
pub use rng::RngKey;
