//! Minimal reverse-mode autodiff for the completion network.
//!
//! A [`Tape`] records coarse-grained ops (affine maps, cyclic 1D
//! convolution, grouped max/softmax, Chamfer distance, KL terms, ...) over
//! row-major 2D [`Tensor`]s. Parameters live in a [`ParamStore`] and are
//! pulled onto a tape by name; pulling the same name twice yields the same
//! leaf, so every consumer contributes to one gradient.

mod adam;
mod gemm;
mod latent;
mod layers;
pub(crate) mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, lr_schedule, AdamState, LrSchedule};
pub use latent::{
    kl_diag, kl_to_standard, sample_latent, standard_normal, GaussianLatent, LatentVar,
    SampleMode,
};
pub use layers::{Linear, Mlp};
pub use params::ParamStore;
pub use tape::{softmax_over_scales, Gradients, Tape, Var};
pub use tensor::Tensor;

/// Slope of the leaky ReLU used throughout the networks.
pub const LEAKY_SLOPE: f64 = 0.2;
