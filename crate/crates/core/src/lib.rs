//! Rotation-invariant point-cloud feature extraction and dual-path
//! variational point-cloud completion.
//!
//! The crate is organised bottom-up:
//!
//! - [`geom`]: point clouds, XYZ I/O, synthetic shapes, rigid transforms,
//!   farthest point sampling and exact k-nearest-neighbour search.
//! - [`ri`]: local reference axes, clockwise neighbour ordering and the
//!   eight-attribute rotation-invariant tuples ([`ri::IrifTuple`]).
//! - [`nn`]: a small reverse-mode autodiff tape with exactly the blocks the
//!   networks need, Gaussian latents, closed-form KL terms and Adam.
//! - [`encoder`]: the rotation-invariant convolution stack, edge features
//!   and the global embedding.
//! - [`dpcnet`]: the reconstruction and completion paths with shared
//!   encoder/decoder weights and the joint loss.
//! - [`enhancer`]: the attention-based coarse-to-fine refiner.
//! - [`metrics`]: Chamfer distance, F-score and the original-vs-transformed
//!   evaluation protocol.
//! - [`config`], [`checkpoint`], [`dataset`], [`train`]: run configuration,
//!   persistence and the deterministic training harness driven by the CLI.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod dpcnet;
pub mod encoder;
pub mod enhancer;
mod error;
pub mod geom;
pub mod metrics;
pub mod nn;
pub mod ri;
pub mod seed;
pub mod train;
pub mod util;

#[cfg(any(test, feature = "testing"))]
pub mod testing;

pub use error::{Error, Result};
pub use geom::{NeighborIndex, Point, PointCloud, RigidTransform, ShapeKind};
pub use nn::{GaussianLatent, ParamStore, Tape, Tensor, Var};
pub use ri::{IrifTuple, Lra, OrderedNeighborhood};
