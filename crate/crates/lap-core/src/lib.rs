//! Core library for LAP, a lightweight attention-based pose estimation
//! network built on a stacked-hourglass backbone.
//!
//! Everything in this crate is pure computation over owned buffers: dense
//! rank-4 `f64` tensors, forward/backward passes for the layer zoo the
//! network needs (convolutions, depthwise-separable pairs, batch norm,
//! activations, pooling, linear), the CBAM attention block, the network
//! assembly itself, an analytic parameter/FLOP cost model, the Gaussian
//! heatmap codec, keypoint metrics (PCK/OKS/AP), the Adam optimizer with a
//! reduce-on-plateau schedule, a synthetic blob dataset, and a deterministic
//! epoch-level training engine. File and terminal I/O live in the companion
//! `lap-cli` crate.
//!
//! The crate is `no_std`-compatible (`alloc` required): disable default
//! features and enable `libm` for the float math fallback.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("lap-core requires either the `std` or the `libm` feature");

pub mod cbam;
pub mod cost;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod heatmap;
pub mod layers;
pub mod math;
pub mod metrics;
pub mod net;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{ReduceAxes, ReduceMode, Shape, Tensor};
