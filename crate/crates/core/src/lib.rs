//! Multi-feature fusion network producing a universal face signature.
//!
//! Each feature kind (for example Fisher vectors, CNN activations, LBP
//! histograms) has its own two-layer branch. Branch outputs for whatever kinds
//! a client can compute are summed into one signature; a shared trunk maps the
//! signature to per-attribute probabilities. The [`proto`] module moves
//! signatures between client and server.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix `f64`, which is what training and the CLI use.

pub mod data;
pub mod eval;
pub mod model;
pub mod nn;
pub mod proto;
pub mod rng;
pub mod train;

mod codec;
mod error;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Real = f64;
pub type Net = model::HybridNet<Real>;
pub type NetEncoder = model::Encoder<Real>;
pub type Layer = nn::DenseLayer<Real>;
pub type Dataset = data::Dataset<Real>;
