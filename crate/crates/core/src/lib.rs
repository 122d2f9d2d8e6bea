//! Multimodal point-cloud completion with conditional implicit maximum
//! likelihood estimation.
//!
//! An autoencoder trained with Earth Mover's Distance maps clouds to latent
//! codes. A generator maps the code of a partial shape plus Gaussian noise to
//! codes of complete shapes and is trained so that every ground-truth
//! completion has a nearby sample, which keeps all modes covered.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

pub mod error;
pub mod eval;
pub mod geometry;
pub mod imle;
pub mod metrics;
pub mod nn;
pub mod rng;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type PointCloud64 = geometry::PointCloud<f64>;
pub type PointCloud32 = geometry::PointCloud<f32>;
pub type DatasetEntry64 = geometry::DatasetEntry<f64>;
pub type Autoencoder64 = nn::Autoencoder<f64>;
pub type Autoencoder32 = nn::Autoencoder<f32>;
pub type Generator64 = nn::Generator<f64>;
pub type Generator32 = nn::Generator<f32>;
pub type ParamStore64 = nn::ParamStore<f64>;
pub type LatentCode64 = nn::LatentCode<f64>;
