//! Point clouds, normalization, resampling, file formats and the synthetic
//! multimodal completion dataset.

mod cloud;
pub mod io;
mod synthetic;

pub use cloud::{NormalizeTransform, PointCloud};
pub use synthetic::{make_dataset, DatasetEntry, SyntheticSpec, Template};
