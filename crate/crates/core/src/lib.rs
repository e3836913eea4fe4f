//! Dense instance separation for weakly-supervised change detection.
//!
//! Pipeline: a bi-temporal classifier produces features `F`; class activation
//! maps ([`cam`]) are thresholded into reliable changed and unchanged masks
//! ([`localize`]); changed pixels are grouped into instances by 8-connected
//! search ([`retrieve`]); a pixel-to-centroid loss ([`separate`]) pulls each
//! instance, the background, and unchanged images toward their own centroids.
//! [`model`], [`synth`] and [`harness`] provide a trainable toy network, a
//! seeded dense-instance benchmark, and the training/evaluation loop.
//!
//! The numeric modules are generic over [`Scalar`] (`f32`/`f64`); the aliases
//! below fix the scalar to `f64`, which the training harness uses.

pub mod cam;
pub mod config;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod localize;
pub mod model;
pub mod retrieve;
pub mod scalar;
pub mod separate;
pub mod synth;

#[cfg(test)]
#[path = "../tests/common/mod.rs"]
pub(crate) mod oracles;

pub use error::{Error, Result};
pub use grid::{mask_and, BinaryMask, Dim2, InstanceIdMask};
pub use localize::ThresholdConfig;
pub use model::ModelSizes;
pub use retrieve::InstanceTable;
pub use scalar::Scalar;
pub use separate::{SeparationConfig, SeparationScope};

pub type ScoreMap = grid::ScoreMap<f64>;
pub type FeatureMap = grid::FeatureMap<f64>;
pub type ClassifierWeights = cam::ClassifierWeights<f64>;
pub type ModelParams = model::ModelParams<f64>;
pub type ParamGradients = model::ParamGradients<f64>;
pub type SceneSample = model::SceneSample<f64>;
pub type LossBreakdown = separate::LossBreakdown<f64>;
pub type InstanceStats = separate::InstanceStats<f64>;

pub type ScoreMapF32 = grid::ScoreMap<f32>;
pub type FeatureMapF32 = grid::FeatureMap<f32>;
pub type ModelParamsF32 = model::ModelParams<f32>;
