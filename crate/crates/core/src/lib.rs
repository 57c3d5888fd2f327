//! Patch-routed crowd counting.
//!
//! An image is cut into 224x224 patches, each patch is classified into one of
//! four crowd-density classes, and the per-class tallies decide whether the
//! image is counted on the plain grid, on zoomed-in quarters of its crowd
//! patches, or on a coarser zoomed-out grid. The deep networks that classify
//! and count patches are abstracted behind [`backends::Classifier`] and
//! [`backends::Regressor`]; oracle and replay implementations are provided.

pub mod backends;
pub mod error;
pub mod evalmetrics;
pub mod labeler;
pub mod manifest;
pub mod pipeline;
pub mod raster;
pub mod rfdb;
pub mod rse;
pub mod tiler;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    pcc_to_features, CrowdClass, FeatureVector, PatchClassCounts, PatchRegion, Point, RouteLabel,
    Scale, ScenePack,
};
