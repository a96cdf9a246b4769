//! Hierarchical autoregressive completion of partially scanned 3D scenes.
//!
//! The crate covers the whole pipeline: procedural scenes, virtual depth
//! scanning, volumetric fusion, ground-truth distance fields, training-crop
//! sampling, a small 3D convolution kernel with exact gradients, the
//! coarse-to-fine voxel-group model, and the evaluation metrics.

// Validation writes `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod ground_truth;
pub mod mesh;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod sampler;
pub mod scan;
pub mod scene;
pub mod volume;

pub use error::{Error, Result};
pub use geometry::{Aabb, Bvh, Triangle, Vec3};
pub use volume::{
    CropMode, DistanceKind, GridDims, LabelVolume, Level, LevelSpec, Placement, SceneGrid, SemanticClass, VoxelVolume,
};
