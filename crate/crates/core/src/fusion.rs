//! Projective TSDF fusion of depth frames with per-voxel running averages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Bvh;
use crate::scan::{render_depth, Camera, DepthImage};
use crate::volume::{DistanceKind, GridFile, Placement, VoxelVolume, TRUNCATION};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Upper bound on the per-voxel observation count.
    pub weight_cap: f32,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { weight_cap: 128.0 }
    }
}

impl FusionConfig {
    /// Truncation in meters for a grid with the given voxel size.
    pub fn truncation(voxel_size: f64) -> f64 {
        TRUNCATION as f64 * voxel_size
    }
}

/// Signed distances plus the observation weight of every voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct TsdfGrid {
    pub tsdf: VoxelVolume,
    pub weights: Vec<f32>,
}

impl TsdfGrid {
    /// Every voxel starts unobserved: value -3, weight 0.
    pub fn new(placement: Placement) -> Self {
        Self {
            tsdf: VoxelVolume::filled(placement, DistanceKind::Tsdf, -TRUNCATION),
            weights: vec![0.0; placement.dims.count()],
        }
    }

    pub fn observed(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    pub fn weight_file(&self) -> GridFile {
        GridFile::Weights {
            placement: *self.tsdf.placement(),
            weights: self.weights.clone(),
        }
    }
}

/// Integrates one frame; returns the number of voxels updated. Voxels that
/// project outside the image, onto a missing depth, or lie more than the
/// truncation distance behind the observed surface are left untouched.
pub fn integrate_frame(grid: &mut TsdfGrid, depth: &DepthImage, cam: &Camera, cfg: &FusionConfig) -> Result<usize> {
    if grid.tsdf.kind() != DistanceKind::Tsdf {
        return Err(Error::InvalidParam("fusion needs a signed grid".into()));
    }
    if depth.width != cam.intrinsics.width || depth.height != cam.intrinsics.height {
        return Err(Error::DimMismatch(format!(
            "depth image {}x{} vs camera {}x{}",
            depth.width, depth.height, cam.intrinsics.width, cam.intrinsics.height
        )));
    }
    let placement = *grid.tsdf.placement();
    let vs = placement.voxel_size;
    let trunc = FusionConfig::truncation(vs);
    let dims = placement.dims;
    let mut updated = 0;
    for z in 0..dims.z {
        for y in 0..dims.y {
            for x in 0..dims.x {
                let Some((u, v, zc)) = cam.project(&placement.voxel_center(x, y, z)) else {
                    continue;
                };
                let d = depth.get(u, v) as f64;
                if d <= 0.0 {
                    continue;
                }
                let sdf = d - zc;
                if sdf < -trunc {
                    continue;
                }
                let sample = (sdf.clamp(-trunc, trunc) / vs) as f32;
                let i = dims.index(x, y, z);
                let w = grid.weights[i];
                let old = if w > 0.0 { grid.tsdf.data()[i] } else { 0.0 };
                grid.tsdf.set_index(i, (old * w + sample) / (w + 1.0));
                grid.weights[i] = (w + 1.0).min(cfg.weight_cap);
                updated += 1;
            }
        }
    }
    Ok(updated)
}

pub fn fuse_frames(placement: Placement, frames: &[(Camera, DepthImage)], cfg: &FusionConfig) -> Result<TsdfGrid> {
    if frames.is_empty() {
        return Err(Error::NoCameras);
    }
    let mut grid = TsdfGrid::new(placement);
    for (cam, depth) in frames {
        integrate_frame(&mut grid, depth, cam, cfg)?;
    }
    Ok(grid)
}

/// Renders each camera against the scene and fuses the frames into a grid
/// with the given placement.
pub fn fuse_trajectory(bvh: &Bvh, cameras: &[Camera], placement: Placement, cfg: &FusionConfig) -> Result<TsdfGrid> {
    if cameras.is_empty() {
        return Err(Error::NoCameras);
    }
    let frames: Vec<(Camera, DepthImage)> = cameras.iter().map(|c| (*c, render_depth(bvh, c))).collect();
    fuse_frames(placement, &frames, cfg)
}
