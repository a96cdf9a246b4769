//! Training crops: lattice sampling, filtering, vertical jitter and loss weights.

use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::hierarchy::LevelPrediction;
use crate::model::VoxelGroup;
use crate::volume::{CropMode, DistanceKind, GridDims, LabelVolume, Level, SemanticClass, VoxelVolume, TRUNCATION};

/// Semantic loss weight of object classes; structural classes and empty space weigh 1.
pub const OBJECT_WEIGHT: f32 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Spacing of crop origins in meters.
    pub lattice_spacing: f64,
    /// Probability of keeping a crop without object voxels.
    pub keep_structural: f64,
    /// Largest vertical jitter in meters.
    pub jitter_max: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            lattice_spacing: 3.0,
            keep_structural: 0.1,
            jitter_max: 0.1875,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lattice_spacing > 0.0) || !(0.0..=1.0).contains(&self.keep_structural) || !(self.jitter_max >= 0.0) {
            return Err(Error::InvalidParam(format!("sampler config {self:?}")));
        }
        Ok(())
    }
}

/// Scan and ground truth of one scene at one level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelVolumes {
    pub tsdf: VoxelVolume,
    pub tdf: VoxelVolume,
    pub labels: LabelVolume,
}

impl LevelVolumes {
    pub fn new(tsdf: VoxelVolume, tdf: VoxelVolume, labels: LabelVolume) -> Result<Self> {
        if tsdf.placement() != tdf.placement() || tdf.placement() != labels.placement() {
            return Err(Error::DimMismatch("scan and ground-truth grids differ".into()));
        }
        if tsdf.kind() != DistanceKind::Tsdf || tdf.kind() != DistanceKind::Tdf {
            return Err(Error::InvalidParam("expected a TSDF scan and a TDF target".into()));
        }
        Ok(Self { tsdf, tdf, labels })
    }
}

/// One training crop. All per-voxel vectors share `dims` and x-fastest order.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub level: Level,
    pub dims: GridDims,
    /// Crop origin in the scene grid, in voxels.
    pub offset: [i64; 3],
    pub tsdf: Vec<f32>,
    /// Upsampled previous-level TDF and labels.
    pub condition: Option<(Vec<f32>, Vec<u8>)>,
    pub target_tdf: Vec<f32>,
    pub target_labels: Vec<u8>,
    pub weights: Vec<f32>,
}

impl TrainSample {
    pub fn validate(&self) -> Result<()> {
        let n = self.dims.count();
        let cond_ok = self.condition.as_ref().is_none_or(|(t, l)| t.len() == n && l.len() == n);
        if self.tsdf.len() != n || self.target_tdf.len() != n || self.target_labels.len() != n || self.weights.len() != n || !cond_ok {
            return Err(Error::DimMismatch(format!("sample components do not match {}", self.dims)));
        }
        let in_range = |v: &f32, lo: f32| v.is_finite() && (lo..=TRUNCATION).contains(v);
        let tdfs_ok = self.target_tdf.iter().all(|v| in_range(v, 0.0)) && self.condition.as_ref().is_none_or(|(t, _)| t.iter().all(|v| in_range(v, 0.0)));
        if !self.tsdf.iter().all(|v| in_range(v, -TRUNCATION)) || !tdfs_ok {
            return Err(Error::OutOfRange("sample distances outside the truncation range".into()));
        }
        if self.weights != semantic_weights(&self.target_labels) {
            return Err(Error::InvalidParam("sample weights do not follow the labels".into()));
        }
        Ok(())
    }

    /// 1 for voxels of `group`, 0 elsewhere.
    pub fn group_mask(&self, group: VoxelGroup) -> Vec<f32> {
        group.mask(self.dims).into_iter().map(|b| b as u8 as f32).collect()
    }

    /// Ground truth with only the groups before `group` revealed.
    pub fn known_before(&self, group: VoxelGroup) -> Vec<bool> {
        let dims = self.dims;
        let mut known = Vec::with_capacity(dims.count());
        for z in 0..dims.z {
            for y in 0..dims.y {
                for x in 0..dims.x {
                    known.push(VoxelGroup::of_voxel(x, y, z) < group);
                }
            }
        }
        known
    }

    pub fn has_objects(&self) -> bool {
        self.target_labels.iter().any(|&l| SemanticClass::from_id(l).is_some_and(SemanticClass::is_object))
    }
}

pub fn semantic_weights(labels: &[u8]) -> Vec<f32> {
    labels
        .iter()
        .map(|&l| if SemanticClass::from_id(l).is_some_and(SemanticClass::is_object) { OBJECT_WEIGHT } else { 1.0 })
        .collect()
}

/// Crop origins along one axis: lattice points inside the grid, or one
/// centered (padded) crop when the grid is shorter than the crop.
pub fn lattice_offsets(extent: usize, crop: usize, step: usize) -> Vec<i64> {
    if extent < crop {
        return vec![-(((crop - extent) / 2) as i64)];
    }
    (0..extent).step_by(step.max(1)).map(|o| o as i64).collect()
}

/// Lattice step in voxels for a spacing in meters.
pub fn lattice_step(spacing: f64, voxel_size: f64) -> usize {
    ((spacing / voxel_size).round() as usize).max(1)
}

/// Cuts one scene level into training crops, keeping every crop that shows
/// an object and a random `keep_structural` share of the rest.
pub fn sample_subvolumes(scene: &LevelVolumes, level: Level, condition: Option<&LevelPrediction>, cfg: &SamplerConfig, rng: &mut impl Rng) -> Result<Vec<TrainSample>> {
    select_crops(scene, level, cfg, rng)?
        .into_iter()
        .map(|offset| cut_sample(scene, level, offset, condition))
        .collect()
}

/// Crop origins kept by the lattice-and-filter rule. The choice depends only
/// on the ground-truth labels, so it can be fixed before any conditioning
/// prediction exists.
pub fn select_crops(scene: &LevelVolumes, level: Level, cfg: &SamplerConfig, rng: &mut impl Rng) -> Result<Vec<[i64; 3]>> {
    cfg.validate()?;
    let spec = level.spec();
    let dims = scene.tsdf.dims();
    if (scene.tsdf.voxel_size() - spec.voxel_size).abs() > 1e-9 {
        return Err(Error::InvalidParam(format!("scene voxels of {} m at {level}", scene.tsdf.voxel_size())));
    }
    let crop = spec.train_crop;
    let step = lattice_step(cfg.lattice_spacing, spec.voxel_size);
    let (xs, ys, zs) = (
        lattice_offsets(dims.x, crop.x, step),
        lattice_offsets(dims.y, crop.y, step),
        lattice_offsets(dims.z, crop.z, step),
    );
    let mut out = Vec::new();
    for &oz in &zs {
        for &oy in &ys {
            for &ox in &xs {
                let offset = [ox, oy, oz];
                let labels = scene.labels.crop(offset, crop, CropMode::Pad)?;
                let has_objects = labels.labels().iter().any(|&l| SemanticClass::from_id(l).is_some_and(SemanticClass::is_object));
                // draw for every crop so the stream does not depend on content
                let lucky = rng.random_bool(cfg.keep_structural);
                if has_objects || lucky {
                    out.push(offset);
                }
            }
        }
    }
    Ok(out)
}

/// One training crop at `offset`, padded where it leaves the grid.
pub fn cut_sample(scene: &LevelVolumes, level: Level, offset: [i64; 3], condition: Option<&LevelPrediction>) -> Result<TrainSample> {
    let dims = scene.tsdf.dims();
    if let Some(c) = condition {
        if c.tdf.dims() != dims || c.labels.dims() != dims {
            return Err(Error::DimMismatch("conditioning grid differs from the scene grid".into()));
        }
    }
    let crop = level.spec().train_crop;
    let target_labels = scene.labels.crop(offset, crop, CropMode::Pad)?.labels().to_vec();
    Ok(TrainSample {
        level,
        dims: crop,
        offset,
        tsdf: scene.tsdf.crop(offset, crop, CropMode::Pad)?.into_data(),
        condition: condition
            .map(|c| -> Result<_> {
                Ok((
                    c.tdf.crop(offset, crop, CropMode::Pad)?.into_data(),
                    c.labels.crop(offset, crop, CropMode::Pad)?.labels().to_vec(),
                ))
            })
            .transpose()?,
        target_tdf: scene.tdf.crop(offset, crop, CropMode::Pad)?.into_data(),
        weights: semantic_weights(&target_labels),
        target_labels,
    })
}

/// Whole-voxel rows for a jitter of `meters`.
pub fn jitter_rows(meters: f64, voxel_size: f64) -> usize {
    (meters / voxel_size).round() as usize
}

/// Moves every component up by a random whole number of rows; the exposed
/// bottom rows read as unobserved, truncated and empty.
pub fn height_jitter(sample: &TrainSample, cfg: &SamplerConfig, rng: &mut impl Rng) -> TrainSample {
    let meters = if cfg.jitter_max > 0.0 { rng.random_range(0.0..=cfg.jitter_max) } else { 0.0 };
    shift_rows(sample, jitter_rows(meters, sample.level.spec().voxel_size))
}

pub fn shift_rows(sample: &TrainSample, rows: usize) -> TrainSample {
    if rows == 0 {
        return sample.clone();
    }
    let d = sample.dims;
    fn shift<T: Copy>(v: &[T], d: GridDims, rows: usize, pad: T) -> Vec<T> {
        let mut out = vec![pad; v.len()];
        for z in 0..d.z {
            for y in rows..d.y {
                let dst = d.index(0, y, z);
                let src = d.index(0, y - rows, z);
                out[dst..dst + d.x].copy_from_slice(&v[src..src + d.x]);
            }
        }
        out
    }
    let empty = SemanticClass::Empty.id();
    let target_labels = shift(&sample.target_labels, d, rows, empty);
    TrainSample {
        level: sample.level,
        dims: d,
        offset: [sample.offset[0], sample.offset[1] - rows as i64, sample.offset[2]],
        tsdf: shift(&sample.tsdf, d, rows, DistanceKind::Tsdf.pad_value()),
        condition: sample
            .condition
            .as_ref()
            .map(|(t, l)| (shift(t, d, rows, TRUNCATION), shift(l, d, rows, empty))),
        target_tdf: shift(&sample.target_tdf, d, rows, TRUNCATION),
        weights: semantic_weights(&target_labels),
        target_labels,
    }
}

/// Where a sample came from, enough to re-cut it from the scene grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub scene: String,
    pub level: Level,
    pub offset: [i64; 3],
    pub tsdf: PathBuf,
    pub tdf: PathBuf,
    pub labels: PathBuf,
    /// Previous-level prediction used as conditioning, if any.
    pub condition: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub records: Vec<SampleRecord>,
}

impl CorpusManifest {
    pub fn count_at(&self, level: Level) -> usize {
        self.records.iter().filter(|r| r.level == level).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Placement, SceneGrid};
    use crate::Vec3;
    use proptest::prelude::{prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scene(level: Level, dims: GridDims, object_at: Option<[usize; 3]>) -> LevelVolumes {
        let p = Placement::new(dims, level.spec().voxel_size, Vec3::zeros());
        let n = dims.count();
        let tsdf = VoxelVolume::from_data(p, DistanceKind::Tsdf, (0..n).map(|i| (i % 7) as f32 - 3.0).collect()).unwrap();
        let tdf = VoxelVolume::from_data(p, DistanceKind::Tdf, (0..n).map(|i| (i % 4) as f32 * 0.75).collect()).unwrap();
        let mut labels = LabelVolume::filled(p, SemanticClass::Floor);
        if let Some([x, y, z]) = object_at {
            labels.set(x, y, z, SemanticClass::Chair);
        }
        LevelVolumes::new(tsdf, tdf, labels).unwrap()
    }

    #[test]
    fn coarse_lattice_on_a_six_meter_room() {
        // 6 m x 3 m x 6 m at 0.188 m is 32 x 16 x 32 voxels
        let grid = SceneGrid::covering(Vec3::zeros(), Vec3::new(6.0, 3.0, 6.0), 0.0).unwrap();
        let d = grid.placement(Level::Coarse).dims;
        assert_eq!(d.as_array(), [32, 16, 32]);
        let step = lattice_step(3.0, 0.188);
        let n = lattice_offsets(d.x, 32, step).len() * lattice_offsets(d.y, 16, step).len() * lattice_offsets(d.z, 32, step).len();
        assert_eq!(n, 4);
        assert_eq!(lattice_offsets(d.x, 32, step), vec![0, 16]);
        assert_eq!(lattice_offsets(10, 32, step), vec![-11]);
    }

    #[test]
    fn object_crops_are_always_kept() {
        let s = scene(Level::Coarse, GridDims::new(32, 16, 32).unwrap(), Some([5, 5, 5]));
        let cfg = SamplerConfig {
            keep_structural: 0.0,
            ..Default::default()
        };
        let samples = sample_subvolumes(&s, Level::Coarse, None, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].offset, [0, 0, 0]);
        assert_eq!(samples[0].weights[GridDims::raw(32, 16, 32).index(5, 5, 5)], 10.0);
        samples[0].validate().unwrap();
    }

    #[test]
    fn structural_keep_rate() {
        // one crop per call, no objects: the keep rate is the configured probability
        let s = scene(Level::Coarse, GridDims::new(8, 8, 8).unwrap(), None);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trials = 10_000;
        let kept: usize = (0..trials)
            .map(|_| sample_subvolumes(&s, Level::Coarse, None, &SamplerConfig::default(), &mut rng).unwrap().len())
            .sum();
        let rate = kept as f64 / trials as f64;
        assert!((rate - 0.1).abs() <= 0.01, "rate {rate}");
    }

    #[test]
    fn small_scene_gives_one_padded_crop() {
        let s = scene(Level::Mid, GridDims::new(10, 12, 14).unwrap(), Some([0, 0, 0]));
        let out = sample_subvolumes(&s, Level::Mid, None, &SamplerConfig::default(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].offset, [-11, -10, -9]);
        // padding reads as unobserved
        assert_eq!(out[0].tsdf[0], -3.0);
        assert_eq!(out[0].target_tdf[0], 3.0);
    }

    #[test]
    fn weights() {
        assert_eq!(semantic_weights(&[SemanticClass::Floor.id(); 4]), vec![1.0; 4]);
        let l = [SemanticClass::Floor.id(), SemanticClass::Chair.id(), SemanticClass::Empty.id(), SemanticClass::Wall.id()];
        assert_eq!(semantic_weights(&l), vec![1.0, 10.0, 1.0, 1.0]);
    }

    #[test]
    fn coarse_jitter_is_zero_or_one_row() {
        for k in 0..=1000 {
            let m = 0.1875 * k as f64 / 1000.0;
            assert!(jitter_rows(m, 0.188) <= 1);
        }
        assert_eq!(jitter_rows(0.1875, 0.188), 1);
        assert_eq!(jitter_rows(0.0, 0.188), 0);
        assert_eq!(jitter_rows(0.1875, 0.047), 4);
    }

    #[test]
    fn zero_jitter_is_identity() {
        let s = scene(Level::Coarse, GridDims::new(32, 16, 32).unwrap(), Some([1, 1, 1]));
        let out = sample_subvolumes(&s, Level::Coarse, None, &SamplerConfig::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let cfg = SamplerConfig {
            jitter_max: 0.0,
            ..Default::default()
        };
        assert_eq!(height_jitter(&out[0], &cfg, &mut ChaCha8Rng::seed_from_u64(4)), out[0]);
    }

    proptest! {
        #[test]
        fn jitter_shifts_every_component_alike(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = GridDims::new(4, 16, 3).unwrap();
            let n = d.count();
            let tdf: Vec<f32> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..12)).collect();
            let sample = TrainSample {
                level: Level::Fine,
                dims: d,
                offset: [0, 0, 0],
                // every component carries the same voxel code so shifts can be compared
                tsdf: tdf.iter().map(|v| v - 1.5).collect(),
                condition: Some((tdf.clone(), labels.clone())),
                target_tdf: tdf.clone(),
                weights: semantic_weights(&labels),
                target_labels: labels,
            };
            let j = height_jitter(&sample, &SamplerConfig::default(), &mut rng);
            j.validate().unwrap();
            let rows = (0 - j.offset[1]) as usize;
            prop_assert_eq!(j.offset[1], -(rows as i64));
            for z in 0..d.z {
                for y in 0..d.y {
                    for x in 0..d.x {
                        let i = d.index(x, y, z);
                        if y < rows {
                            prop_assert_eq!(j.tsdf[i], -3.0);
                            prop_assert_eq!(j.target_tdf[i], 3.0);
                            prop_assert_eq!(j.target_labels[i], SemanticClass::Empty.id());
                        } else {
                            let s = d.index(x, y - rows, z);
                            prop_assert_eq!(j.tsdf[i], sample.tsdf[s]);
                            prop_assert_eq!(j.target_tdf[i], sample.target_tdf[s]);
                            prop_assert_eq!(j.condition.as_ref().unwrap().0[i], sample.target_tdf[s]);
                            prop_assert_eq!(j.condition.as_ref().unwrap().1[i], sample.target_labels[s]);
                            prop_assert_eq!(j.target_labels[i], sample.target_labels[s]);
                        }
                    }
                }
            }
        }
    }
}
