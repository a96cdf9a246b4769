//! Coarse-to-fine, group-by-group inference and the model container.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::groups::{partition_groups, VoxelGroup, GROUP_COUNT};
use super::head::{decode_geometry, decode_labels, HeadMode};
use super::network::{GroupNetwork, NetInputs};
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{Shape5, Tensor5};
use crate::volume::{DistanceKind, GridDims, LabelVolume, Level, Placement, SemanticClass, VoxelVolume, NUM_CLASSES, TRUNCATION};

/// Which outputs the model is trained to produce.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Completion and semantics together.
    #[default]
    Joint,
    /// Semantics only; distance inputs fed between groups and levels are held at truncation.
    SemanticOnly,
}

impl Task {
    pub fn predicts_geometry(self) -> bool {
        self == Task::Joint
    }
}

fn shape_of(dims: GridDims, channels: usize) -> Shape5 {
    Shape5::new(1, channels, dims.z, dims.y, dims.x)
}

/// Scan TSDF scaled into `[-1, 1]`.
pub fn encode_tsdf(tsdf: &[f32], dims: GridDims) -> Result<Tensor5<f32>> {
    Tensor5::from_vec(shape_of(dims, 1), tsdf.iter().map(|v| v / TRUNCATION).collect())
}

/// TDF / 3, one-hot labels, and optionally a known mask. Unknown voxels read
/// as truncated with no class. Without geometry the distance channel is held at 1.
pub fn encode_condition(tdf: &[f32], labels: &[u8], known: Option<&[bool]>, dims: GridDims, geometry: bool) -> Result<Tensor5<f32>> {
    let n = dims.count();
    if tdf.len() != n || labels.len() != n || known.is_some_and(|k| k.len() != n) {
        return Err(Error::DimMismatch(format!("conditioning volumes do not match {dims}")));
    }
    let channels = 1 + NUM_CLASSES + known.is_some() as usize;
    let mut data = vec![0.0f32; channels * n];
    for i in 0..n {
        let k = known.is_none_or(|m| m[i]);
        data[i] = if geometry && k { tdf[i].clamp(0.0, TRUNCATION) / TRUNCATION } else { 1.0 };
        if k {
            let c = labels[i] as usize;
            if c >= NUM_CLASSES {
                return Err(Error::OutOfRange(format!("label {c}")));
            }
            data[(1 + c) * n + i] = 1.0;
            if known.is_some() {
                data[(1 + NUM_CLASSES) * n + i] = 1.0;
            }
        }
    }
    Tensor5::from_vec(shape_of(dims, channels), data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub level: Level,
    pub group: u8,
    pub dims: GridDims,
    pub seconds: f64,
}

/// Every forward pass of an inference run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PassLedger {
    pub passes: Vec<PassRecord>,
}

impl PassLedger {
    pub fn count(&self) -> usize {
        self.passes.len()
    }

    pub fn count_at(&self, level: Level) -> usize {
        self.passes.iter().filter(|p| p.level == level).count()
    }

    pub fn seconds_at(&self, level: Level) -> f64 {
        self.passes.iter().filter(|p| p.level == level).map(|p| p.seconds).sum()
    }

    pub fn total_seconds(&self) -> f64 {
        self.passes.iter().map(|p| p.seconds).sum()
    }
}

/// The eight group networks of one level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelModel {
    pub level: Level,
    pub networks: Vec<GroupNetwork<f32>>,
}

impl LevelModel {
    pub fn conditioned(&self) -> bool {
        self.networks[0].conditioned()
    }

    fn validate(&self, head: HeadMode) -> Result<()> {
        if self.networks.len() != GROUP_COUNT {
            return Err(Error::InvalidParam(format!("{} has {} networks, expected {GROUP_COUNT}", self.level, self.networks.len())));
        }
        let first = &self.networks[0];
        for n in &self.networks {
            if n.head() != head || n.inputs() != first.inputs() || n.widths() != first.widths() {
                return Err(Error::InvalidParam(format!("networks of {} differ in architecture or head", self.level)));
            }
        }
        Ok(())
    }
}

/// Callback run after each group pass with the running TDF and labels.
pub type GroupObserver<'a> = dyn FnMut(VoxelGroup, &mut [f32], &mut [u8]) + 'a;

/// Predicted TDF and labels at one level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelPrediction {
    pub tdf: VoxelVolume,
    pub labels: LabelVolume,
}

impl LevelPrediction {
    /// Twice the resolution, ready to condition the next level.
    pub fn upsampled(&self) -> Result<Self> {
        Ok(Self {
            tdf: self.tdf.upsample(2)?,
            labels: self.labels.upsample(2)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct HierarchyMeta {
    head: HeadMode,
    task: Task,
    levels: usize,
    first_level: Level,
}

/// Trained networks for consecutive levels, coarsest first.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelHierarchy {
    pub head: HeadMode,
    pub task: Task,
    pub levels: Vec<LevelModel>,
}

pub fn checkpoint_path(dir: &Path, level: Level, group: VoxelGroup) -> PathBuf {
    dir.join(format!("{level}")).join(format!("{group}.ckpt"))
}

impl ModelHierarchy {
    pub fn new(head: HeadMode, task: Task) -> Self {
        Self {
            head,
            task,
            levels: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.head.validate()?;
        for (i, l) in self.levels.iter().enumerate() {
            l.validate(self.head)?;
            if i > 0 && Some(l.level) != self.levels[i - 1].level.finer() {
                return Err(Error::LevelOrder {
                    level: l.level.index(),
                    needed: self.levels[i - 1].level.index() + 1,
                });
            }
            if l.conditioned() != (i > 0) {
                return Err(Error::InvalidParam(format!("{} conditioning does not match its position", l.level)));
            }
        }
        Ok(())
    }

    pub fn last_level(&self) -> Option<Level> {
        self.levels.last().map(|l| l.level)
    }

    /// Appends a level, which must directly follow the current last one.
    pub fn push_level(&mut self, model: LevelModel) -> Result<()> {
        if let Some(last) = self.last_level() {
            if Some(model.level) != last.finer() {
                return Err(Error::LevelOrder {
                    level: model.level.index(),
                    needed: last.index() + 1,
                });
            }
        }
        self.levels.push(model);
        self.validate().inspect_err(|_| {
            self.levels.pop();
        })
    }

    /// Writes `level{i}/group{j}.ckpt` files plus `hierarchy.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        for l in &self.levels {
            for (g, n) in VoxelGroup::ALL.iter().zip(&l.networks) {
                n.to_checkpoint()?.write(&checkpoint_path(dir, l.level, *g))?;
            }
        }
        let meta = HierarchyMeta {
            head: self.head,
            task: self.task,
            levels: self.levels.len(),
            first_level: self.levels.first().map_or(Level::Coarse, |l| l.level),
        };
        std::fs::write(dir.join("hierarchy.json"), serde_json::to_vec_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("hierarchy.json");
        let meta: HierarchyMeta = serde_json::from_slice(&std::fs::read(&meta_path).map_err(|_| Error::MissingArtifact {
            path: meta_path.clone(),
            producer: "train",
        })?)?;
        let mut h = Self::new(meta.head, meta.task);
        for i in 0..meta.levels {
            let level = Level::from_index(meta.first_level.index() + i).ok_or_else(|| Error::format("hierarchy", "too many levels"))?;
            let networks = VoxelGroup::ALL
                .iter()
                .map(|&g| {
                    let p = checkpoint_path(dir, level, g);
                    if !p.exists() {
                        return Err(Error::MissingArtifact { path: p, producer: "train" });
                    }
                    GroupNetwork::from_checkpoint(&Checkpoint::read(&p)?)
                })
                .collect::<Result<Vec<_>>>()?;
            h.levels.push(LevelModel { level, networks });
        }
        h.validate()?;
        Ok(h)
    }

    /// Runs every level in order. `tsdfs[i]` is the partial scan at
    /// `levels[i]`; each must be exactly twice the previous one's grid.
    pub fn infer_scene(&self, tsdfs: &[VoxelVolume], ledger: &mut PassLedger) -> Result<Vec<LevelPrediction>> {
        self.validate()?;
        if self.levels.is_empty() {
            return Err(Error::InvalidParam("the hierarchy has no trained levels".into()));
        }
        if tsdfs.len() != self.levels.len() {
            return Err(Error::DimMismatch(format!("{} scan volumes for {} levels", tsdfs.len(), self.levels.len())));
        }
        check_level_bounds(tsdfs)?;
        let mut out: Vec<LevelPrediction> = Vec::with_capacity(self.levels.len());
        for (model, tsdf) in self.levels.iter().zip(tsdfs) {
            let cond = out.last().map(LevelPrediction::upsampled).transpose()?;
            out.push(self.predict_level(model, tsdf, cond.as_ref(), ledger, &mut |_, _, _| {})?);
        }
        Ok(out)
    }

    /// Eight sequential group passes over one level. `observe` sees the
    /// running TDF and labels after each group is written and may alter them.
    pub fn predict_level(
        &self,
        model: &LevelModel,
        tsdf: &VoxelVolume,
        condition: Option<&LevelPrediction>,
        ledger: &mut PassLedger,
        observe: &mut GroupObserver<'_>,
    ) -> Result<LevelPrediction> {
        let dims = tsdf.dims();
        let geometry = self.task.predicts_geometry();
        let previous_level = match (model.conditioned(), condition) {
            (true, Some(c)) => {
                if c.tdf.dims() != dims || c.labels.dims() != dims {
                    return Err(Error::DimMismatch(format!("conditioning grid {} vs scan grid {dims}", c.tdf.dims())));
                }
                Some(encode_condition(c.tdf.data(), c.labels.labels(), None, dims, geometry)?)
            }
            (true, None) => return Err(Error::MissingInput("previous-level prediction")),
            (false, Some(_)) => return Err(Error::InvalidParam(format!("{} takes no previous-level input", model.level))),
            (false, None) => None,
        };
        let tsdf_in = encode_tsdf(tsdf.data(), dims)?;
        let n = dims.count();
        let mut tdf = vec![TRUNCATION; n];
        let mut labels = vec![SemanticClass::Empty.id(); n];
        let mut known = vec![false; n];
        let groups = partition_groups(dims);
        for (g, net) in VoxelGroup::ALL.iter().zip(&model.networks) {
            let start = Instant::now();
            let inputs = NetInputs {
                tsdf: tsdf_in.clone(),
                previous_level: previous_level.clone(),
                previous_group: encode_condition(&tdf, &labels, Some(&known), dims, geometry)?,
            };
            let y = net.forward(&inputs)?;
            let d = decode_geometry(self.head, &y.geometry);
            let l = decode_labels(&y.semantics);
            for &i in &groups[g.index()] {
                tdf[i] = if geometry { d[i] } else { TRUNCATION };
                labels[i] = l[i];
                known[i] = true;
            }
            ledger.passes.push(PassRecord {
                level: model.level,
                group: g.id(),
                dims,
                seconds: start.elapsed().as_secs_f64(),
            });
            observe(*g, &mut tdf, &mut labels);
        }
        let placement: Placement = *tsdf.placement();
        Ok(LevelPrediction {
            tdf: VoxelVolume::from_data_clamped(placement, DistanceKind::Tdf, tdf)?,
            labels: LabelVolume::from_labels(placement, labels)?,
        })
    }
}

/// Consecutive scan grids must share an origin and double in every dimension.
pub fn check_level_bounds(tsdfs: &[VoxelVolume]) -> Result<()> {
    for w in tsdfs.windows(2) {
        let (a, b) = (w[0].placement(), w[1].placement());
        let same_origin = (a.origin - b.origin).norm() < 1e-6;
        if b.dims != a.dims.scaled(2) || !same_origin || (a.voxel_size / b.voxel_size - 2.0).abs() > 1e-6 {
            return Err(Error::DimMismatch(format!(
                "level bound mismatch: {} at {} m then {} at {} m",
                a.dims, a.voxel_size, b.dims, b.voxel_size
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::network::{InputKind, Widths};
    use crate::volume::SceneGrid;
    use crate::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_hierarchy(levels: &[Level], head: HeadMode, task: Task, seed: u64) -> ModelHierarchy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = ModelHierarchy::new(head, task);
        for (i, &level) in levels.iter().enumerate() {
            let networks = (0..GROUP_COUNT)
                .map(|_| GroupNetwork::new(InputKind::for_level(i > 0), Widths { branch: 2, trunk: 2 }, head, &mut rng).unwrap())
                .collect();
            h.push_level(LevelModel { level, networks }).unwrap();
        }
        h
    }

    fn scans(grid: &SceneGrid, rng: &mut ChaCha8Rng) -> Vec<VoxelVolume> {
        Level::ALL
            .iter()
            .map(|&l| {
                let p = grid.placement(l);
                let data = (0..p.dims.count()).map(|_| rng.random_range(-3.0..3.0)).collect();
                VoxelVolume::from_data(p, DistanceKind::Tsdf, data).unwrap()
            })
            .collect()
    }

    #[test]
    fn condition_encoding() {
        let d = GridDims::new(2, 1, 1).unwrap();
        let t = encode_condition(&[1.5, 0.3], &[2, 5], Some(&[true, false]), d, true).unwrap();
        assert_eq!(t.shape().c, 14);
        assert_eq!(t.channel(0, 0), &[0.5, 1.0]);
        assert_eq!(t.channel(0, 3), &[1.0, 0.0]);
        assert_eq!(t.channel(0, 6), &[0.0, 0.0]);
        assert_eq!(t.channel(0, 13), &[1.0, 0.0]);
        let s = encode_condition(&[1.5, 0.3], &[2, 5], None, d, false).unwrap();
        assert_eq!(s.shape().c, 13);
        assert_eq!(s.channel(0, 0), &[1.0, 1.0]);
        assert_eq!(s.channel(0, 6), &[0.0, 1.0]);
    }

    #[test]
    fn full_hierarchy_takes_24_passes_at_any_extent() {
        let h = random_hierarchy(&Level::ALL, HeadMode::Deterministic, Task::Joint, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for coarse in [[2usize, 2, 2], [4, 2, 3]] {
            let grid = SceneGrid {
                origin: Vec3::zeros(),
                coarse_dims: GridDims::new(coarse[0], coarse[1], coarse[2]).unwrap(),
            };
            let mut ledger = PassLedger::default();
            let out = h.infer_scene(&scans(&grid, &mut rng), &mut ledger).unwrap();
            assert_eq!(ledger.count(), 24);
            assert!(Level::ALL.iter().all(|&l| ledger.count_at(l) == 8));
            assert_eq!(out[2].tdf.dims(), grid.placement(Level::Fine).dims);
        }
    }

    #[test]
    fn inference_is_deterministic() {
        let h = random_hierarchy(&Level::ALL, HeadMode::Probabilistic { bins: 8 }, Task::Joint, 3);
        let grid = SceneGrid {
            origin: Vec3::zeros(),
            coarse_dims: GridDims::new(3, 2, 2).unwrap(),
        };
        let s = scans(&grid, &mut ChaCha8Rng::seed_from_u64(4));
        let a = h.infer_scene(&s, &mut PassLedger::default()).unwrap();
        let b = h.infer_scene(&s, &mut PassLedger::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_levels_are_rejected() {
        let h = random_hierarchy(&Level::ALL, HeadMode::Deterministic, Task::Joint, 5);
        let grid = SceneGrid {
            origin: Vec3::zeros(),
            coarse_dims: GridDims::new(2, 2, 2).unwrap(),
        };
        let mut s = scans(&grid, &mut ChaCha8Rng::seed_from_u64(6));
        s[2] = s[2].crop([0, 0, 0], GridDims::new(7, 8, 8).unwrap(), crate::volume::CropMode::Strict).unwrap();
        assert!(matches!(h.infer_scene(&s, &mut PassLedger::default()), Err(Error::DimMismatch(_))));
        assert!(h.infer_scene(&s[..2], &mut PassLedger::default()).is_err());
    }

    #[test]
    fn levels_must_be_consecutive() {
        let mut h = random_hierarchy(&[Level::Coarse], HeadMode::Deterministic, Task::Joint, 7);
        let fine = random_hierarchy(&[Level::Coarse, Level::Mid], HeadMode::Deterministic, Task::Joint, 8).levels.pop().unwrap();
        let skipped = LevelModel {
            level: Level::Fine,
            networks: fine.networks,
        };
        assert!(matches!(h.push_level(skipped), Err(Error::LevelOrder { level: 2, needed: 1 })));
        assert_eq!(h.levels.len(), 1);
    }

    #[test]
    fn save_and_load() {
        let h = random_hierarchy(&[Level::Mid, Level::Fine], HeadMode::Probabilistic { bins: 16 }, Task::SemanticOnly, 9);
        let dir = tempfile::tempdir().unwrap();
        h.save(dir.path()).unwrap();
        assert!(dir.path().join("level2/group8.ckpt").exists());
        assert_eq!(ModelHierarchy::load(dir.path()).unwrap(), h);
        std::fs::remove_file(dir.path().join("level1/group3.ckpt")).unwrap();
        assert!(matches!(ModelHierarchy::load(dir.path()), Err(Error::MissingArtifact { .. })));
    }
}
