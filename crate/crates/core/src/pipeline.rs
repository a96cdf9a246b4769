//! Staged pipeline over a work directory.
//!
//! Every stage writes into `<work>/<stage>/<hash>/`, where the hash covers
//! the stage's own settings and the hashes of the stages it reads. A stage
//! whose directory holds a completion marker is skipped, so re-running with
//! an unchanged config only redoes what changed.

use std::borrow::Cow;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{content_hash, PipelineConfig};
use crate::error::{Error, Result};
use crate::eval::{
    copy_input_baseline, int_mask, l1_completion_errors, pass_report, seam_score, semantic_accuracy, semantic_iou, vis_mask,
    MetricsReport, PassReport,
};
use crate::fusion::fuse_frames;
use crate::geometry::Bvh;
use crate::ground_truth::mesh_to_tdf;
use crate::mesh::extract_isosurface;
use crate::model::hierarchy::{check_level_bounds, LevelPrediction, ModelHierarchy, PassLedger};
use crate::model::{plan_crops, train_hierarchy, CropPlan, LevelTrainReport, SceneSource, TrainConfig};
use crate::sampler::{CorpusManifest, LevelVolumes, SampleRecord};
use crate::scan::{bootstrap_emd_stats, build_trajectory, read_trajectory, render_depth, write_trajectory};
use crate::scene::{generate_scene, Scene};
use crate::volume::{
    read_grid, write_grid, CropMode, DistanceKind, GridDims, GridFile, LabelVolume, Level, SceneGrid, SemanticClass, VoxelVolume,
    TRUNCATION,
};

/// File whose presence marks a finished stage directory.
pub const STAGE_MARKER: &str = "stage.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneId {
    pub name: String,
    pub split: Split,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    GenScenes,
    Scan,
    Fuse,
    MakeGt,
    BuildCorpus,
    Train,
    Infer,
    Eval,
    SeamDemo,
}

impl Stage {
    /// Subcommand that produces this stage's artifacts.
    pub fn command(self) -> &'static str {
        match self {
            Stage::GenScenes => "gen-scenes",
            Stage::Scan => "scan",
            Stage::Fuse => "fuse",
            Stage::MakeGt => "make-gt",
            Stage::BuildCorpus => "build-corpus",
            Stage::Train => "train",
            Stage::Infer => "infer",
            Stage::Eval => "eval",
            Stage::SeamDemo => "seam-demo",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Marker {
    stage: String,
    hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub scene: String,
    pub cameras: usize,
    pub skipped_regions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeamReport {
    pub scene: String,
    pub block_size: usize,
    pub full_score: f64,
    pub block_score: f64,
    pub full_passes: usize,
    pub block_passes: usize,
}

impl SeamReport {
    /// How much larger the block baseline's boundary jumps are.
    pub fn ratio(&self) -> f64 {
        self.block_score / self.full_score.max(1e-12)
    }
}

pub struct Pipeline {
    config: PipelineConfig,
    work: PathBuf,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, work: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, work: work.into() })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn work_dir(&self) -> &Path {
        &self.work
    }

    pub fn scenes(&self) -> Vec<SceneId> {
        let c = &self.config.scenes;
        let make = |split, i: usize| {
            let prefix = if split == Split::Train { "train" } else { "test" };
            let salt = if split == Split::Train { 0 } else { 1 << 32 };
            SceneId {
                name: format!("{prefix}_{i:03}"),
                split,
                seed: self.config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (salt + i as u64),
            }
        };
        (0..c.train).map(|i| make(Split::Train, i)).chain((0..c.test).map(|i| make(Split::Test, i))).collect()
    }

    pub fn scenes_in(&self, split: Split) -> Vec<SceneId> {
        self.scenes().into_iter().filter(|s| s.split == split).collect()
    }

    /// Cache key of a stage; training-dependent stages use `train`.
    pub fn stage_hash(&self, stage: Stage, train: &TrainConfig) -> Result<String> {
        let c = &self.config;
        let h = |s| self.stage_hash(s, train);
        match stage {
            Stage::GenScenes => content_hash(&(c.seed, &c.scenes)),
            Stage::Scan => content_hash(&(h(Stage::GenScenes)?, &c.scan)),
            Stage::Fuse => content_hash(&(h(Stage::Scan)?, &c.fusion, &c.grid)),
            Stage::MakeGt => content_hash(&(h(Stage::GenScenes)?, &c.grid)),
            Stage::BuildCorpus => content_hash(&(h(Stage::Fuse)?, h(Stage::MakeGt)?, &c.sampler, c.seed)),
            Stage::Train => content_hash(&(h(Stage::BuildCorpus)?, train)),
            Stage::Infer => content_hash(&(h(Stage::Train)?, "infer")),
            Stage::Eval => content_hash(&(h(Stage::Infer)?, &c.eval)),
            Stage::SeamDemo => content_hash(&(h(Stage::Train)?, &c.eval)),
        }
    }

    pub fn stage_dir(&self, stage: Stage, train: &TrainConfig) -> Result<PathBuf> {
        Ok(self.work.join(stage.command()).join(self.stage_hash(stage, train)?))
    }

    pub fn is_complete(&self, stage: Stage, train: &TrainConfig) -> Result<bool> {
        Ok(self.stage_dir(stage, train)?.join(STAGE_MARKER).is_file())
    }

    /// Directory of a finished stage, or an error naming the subcommand to run.
    pub fn require(&self, stage: Stage, train: &TrainConfig) -> Result<PathBuf> {
        let dir = self.stage_dir(stage, train)?;
        let marker = dir.join(STAGE_MARKER);
        if !marker.is_file() {
            return Err(Error::MissingArtifact {
                path: marker,
                producer: stage.command(),
            });
        }
        Ok(dir)
    }

    fn run_stage(&self, stage: Stage, train: &TrainConfig, body: impl FnOnce(&Path) -> Result<()>) -> Result<PathBuf> {
        let dir = self.stage_dir(stage, train)?;
        if dir.join(STAGE_MARKER).is_file() {
            info!("{}: up to date in {}", stage.command(), dir.display());
            return Ok(dir);
        }
        std::fs::create_dir_all(&dir)?;
        info!("{}: writing {}", stage.command(), dir.display());
        body(&dir)?;
        let marker = Marker {
            stage: stage.command().into(),
            hash: self.stage_hash(stage, train)?,
        };
        std::fs::write(dir.join(STAGE_MARKER), serde_json::to_vec_pretty(&marker)?)?;
        Ok(dir)
    }

    fn base(&self) -> &TrainConfig {
        &self.config.train
    }

    pub fn gen_scenes(&self) -> Result<PathBuf> {
        self.run_stage(Stage::GenScenes, self.base(), |dir| {
            for id in self.scenes() {
                let scene = generate_scene(&self.config.scenes.params.clone().with_seed(id.seed))?;
                let (obj, json) = scene_paths(dir, &id.name);
                scene.write(&obj, &json)?;
            }
            std::fs::write(dir.join("scenes.json"), serde_json::to_vec_pretty(&self.scenes())?)?;
            Ok(())
        })
    }

    pub fn load_scene(&self, name: &str) -> Result<Scene> {
        let dir = self.require(Stage::GenScenes, self.base())?;
        let (obj, json) = scene_paths(&dir, name);
        Scene::read(&obj, &json)
    }

    pub fn scene_grid(&self, scene: &Scene) -> Result<SceneGrid> {
        SceneGrid::covering(scene.room.min, scene.room.max, self.config.grid.margin)
    }

    pub fn scan(&self) -> Result<PathBuf> {
        self.require(Stage::GenScenes, self.base())?;
        self.run_stage(Stage::Scan, self.base(), |dir| {
            let cfg = &self.config.scan;
            let mut stats = cfg.stats.clone();
            if cfg.bootstrap_views > 0 {
                let scenes = self
                    .scenes_in(Split::Train)
                    .iter()
                    .map(|id| self.load_scene(&id.name).map(|s| (s.room, Bvh::build(&s.triangles))))
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<_> = scenes.iter().map(|(room, bvh)| (*room, bvh)).collect();
                (stats.emd_mean, stats.emd_var) = bootstrap_emd_stats(&refs, &stats, &cfg.trajectory, cfg.bootstrap_views)?;
                info!("scan: fitted EMD mean {:.3}, variance {:.4}", stats.emd_mean, stats.emd_var);
            }
            let mut summary = Vec::new();
            for id in self.scenes() {
                let scene = self.load_scene(&id.name)?;
                let bvh = Bvh::build(&scene.triangles);
                let mut tcfg = cfg.trajectory.clone();
                tcfg.seed ^= id.seed;
                let traj = build_trajectory(&scene.room, &bvh, &stats, &tcfg)?;
                if traj.cameras.is_empty() {
                    return Err(Error::NoCameras);
                }
                write_trajectory(&dir.join(format!("{}.traj", id.name)), &traj.cameras)?;
                if cfg.save_depth {
                    let frames = dir.join(&id.name);
                    std::fs::create_dir_all(&frames)?;
                    for (k, cam) in traj.cameras.iter().enumerate() {
                        std::fs::write(frames.join(format!("frame{k:03}.depth")), render_depth(&bvh, cam).to_bytes())?;
                    }
                }
                summary.push(ScanSummary {
                    scene: id.name.clone(),
                    cameras: traj.cameras.len(),
                    skipped_regions: traj.skipped(),
                });
            }
            std::fs::write(dir.join("scan.json"), serde_json::to_vec_pretty(&(&stats, &summary))?)?;
            Ok(())
        })
    }

    pub fn fuse(&self) -> Result<PathBuf> {
        let scan_dir = self.require(Stage::Scan, self.base())?;
        self.run_stage(Stage::Fuse, self.base(), |dir| {
            for id in self.scenes() {
                let scene = self.load_scene(&id.name)?;
                let grid = self.scene_grid(&scene)?;
                let bvh = Bvh::build(&scene.triangles);
                let cameras = read_trajectory(&scan_dir.join(format!("{}.traj", id.name)))?;
                let frames: Vec<_> = cameras.iter().map(|c| (*c, render_depth(&bvh, c))).collect();
                for level in Level::ALL {
                    let fused = fuse_frames(grid.placement(level), &frames, &self.config.fusion)?;
                    write_grid(dir.join(grid_name(&id.name, level, "tsdf")), &GridFile::Distance(fused.tsdf.clone()))?;
                    write_grid(dir.join(grid_name(&id.name, level, "weight")), &fused.weight_file())?;
                }
                info!("fuse: {} from {} frames", id.name, frames.len());
            }
            Ok(())
        })
    }

    pub fn make_gt(&self) -> Result<PathBuf> {
        self.require(Stage::GenScenes, self.base())?;
        self.run_stage(Stage::MakeGt, self.base(), |dir| {
            for id in self.scenes() {
                let scene = self.load_scene(&id.name)?;
                let grid = self.scene_grid(&scene)?;
                let bvh = Bvh::build(&scene.triangles);
                for level in Level::ALL {
                    let (tdf, labels) = mesh_to_tdf(&bvh, grid.placement(level));
                    write_grid(dir.join(grid_name(&id.name, level, "tdf")), &GridFile::Distance(tdf))?;
                    write_grid(dir.join(grid_name(&id.name, level, "labels")), &GridFile::Labels(labels))?;
                }
                info!("make-gt: {}", id.name);
            }
            Ok(())
        })
    }

    pub fn load_tsdf(&self, name: &str, level: Level) -> Result<VoxelVolume> {
        let dir = self.require(Stage::Fuse, self.base())?;
        read_grid(dir.join(grid_name(name, level, "tsdf")))?.into_distance()
    }

    pub fn load_level(&self, name: &str, level: Level) -> Result<LevelVolumes> {
        let gt = self.require(Stage::MakeGt, self.base())?;
        LevelVolumes::new(
            self.load_tsdf(name, level)?,
            read_grid(gt.join(grid_name(name, level, "tdf")))?.into_distance()?,
            read_grid(gt.join(grid_name(name, level, "labels")))?.into_labels()?,
        )
    }

    pub fn build_corpus(&self) -> Result<PathBuf> {
        let fuse = self.require(Stage::Fuse, self.base())?;
        let gt = self.require(Stage::MakeGt, self.base())?;
        self.run_stage(Stage::BuildCorpus, self.base(), |dir| {
            let ids = self.scenes_in(Split::Train);
            let source = DiskScenes { pipeline: self, ids: &ids };
            let plan = plan_crops(&source, &self.config.sampler, self.config.seed)?;
            let mut manifest = CorpusManifest::default();
            // paths relative to the work directory, so it can be moved
            let rel = |p: PathBuf| p.strip_prefix(&self.work).map(Path::to_path_buf).unwrap_or(p);
            for (id, crops) in ids.iter().zip(&plan) {
                for level in Level::ALL {
                    for &offset in &crops[level.index()] {
                        manifest.records.push(SampleRecord {
                            scene: id.name.clone(),
                            level,
                            offset,
                            tsdf: rel(fuse.join(grid_name(&id.name, level, "tsdf"))),
                            tdf: rel(gt.join(grid_name(&id.name, level, "tdf"))),
                            labels: rel(gt.join(grid_name(&id.name, level, "labels"))),
                            condition: None,
                        });
                    }
                }
            }
            for level in Level::ALL {
                info!("build-corpus: {} crops at {level}", manifest.count_at(level));
            }
            std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
            Ok(())
        })
    }

    pub fn load_manifest(&self) -> Result<CorpusManifest> {
        let dir = self.require(Stage::BuildCorpus, self.base())?;
        Ok(serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)?)
    }

    /// Trains (or resumes) the hierarchy for `train` and returns its
    /// checkpoint directory. Each finished level is saved before the next
    /// one starts.
    pub fn train(&self, train: &TrainConfig) -> Result<PathBuf> {
        train.validate()?;
        let manifest = self.load_manifest()?;
        let dir = self.run_stage(Stage::Train, train, |dir| {
            let ids = self.scenes_in(Split::Train);
            let mut plan: CropPlan = vec![Default::default(); ids.len()];
            for r in &manifest.records {
                let i = ids
                    .iter()
                    .position(|id| id.name == r.scene)
                    .ok_or_else(|| Error::format("corpus manifest", format!("unknown scene {}", r.scene)))?;
                plan[i][r.level.index()].push(r.offset);
            }
            std::fs::write(dir.join("train.toml"), toml::to_string_pretty(train).map_err(|e| Error::Config(e.to_string()))?)?;
            let model_dir = dir.join("model");
            let start = if model_dir.join("hierarchy.json").is_file() {
                ModelHierarchy::load(&model_dir)?
            } else {
                ModelHierarchy::new(train.head, train.task)
            };
            let losses_path = dir.join("losses.json");
            let mut reports: Vec<LevelTrainReport> = match std::fs::read(&losses_path) {
                Ok(b) => serde_json::from_slice(&b)?,
                Err(_) => Vec::new(),
            };
            let source = DiskScenes { pipeline: self, ids: &ids };
            train_hierarchy(&source, &plan, train, start, &mut |h, report| {
                h.save(&model_dir)?;
                reports.push(report.clone());
                std::fs::write(&losses_path, serde_json::to_vec(&reports)?)?;
                Ok(())
            })?;
            Ok(())
        })?;
        Ok(dir.join("model"))
    }

    pub fn load_model(&self, train: &TrainConfig) -> Result<ModelHierarchy> {
        ModelHierarchy::load(&self.require(Stage::Train, train)?.join("model"))
    }

    /// Scan volumes of a scene at the levels `model` covers.
    pub fn model_inputs(&self, model: &ModelHierarchy, name: &str) -> Result<Vec<VoxelVolume>> {
        model.levels.iter().map(|m| self.load_tsdf(name, m.level)).collect()
    }

    pub fn infer(&self, train: &TrainConfig) -> Result<PathBuf> {
        let model = self.load_model(train)?;
        self.run_stage(Stage::Infer, train, |dir| {
            for id in self.scenes_in(Split::Test) {
                let mut ledger = PassLedger::default();
                let preds = model.infer_scene(&self.model_inputs(&model, &id.name)?, &mut ledger)?;
                for (m, p) in model.levels.iter().zip(&preds) {
                    write_grid(dir.join(grid_name(&id.name, m.level, "tdf")), &GridFile::Distance(p.tdf.clone()))?;
                    write_grid(dir.join(grid_name(&id.name, m.level, "labels")), &GridFile::Labels(p.labels.clone()))?;
                }
                std::fs::write(dir.join(format!("{}.passes.json", id.name)), serde_json::to_vec_pretty(&ledger)?)?;
                info!("infer: {} in {} passes, {:.1} s", id.name, ledger.count(), ledger.total_seconds());
            }
            Ok(())
        })
    }

    /// Finest-level prediction of a held-out scene.
    pub fn load_prediction(&self, train: &TrainConfig, name: &str) -> Result<LevelPrediction> {
        let dir = self.require(Stage::Infer, train)?;
        Ok(LevelPrediction {
            tdf: read_grid(dir.join(grid_name(name, Level::Fine, "tdf")))?.into_distance()?,
            labels: read_grid(dir.join(grid_name(name, Level::Fine, "labels")))?.into_labels()?,
        })
    }

    pub fn load_ledger(&self, train: &TrainConfig, name: &str) -> Result<PassLedger> {
        let dir = self.require(Stage::Infer, train)?;
        Ok(serde_json::from_slice(&std::fs::read(dir.join(format!("{name}.passes.json")))?)?)
    }

    /// Metrics over all held-out scenes at the fine level, next to the
    /// copy-input baseline. Written as `metrics.txt` and `metrics.json`.
    pub fn evaluate(&self, train: &TrainConfig) -> Result<MetricsReport> {
        self.require(Stage::Infer, train)?;
        let dir = self.run_stage(Stage::Eval, train, |dir| {
            let report = self.compute_metrics(train)?;
            std::fs::write(dir.join("metrics.txt"), report.to_text())?;
            std::fs::write(dir.join("metrics.json"), report.to_json()?)?;
            Ok(())
        })?;
        let values = serde_json::from_slice(&std::fs::read(dir.join("metrics.json"))?)?;
        Ok(MetricsReport { values })
    }

    fn compute_metrics(&self, train: &TrainConfig) -> Result<MetricsReport> {
        let s = self.config.eval.surface_threshold;
        let (mut pred, mut pred_labels, mut gt, mut gt_labels, mut tsdf) = (vec![], vec![], vec![], vec![], vec![]);
        let mut passes: Vec<PassReport> = Vec::new();
        for id in self.scenes_in(Split::Test) {
            let p = self.load_prediction(train, &id.name)?;
            let truth = self.load_level(&id.name, Level::Fine)?;
            passes.push(pass_report(&self.load_ledger(train, &id.name)?, truth.tdf.dims(), self.config.eval.block_size));
            pred.extend_from_slice(p.tdf.data());
            pred_labels.extend_from_slice(p.labels.labels());
            gt.extend_from_slice(truth.tdf.data());
            gt_labels.extend_from_slice(truth.labels.labels());
            tsdf.extend_from_slice(truth.tsdf.data());
        }
        let mut r = MetricsReport::default();
        r.insert("scenes", Some(passes.len() as f64));
        r.add_l1("model", &l1_completion_errors(&pred, &gt, &tsdf, s)?);
        r.add_l1("copy_input", &l1_completion_errors(&copy_input_baseline(&tsdf), &gt, &tsdf, s)?);
        let vis = vis_mask(&tsdf, &gt, s);
        let int = int_mask(&pred, &gt, None, s);
        r.add_classes("sem_acc.vis", &semantic_accuracy(&pred_labels, &gt_labels, &vis)?);
        r.add_classes("sem_acc.int", &semantic_accuracy(&pred_labels, &gt_labels, &int)?);
        r.add_classes("iou.vis", &semantic_iou(&pred_labels, &gt_labels, &vis)?);
        r.add_classes("iou.int", &semantic_iou(&pred_labels, &gt_labels, &int)?);
        let n = passes.len().max(1) as f64;
        r.insert("passes.model", Some(passes.iter().map(|p| p.total_passes as f64).sum::<f64>() / n));
        r.insert("passes.block_baseline", Some(passes.iter().map(|p| p.block_baseline_passes as f64).sum::<f64>() / n));
        for level in Level::ALL {
            let t: Vec<f64> = passes.iter().flat_map(|p| &p.levels).filter(|l| l.level == level).map(|l| l.seconds).collect();
            r.insert(format!("seconds.{level}"), (!t.is_empty()).then(|| t.iter().sum::<f64>() / n));
        }
        Ok(r)
    }

    /// Colored meshes of every held-out prediction and its ground truth.
    pub fn export_meshes(&self, train: &TrainConfig, out: &Path) -> Result<Vec<PathBuf>> {
        let iso = self.config.eval.mesh_iso;
        let mut written = Vec::new();
        for id in self.scenes_in(Split::Test) {
            let p = self.load_prediction(train, &id.name)?;
            let truth = self.load_level(&id.name, Level::Fine)?;
            for (tag, tdf, labels) in [("pred", &p.tdf, &p.labels), ("gt", &truth.tdf, &truth.labels)] {
                let path = out.join(format!("{}.{tag}.obj", id.name));
                extract_isosurface(tdf, Some(labels), iso)?.write(&path)?;
                written.push(path);
            }
        }
        Ok(written)
    }

    /// Whole-scene inference against independent fixed blocks on one
    /// held-out scene (the first one unless named).
    pub fn seam_demo(&self, train: &TrainConfig, scene: Option<&str>) -> Result<SeamReport> {
        let model = self.load_model(train)?;
        let name = match scene {
            Some(n) => n.to_string(),
            None => self
                .scenes_in(Split::Test)
                .first()
                .map(|s| s.name.clone())
                .ok_or_else(|| Error::Config("seam demo needs a held-out scene".into()))?,
        };
        let block = self.config.eval.block_size;
        let dir = self.stage_dir(Stage::SeamDemo, train)?;
        let report_path = dir.join(format!("{name}.seam.json"));
        if report_path.is_file() {
            return Ok(serde_json::from_slice(&std::fs::read(&report_path)?)?);
        }
        std::fs::create_dir_all(&dir)?;
        let inputs = self.model_inputs(&model, &name)?;
        let mut full_ledger = PassLedger::default();
        let full = model.infer_scene(&inputs, &mut full_ledger)?.pop().expect("at least one level");
        let mut block_ledger = PassLedger::default();
        let blocks = infer_in_blocks(&model, &inputs, block, &mut block_ledger)?;
        let score = |p: &LevelPrediction| seam_score(&p.tdf, block).ok_or_else(|| Error::InvalidParam(format!("{name} is narrower than one {block}-voxel block")));
        let report = SeamReport {
            scene: name.clone(),
            block_size: block,
            full_score: score(&full)?,
            block_score: score(&blocks)?,
            full_passes: full_ledger.count(),
            block_passes: block_ledger.count(),
        };
        let iso = self.config.eval.mesh_iso;
        extract_isosurface(&full.tdf, Some(&full.labels), iso)?.write(&dir.join(format!("{name}.full.obj")))?;
        extract_isosurface(&blocks.tdf, Some(&blocks.labels), iso)?.write(&dir.join(format!("{name}.blocks.obj")))?;
        std::fs::write(&report_path, serde_json::to_vec_pretty(&report)?)?;
        Ok(report)
    }

    /// Every stage in order with the configured training settings.
    pub fn run_all(&self) -> Result<MetricsReport> {
        self.gen_scenes()?;
        self.scan()?;
        self.fuse()?;
        self.make_gt()?;
        self.build_corpus()?;
        self.train(self.base())?;
        self.infer(self.base())?;
        self.evaluate(self.base())
    }
}

/// Independent-block baseline: the hierarchy runs on each `block`-wide
/// column of the finest grid (and the matching coarser columns) with no
/// context from its neighbours, and the pieces are pasted together.
pub fn infer_in_blocks(model: &ModelHierarchy, tsdfs: &[VoxelVolume], block: usize, ledger: &mut PassLedger) -> Result<LevelPrediction> {
    check_level_bounds(tsdfs)?;
    let finest = tsdfs.last().ok_or(Error::MissingInput("scan volumes"))?;
    let levels = tsdfs.len();
    let scale = 1usize << (levels - 1);
    if block == 0 || block % scale != 0 {
        return Err(Error::InvalidParam(format!("block {block} must be a positive multiple of {scale}")));
    }
    let fd = finest.dims();
    let mut tdf = VoxelVolume::filled(*finest.placement(), DistanceKind::Tdf, TRUNCATION);
    let mut labels = LabelVolume::filled(*finest.placement(), SemanticClass::Empty);
    for bz in (0..fd.z).step_by(block) {
        for bx in (0..fd.x).step_by(block) {
            let crops = tsdfs
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let s = 1usize << (levels - 1 - i);
                    let dims = GridDims::new(block / s, t.dims().y, block / s)?;
                    t.crop([(bx / s) as i64, 0, (bz / s) as i64], dims, CropMode::Pad)
                })
                .collect::<Result<Vec<_>>>()?;
            let piece = model.infer_scene(&crops, ledger)?.pop().expect("at least one level");
            for z in bz..(bz + block).min(fd.z) {
                for y in 0..fd.y {
                    for x in bx..(bx + block).min(fd.x) {
                        tdf.set(x, y, z, piece.tdf.get(x - bx, y, z - bz));
                        labels.set(x, y, z, piece.labels.get(x - bx, y, z - bz));
                    }
                }
            }
        }
    }
    Ok(LevelPrediction { tdf, labels })
}

fn scene_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{name}.obj")), dir.join(format!("{name}.json")))
}

fn grid_name(scene: &str, level: Level, what: &str) -> String {
    format!("{scene}.{level}.{what}.vxc")
}

/// Training scenes read from the stage directories on demand.
struct DiskScenes<'a> {
    pipeline: &'a Pipeline,
    ids: &'a [SceneId],
}

impl SceneSource for DiskScenes<'_> {
    fn scene_count(&self) -> usize {
        self.ids.len()
    }

    fn level(&self, scene: usize, level: Level) -> Result<Cow<'_, LevelVolumes>> {
        let id = self.ids.get(scene).ok_or_else(|| Error::InvalidParam(format!("no training scene {scene}")))?;
        Ok(Cow::Owned(self.pipeline.load_level(&id.name, level)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::hierarchy::tests::random_hierarchy;
    use crate::model::{HeadMode, Task};
    use crate::volume::Placement;
    use crate::Vec3;

    fn scan_levels(coarse: GridDims) -> Vec<VoxelVolume> {
        Level::ALL
            .iter()
            .map(|&l| {
                let p = Placement::new(coarse.scaled(1 << l.index()), l.spec().voxel_size, Vec3::zeros());
                let n = p.dims.count();
                let data = (0..n).map(|i| ((i * 7919) % 13) as f32 / 2.0 - 3.0).collect();
                VoxelVolume::from_data(p, DistanceKind::Tsdf, data).unwrap()
            })
            .collect()
    }

    #[test]
    fn one_block_equals_whole_scene_inference() {
        let h = random_hierarchy(&Level::ALL, HeadMode::Deterministic, Task::Joint, 4);
        let tsdfs = scan_levels(GridDims::new(2, 2, 2).unwrap());
        let mut a = PassLedger::default();
        let full = h.infer_scene(&tsdfs, &mut a).unwrap().pop().unwrap();
        let mut b = PassLedger::default();
        let blocks = infer_in_blocks(&h, &tsdfs, 8, &mut b).unwrap();
        assert_eq!(full, blocks);
        assert_eq!(a.count(), 24);
        assert_eq!(b.count(), 24);
    }

    #[test]
    fn block_passes_scale_with_footprint() {
        let h = random_hierarchy(&Level::ALL, HeadMode::Deterministic, Task::Joint, 5);
        let tsdfs = scan_levels(GridDims::new(4, 1, 4).unwrap());
        let mut ledger = PassLedger::default();
        let p = infer_in_blocks(&h, &tsdfs, 8, &mut ledger).unwrap();
        assert_eq!(ledger.count(), 24 * 4);
        assert_eq!(p.tdf.dims(), tsdfs[2].dims());
        assert!(infer_in_blocks(&h, &tsdfs, 6, &mut ledger).is_err());
    }

    #[test]
    fn stages_name_their_producer_when_missing() {
        let tmp = tempfile::tempdir().unwrap();
        let p = Pipeline::new(PipelineConfig::default(), tmp.path()).unwrap();
        match p.scan().unwrap_err() {
            Error::MissingArtifact { producer, path } => {
                assert_eq!(producer, "gen-scenes");
                assert!(path.starts_with(tmp.path().join("gen-scenes")));
            }
            e => panic!("unexpected {e}"),
        }
        let train = TrainConfig::default();
        assert!(matches!(p.train(&train).unwrap_err(), Error::MissingArtifact { producer: "build-corpus", .. }));
        assert!(matches!(p.infer(&train).unwrap_err(), Error::MissingArtifact { producer: "train", .. }));
        assert!(matches!(p.evaluate(&train).unwrap_err(), Error::MissingArtifact { producer: "infer", .. }));
    }

    #[test]
    fn stage_hashes_follow_their_inputs() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::default();
        let p = Pipeline::new(cfg.clone(), tmp.path()).unwrap();
        let t = TrainConfig::default();
        cfg.sampler.keep_structural = 0.2;
        let q = Pipeline::new(cfg, tmp.path()).unwrap();
        for stage in [Stage::GenScenes, Stage::Scan, Stage::Fuse, Stage::MakeGt] {
            assert_eq!(p.stage_hash(stage, &t).unwrap(), q.stage_hash(stage, &t).unwrap());
        }
        for stage in [Stage::BuildCorpus, Stage::Train, Stage::Infer, Stage::Eval] {
            assert_ne!(p.stage_hash(stage, &t).unwrap(), q.stage_hash(stage, &t).unwrap());
        }
        let t2 = TrainConfig { steps: 3, ..t.clone() };
        assert_eq!(p.stage_hash(Stage::BuildCorpus, &t).unwrap(), p.stage_hash(Stage::BuildCorpus, &t2).unwrap());
        assert_ne!(p.stage_hash(Stage::Train, &t).unwrap(), p.stage_hash(Stage::Train, &t2).unwrap());
    }

    #[test]
    fn scene_names_and_seeds_are_distinct() {
        let p = Pipeline::new(PipelineConfig::default(), "/nonexistent").unwrap();
        let ids = p.scenes();
        assert_eq!(ids.len(), 56);
        assert_eq!(ids[0].name, "train_000");
        assert_eq!(ids[50].name, "test_000");
        let mut seeds: Vec<_> = ids.iter().map(|s| s.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 56);
    }
}
