//! Training: each group network learns on ground-truth earlier groups; each
//! level learns after the one before it, conditioned on its predictions.

use std::borrow::Cow;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::groups::{VoxelGroup, GROUP_COUNT};
use super::head::{geometry_loss, HeadMode};
use super::hierarchy::{encode_condition, encode_tsdf, LevelModel, LevelPrediction, ModelHierarchy, PassLedger, Task};
use super::network::{GroupNetwork, InputKind, NetInputs, NetOutput, Widths};
use crate::error::{Error, Result};
use crate::nn::loss::weighted_softmax_ce;
use crate::nn::{Adam, AdamConfig, LrSchedule, Tensor5};
use crate::sampler::{cut_sample, height_jitter, select_crops, LevelVolumes, SamplerConfig, TrainSample};
use crate::volume::Level;

/// Where levels after the first get their coarser-level inputs during training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// The trained coarser levels' own predictions.
    #[default]
    Predicted,
    /// Upsampled ground truth.
    GroundTruth,
}

/// Which levels the model has.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Coarse, mid and fine.
    #[default]
    Hierarchical,
    /// The fine level alone, without coarser conditioning.
    FineOnly,
}

impl Layout {
    pub fn levels(self) -> &'static [Level] {
        match self {
            Layout::Hierarchical => &Level::ALL,
            Layout::FineOnly => &[Level::Fine],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Optimizer steps per group network.
    pub steps: usize,
    /// Channel widths per level, coarse first.
    pub widths: [Widths; 3],
    pub head: HeadMode,
    pub task: Task,
    pub layout: Layout,
    pub conditioning: Conditioning,
    pub jitter: bool,
    pub adam: AdamConfig,
    pub lr_initial: f64,
    pub lr_decayed: f64,
    /// Fraction of `steps` after which the decayed rate applies.
    pub decay_at: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            widths: [
                Widths { branch: 8, trunk: 16 },
                Widths { branch: 4, trunk: 8 },
                Widths { branch: 2, trunk: 4 },
            ],
            head: HeadMode::Deterministic,
            task: Task::Joint,
            layout: Layout::Hierarchical,
            conditioning: Conditioning::Predicted,
            jitter: true,
            adam: AdamConfig::default(),
            lr_initial: 1e-3,
            lr_decayed: 1e-4,
            decay_at: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.head.validate()?;
        if self.steps == 0 || !(0.0..=1.0).contains(&self.decay_at) || !(self.lr_initial > 0.0) || !(self.lr_decayed > 0.0) {
            return Err(Error::InvalidParam("training steps and learning rates must be positive".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            initial: self.lr_initial,
            decayed: self.lr_decayed,
            decay_step: (self.steps as f64 * self.decay_at).round() as usize,
        }
    }
}

/// Per-step total loss of each group network of a level.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelTrainReport {
    pub level: Option<Level>,
    pub samples: usize,
    pub losses: Vec<Vec<f32>>,
}

impl LevelTrainReport {
    /// Mean loss over a window of steps, averaged over groups.
    pub fn mean_loss(&self, steps: std::ops::Range<usize>) -> f64 {
        let mut total = 0.0;
        let mut n = 0usize;
        for l in &self.losses {
            for &v in l.get(steps.clone()).unwrap_or(&[]) {
                total += v as f64;
                n += 1;
            }
        }
        total / n.max(1) as f64
    }
}

fn group_seed(seed: u64, level: Level, group: VoxelGroup) -> u64 {
    seed ^ ((level.index() * GROUP_COUNT + group.index() + 1) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Loss and head-output gradients of one group on one sample.
pub fn group_loss(net: &GroupNetwork<f32>, task: Task, sample: &TrainSample, group: VoxelGroup, out: &NetOutput<f32>) -> Result<(f32, NetOutput<f32>)> {
    let mask = sample.group_mask(group);
    let w: Vec<f32> = sample.weights.iter().zip(&mask).map(|(a, b)| a * b).collect();
    let (sem_loss, d_sem) = weighted_softmax_ce(&out.semantics, &sample.target_labels, &w)?;
    let (geo_loss, d_geo) = if task.predicts_geometry() {
        geometry_loss(net.head(), &out.geometry, &sample.target_tdf, &mask)?
    } else {
        (0.0, Tensor5::zeros(out.geometry.shape()))
    };
    Ok((
        geo_loss + sem_loss,
        NetOutput {
            geometry: d_geo,
            semantics: d_sem,
        },
    ))
}

/// Network inputs for `group`, with ground truth standing in for earlier groups.
pub fn training_inputs(sample: &TrainSample, group: VoxelGroup, task: Task) -> Result<NetInputs<f32>> {
    let geometry = task.predicts_geometry();
    let known = sample.known_before(group);
    Ok(NetInputs {
        tsdf: encode_tsdf(&sample.tsdf, sample.dims)?,
        previous_level: sample
            .condition
            .as_ref()
            .map(|(t, l)| encode_condition(t, l, None, sample.dims, geometry))
            .transpose()?,
        previous_group: encode_condition(&sample.target_tdf, &sample.target_labels, Some(&known), sample.dims, geometry)?,
    })
}

/// Trains one group network from scratch.
pub fn train_group(level: Level, group: VoxelGroup, conditioned: bool, samples: &[TrainSample], cfg: &TrainConfig) -> Result<(GroupNetwork<f32>, Vec<f32>)> {
    if samples.is_empty() {
        return Err(Error::InvalidParam(format!("no training samples at {level}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(group_seed(cfg.seed, level, group));
    let mut net = GroupNetwork::new(InputKind::for_level(conditioned), cfg.widths[level.index()], cfg.head, &mut rng)?;
    let mut opt = Adam::new(cfg.adam, &net.param_sizes());
    let schedule = cfg.schedule();
    let sampler = SamplerConfig::default();
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let base = &samples[rng.random_range(0..samples.len())];
        let jittered;
        let sample = if cfg.jitter {
            jittered = height_jitter(base, &sampler, &mut rng);
            &jittered
        } else {
            base
        };
        let x = training_inputs(sample, group, cfg.task)?;
        let (out, cache) = net.forward_cached(&x)?;
        let (loss, d_out) = group_loss(&net, cfg.task, sample, group, &out)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        let mut grads = net.zeros_like();
        net.backward(&x, &cache, &d_out, &mut grads)?;
        opt.step(&mut net.params_mut(), &grads.params(), schedule.at(step))?;
        losses.push(loss);
    }
    Ok((net, losses))
}

/// Trains the eight networks of `level`. `prior` must hold exactly the
/// layout's levels before it.
pub fn train_level(level: Level, samples: &[TrainSample], prior: &ModelHierarchy, cfg: &TrainConfig) -> Result<(LevelModel, LevelTrainReport)> {
    cfg.validate()?;
    let plan = cfg.layout.levels();
    let pos = plan
        .iter()
        .position(|&l| l == level)
        .ok_or_else(|| Error::InvalidParam(format!("{level} is not part of the {:?} layout", cfg.layout)))?;
    let have: Vec<Level> = prior.levels.iter().map(|l| l.level).collect();
    if have != plan[..pos] {
        return Err(Error::LevelOrder {
            level: level.index(),
            needed: plan[pos.max(1) - 1].index(),
        });
    }
    if prior.head != cfg.head || prior.task != cfg.task {
        return Err(Error::InvalidParam("earlier levels were trained with a different head or task".into()));
    }
    let conditioned = pos > 0;
    if samples.iter().any(|s| s.level != level || s.condition.is_some() != conditioned) {
        return Err(Error::InvalidParam(format!("samples do not match {level} with conditioning={conditioned}")));
    }
    let mut networks = Vec::with_capacity(GROUP_COUNT);
    let mut report = LevelTrainReport {
        level: Some(level),
        samples: samples.len(),
        losses: Vec::new(),
    };
    for g in VoxelGroup::ALL {
        let (net, losses) = train_group(level, g, conditioned, samples, cfg)?;
        info!(
            "{level} {g}: loss {:.4} -> {:.4}",
            losses.iter().take(10).sum::<f32>() / losses.len().min(10) as f32,
            losses.iter().rev().take(10).sum::<f32>() / losses.len().min(10) as f32
        );
        networks.push(net);
        report.losses.push(losses);
    }
    Ok((LevelModel { level, networks }, report))
}

/// Per-level volumes of one training scene, coarse first.
pub type SceneLevels = Vec<LevelVolumes>;

/// Training scenes, each available at all three levels. Lets callers keep
/// scenes on disk and load one level at a time.
pub trait SceneSource {
    fn scene_count(&self) -> usize;
    fn level(&self, scene: usize, level: Level) -> Result<Cow<'_, LevelVolumes>>;
}

impl SceneSource for [SceneLevels] {
    fn scene_count(&self) -> usize {
        self.len()
    }

    fn level(&self, scene: usize, level: Level) -> Result<Cow<'_, LevelVolumes>> {
        self.get(scene)
            .and_then(|s| s.get(level.index()))
            .map(Cow::Borrowed)
            .ok_or_else(|| Error::InvalidParam(format!("scene {scene} has no {level} volumes")))
    }
}

/// Conditioning from the ground truth one level coarser.
pub fn ground_truth_condition(coarser: &LevelVolumes) -> Result<LevelPrediction> {
    LevelPrediction {
        tdf: coarser.tdf.clone(),
        labels: coarser.labels.clone(),
    }
    .upsampled()
}

/// Crop origins per scene and level, drawn with one stream per level.
pub type CropPlan = Vec<[Vec<[i64; 3]>; 3]>;

pub fn plan_crops(scenes: &dyn SceneSource, sampler: &SamplerConfig, seed: u64) -> Result<CropPlan> {
    let mut plan: CropPlan = vec![Default::default(); scenes.scene_count()];
    for level in Level::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0xC0FFEE + level.index() as u64));
        for (i, crops) in plan.iter_mut().enumerate() {
            crops[level.index()] = select_crops(&*scenes.level(i, level)?, level, sampler, &mut rng)?;
        }
    }
    Ok(plan)
}

/// Trains every level of the layout in order, skipping levels `start`
/// already holds. `crops[i][l]` lists the training crop origins of scene `i`
/// at level `l`. `after_level` sees the hierarchy after each newly trained
/// level.
pub fn train_hierarchy(
    scenes: &dyn SceneSource,
    crops: &CropPlan,
    cfg: &TrainConfig,
    start: ModelHierarchy,
    after_level: &mut dyn FnMut(&ModelHierarchy, &LevelTrainReport) -> Result<()>,
) -> Result<(ModelHierarchy, Vec<LevelTrainReport>)> {
    cfg.validate()?;
    let count = scenes.scene_count();
    if crops.len() != count {
        return Err(Error::InvalidParam(format!("crop plan covers {} of {count} scenes", crops.len())));
    }
    let mut h = if start.levels.is_empty() { ModelHierarchy::new(cfg.head, cfg.task) } else { start };
    if h.head != cfg.head || h.task != cfg.task {
        return Err(Error::InvalidParam("resumed hierarchy differs in head or task".into()));
    }
    let mut reports = Vec::new();
    // latest predicted level per scene, for predicted conditioning
    let mut predictions: Vec<Option<LevelPrediction>> = vec![None; count];
    let plan = cfg.layout.levels();
    for (pos, &level) in plan.iter().enumerate() {
        let trained = h.levels.iter().any(|l| l.level == level);
        if !trained {
            let mut samples = Vec::new();
            for (i, crops) in crops.iter().enumerate() {
                let cond = match (pos, cfg.conditioning) {
                    (0, _) => None,
                    (_, Conditioning::GroundTruth) => {
                        let coarser = level.coarser().expect("conditioned levels have a coarser level");
                        Some(ground_truth_condition(&*scenes.level(i, coarser)?)?)
                    }
                    (_, Conditioning::Predicted) => Some(predictions[i].as_ref().expect("predicted on the previous level").upsampled()?),
                };
                let volumes = scenes.level(i, level)?;
                for &offset in &crops[level.index()] {
                    samples.push(cut_sample(&volumes, level, offset, cond.as_ref())?);
                }
            }
            info!("{level}: {} training samples", samples.len());
            let (model, report) = train_level(level, &samples, &h, cfg)?;
            h.push_level(model)?;
            after_level(&h, &report)?;
            reports.push(report);
        }
        let next_needs_predictions = pos + 1 < plan.len() && cfg.conditioning == Conditioning::Predicted;
        if next_needs_predictions {
            let model = h.levels.iter().find(|l| l.level == level).expect("level present");
            for (i, prediction) in predictions.iter_mut().enumerate() {
                let cond = prediction.as_ref().map(LevelPrediction::upsampled).transpose()?;
                let tsdf = &scenes.level(i, level)?.tsdf;
                *prediction = Some(h.predict_level(model, tsdf, cond.as_ref(), &mut PassLedger::default(), &mut |_, _, _| {})?);
            }
        }
    }
    Ok((h, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Shape5;
    use crate::volume::{GridDims, SemanticClass};

    fn toy_sample(level: Level, conditioned: bool, seed: u64) -> TrainSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = GridDims::new(6, 5, 4).unwrap();
        let n = dims.count();
        // a floor slab at y = 1 and a chair blob
        let mut tdf = vec![3.0f32; n];
        let mut labels = vec![SemanticClass::Empty.id(); n];
        for z in 0..4 {
            for y in 0..5 {
                for x in 0..6 {
                    let i = dims.index(x, y, z);
                    tdf[i] = ((y as f32 - 1.0).abs()).min(3.0);
                    if y == 1 {
                        labels[i] = SemanticClass::Floor.id();
                    }
                    if (2..4).contains(&x) && y == 2 && z == 1 {
                        labels[i] = SemanticClass::Chair.id();
                        tdf[i] = 0.0;
                    }
                }
            }
        }
        let tsdf: Vec<f32> = tdf.iter().map(|&t| if rng.random_bool(0.3) { -3.0 } else { t }).collect();
        TrainSample {
            level,
            dims,
            offset: [0, 0, 0],
            tsdf,
            condition: conditioned.then(|| (tdf.clone(), labels.clone())),
            weights: crate::sampler::semantic_weights(&labels),
            target_tdf: tdf,
            target_labels: labels,
        }
    }

    fn small_cfg(steps: usize) -> TrainConfig {
        TrainConfig {
            steps,
            widths: [Widths { branch: 3, trunk: 4 }; 3],
            jitter: false,
            ..Default::default()
        }
    }

    #[test]
    fn training_inputs_reveal_only_earlier_groups() {
        let s = toy_sample(Level::Coarse, false, 0);
        let x = training_inputs(&s, VoxelGroup::new(3).unwrap(), Task::Joint).unwrap();
        let mask = x.previous_group.channel(0, 13);
        for z in 0..4 {
            for y in 0..5 {
                for xx in 0..6 {
                    let i = s.dims.index(xx, y, z);
                    assert_eq!(mask[i] == 1.0, VoxelGroup::of_voxel(xx, y, z).id() < 3);
                }
            }
        }
        assert_eq!(x.previous_group.shape(), Shape5::new(1, 14, 4, 5, 6));
    }

    #[test]
    fn loss_decreases_on_a_toy_corpus() {
        let samples: Vec<_> = (0..4).map(|i| toy_sample(Level::Coarse, false, i)).collect();
        let (_, losses) = train_group(Level::Coarse, VoxelGroup::new(1).unwrap(), false, &samples, &TrainConfig { lr_initial: 1e-2, lr_decayed: 1e-3, ..small_cfg(300) }).unwrap();
        let head: f32 = losses[..10].iter().sum::<f32>() / 10.0;
        let tail: f32 = losses[290..].iter().sum::<f32>() / 10.0;
        assert!(tail < 0.5 * head, "{head} -> {tail}");
    }

    #[test]
    fn level_order_is_enforced() {
        let samples = vec![toy_sample(Level::Mid, true, 1)];
        let err = train_level(Level::Mid, &samples, &ModelHierarchy::new(HeadMode::Deterministic, Task::Joint), &small_cfg(1)).unwrap_err();
        assert!(matches!(err, Error::LevelOrder { level: 1, needed: 0 }));
    }

    #[test]
    fn fine_only_layout_trains_unconditioned() {
        let samples = vec![toy_sample(Level::Fine, false, 2)];
        let cfg = TrainConfig {
            layout: Layout::FineOnly,
            ..small_cfg(2)
        };
        let (m, r) = train_level(Level::Fine, &samples, &ModelHierarchy::new(cfg.head, cfg.task), &cfg).unwrap();
        assert!(!m.conditioned());
        assert_eq!(r.losses.len(), 8);
        assert_eq!(m.networks[0].conv_count(), 32);
    }

    #[test]
    fn semantic_only_and_probabilistic_modes_train() {
        let samples = vec![toy_sample(Level::Coarse, false, 3)];
        for (head, task) in [(HeadMode::Deterministic, Task::SemanticOnly), (HeadMode::Probabilistic { bins: 8 }, Task::Joint)] {
            let cfg = TrainConfig { head, task, ..small_cfg(3) };
            let (m, r) = train_level(Level::Coarse, &samples, &ModelHierarchy::new(head, task), &cfg).unwrap();
            assert!(r.losses.iter().flatten().all(|l| l.is_finite()));
            assert_eq!(m.networks[0].head(), head);
        }
    }

    #[test]
    fn sem_only_inputs_hide_distances() {
        let s = toy_sample(Level::Mid, true, 4);
        let x = training_inputs(&s, VoxelGroup::new(8).unwrap(), Task::SemanticOnly).unwrap();
        assert!(x.previous_group.channel(0, 0).iter().all(|&v| v == 1.0));
        assert!(x.previous_level.unwrap().channel(0, 0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn conditioning_source_changes_only_conditioning() {
        let s = toy_sample(Level::Mid, true, 5);
        let mut other = s.clone();
        other.condition = Some((vec![3.0; s.dims.count()], vec![SemanticClass::Empty.id(); s.dims.count()]));
        let g = VoxelGroup::new(2).unwrap();
        let (a, b) = (training_inputs(&s, g, Task::Joint).unwrap(), training_inputs(&other, g, Task::Joint).unwrap());
        assert_eq!(a.tsdf, b.tsdf);
        assert_eq!(a.previous_group, b.previous_group);
        assert_ne!(a.previous_level, b.previous_level);
    }
}
