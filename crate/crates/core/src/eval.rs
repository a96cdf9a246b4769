//! Completion and semantic metrics, pass counts and seam scores.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PassLedger;
use crate::volume::{GridDims, Level, SemanticClass, VoxelVolume, NUM_SEMANTIC_CLASSES, TRUNCATION};

/// Default surface band for the masked errors, in voxels.
pub const SURFACE_THRESHOLD: f32 = 1.0;

fn check_len(lens: &[usize]) -> Result<()> {
    if lens.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::DimMismatch(format!("metric inputs of lengths {lens:?}")));
    }
    Ok(())
}

/// Mean absolute error over `mask`, `None` if the mask is empty.
pub fn masked_l1(pred: &[f32], target: &[f32], mask: impl Fn(usize) -> bool) -> Option<f64> {
    let (mut sum, mut n) = (0.0f64, 0usize);
    for i in 0..pred.len() {
        if mask(i) {
            sum += (pred[i] - target[i]).abs() as f64;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// L1 distance-field errors over four regions. `None` marks an empty region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct L1Errors {
    pub entire: Option<f64>,
    pub pred_surf: Option<f64>,
    pub target_surf: Option<f64>,
    pub unk_space: Option<f64>,
}

pub fn l1_completion_errors(pred: &[f32], target: &[f32], input_tsdf: &[f32], surface: f32) -> Result<L1Errors> {
    check_len(&[pred.len(), target.len(), input_tsdf.len()])?;
    Ok(L1Errors {
        entire: masked_l1(pred, target, |_| true),
        pred_surf: masked_l1(pred, target, |i| pred[i] <= surface),
        target_surf: masked_l1(pred, target, |i| target[i] <= surface),
        unk_space: masked_l1(pred, target, |i| input_tsdf[i] < 0.0),
    })
}

/// The trivial completion: the scan's own distances, unsigned.
pub fn copy_input_baseline(input_tsdf: &[f32]) -> Vec<f32> {
    input_tsdf.iter().map(|v| v.abs().min(TRUNCATION)).collect()
}

/// Observed surface: in front of the scan and near the true surface.
pub fn vis_mask(input_tsdf: &[f32], gt_tdf: &[f32], surface: f32) -> Vec<bool> {
    input_tsdf.iter().zip(gt_tdf).map(|(&s, &t)| s >= 0.0 && t <= surface).collect()
}

/// Where the prediction, the ground truth and optionally another method all see a surface.
pub fn int_mask(pred_tdf: &[f32], gt_tdf: &[f32], other: Option<&[f32]>, surface: f32) -> Vec<bool> {
    (0..pred_tdf.len())
        .map(|i| pred_tdf[i] <= surface && gt_tdf[i] <= surface && other.is_none_or(|o| o[i] <= surface))
        .collect()
}

/// Per-class scores over the eleven real classes; `None` where a class is absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub per_class: Vec<Option<f64>>,
    pub average: Option<f64>,
}

impl ClassScores {
    fn from_per_class(per_class: Vec<Option<f64>>) -> Self {
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        let average = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        Self { per_class, average }
    }

    pub fn get(&self, class: SemanticClass) -> Option<f64> {
        self.per_class.get(class.id() as usize).copied().flatten()
    }
}

pub fn semantic_accuracy(pred: &[u8], gt: &[u8], mask: &[bool]) -> Result<ClassScores> {
    check_len(&[pred.len(), gt.len(), mask.len()])?;
    let mut correct = [0usize; NUM_SEMANTIC_CLASSES];
    let mut total = [0usize; NUM_SEMANTIC_CLASSES];
    for i in 0..gt.len() {
        let c = gt[i] as usize;
        if mask[i] && c < NUM_SEMANTIC_CLASSES {
            total[c] += 1;
            correct[c] += (pred[i] == gt[i]) as usize;
        }
    }
    Ok(ClassScores::from_per_class(
        (0..NUM_SEMANTIC_CLASSES).map(|c| (total[c] > 0).then(|| correct[c] as f64 / total[c] as f64)).collect(),
    ))
}

pub fn semantic_iou(pred: &[u8], gt: &[u8], mask: &[bool]) -> Result<ClassScores> {
    check_len(&[pred.len(), gt.len(), mask.len()])?;
    let mut inter = [0usize; NUM_SEMANTIC_CLASSES];
    let mut union = [0usize; NUM_SEMANTIC_CLASSES];
    for i in 0..gt.len() {
        if !mask[i] {
            continue;
        }
        let (p, g) = (pred[i] as usize, gt[i] as usize);
        if p == g {
            if g < NUM_SEMANTIC_CLASSES {
                inter[g] += 1;
                union[g] += 1;
            }
        } else {
            if p < NUM_SEMANTIC_CLASSES {
                union[p] += 1;
            }
            if g < NUM_SEMANTIC_CLASSES {
                union[g] += 1;
            }
        }
    }
    Ok(ClassScores::from_per_class(
        (0..NUM_SEMANTIC_CLASSES).map(|c| (union[c] > 0).then(|| inter[c] as f64 / union[c] as f64)).collect(),
    ))
}

/// Passes a fixed-block predictor needs to tile the footprint.
pub fn block_baseline_passes(dims: GridDims, block: usize) -> usize {
    dims.x.div_ceil(block) * dims.z.div_ceil(block)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelTiming {
    pub level: Level,
    pub dims: Option<GridDims>,
    pub passes: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassReport {
    pub levels: Vec<LevelTiming>,
    pub total_passes: usize,
    pub total_seconds: f64,
    pub block_size: usize,
    pub block_baseline_passes: usize,
}

/// Summarizes an inference ledger next to the block baseline for `fine_dims`.
pub fn pass_report(ledger: &PassLedger, fine_dims: GridDims, block: usize) -> PassReport {
    let levels: Vec<LevelTiming> = Level::ALL
        .iter()
        .filter(|&&l| ledger.count_at(l) > 0)
        .map(|&l| LevelTiming {
            level: l,
            dims: ledger.passes.iter().find(|p| p.level == l).map(|p| p.dims),
            passes: ledger.count_at(l),
            seconds: ledger.seconds_at(l),
        })
        .collect();
    PassReport {
        total_passes: levels.iter().map(|l| l.passes).sum(),
        total_seconds: levels.iter().map(|l| l.seconds).sum(),
        levels,
        block_size: block,
        block_baseline_passes: block_baseline_passes(fine_dims, block),
    }
}

/// Mean `|TDF|` jump between voxel pairs straddling the block seams at
/// multiples of `block` along x and z. `None` if the grid has no seam.
pub fn seam_score(tdf: &VoxelVolume, block: usize) -> Option<f64> {
    let d = tdf.dims();
    let (mut sum, mut n) = (0.0f64, 0usize);
    for z in 0..d.z {
        for y in 0..d.y {
            for x in 0..d.x {
                let v = tdf.get(x, y, z);
                if x > 0 && x % block == 0 {
                    sum += (v - tdf.get(x - 1, y, z)).abs() as f64;
                    n += 1;
                }
                if z > 0 && z % block == 0 {
                    sum += (v - tdf.get(x, y, z - 1)).abs() as f64;
                    n += 1;
                }
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Flat metric table, written as `key = value` text or JSON. Undefined values stay `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub values: BTreeMap<String, Option<f64>>,
}

impl MetricsReport {
    pub fn insert(&mut self, key: impl Into<String>, value: Option<f64>) {
        self.values.insert(key.into(), value);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied().flatten()
    }

    pub fn add_l1(&mut self, prefix: &str, e: &L1Errors) {
        for (k, v) in [("entire", e.entire), ("pred_surf", e.pred_surf), ("target_surf", e.target_surf), ("unk_space", e.unk_space)] {
            self.insert(format!("{prefix}.l1.{k}"), v);
        }
    }

    pub fn add_classes(&mut self, prefix: &str, s: &ClassScores) {
        for (c, v) in s.per_class.iter().enumerate() {
            let name = SemanticClass::from_id(c as u8).map_or("?", SemanticClass::name);
            self.insert(format!("{prefix}.{name}"), *v);
        }
        self.insert(format!("{prefix}.avg"), s.average);
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            match v {
                Some(x) => writeln!(s, "{k} = {x:.6}"),
                None => writeln!(s, "{k} = n/a"),
            }
            .expect("writing to a string");
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.values)?)
    }
}
