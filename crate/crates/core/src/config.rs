//! Pipeline configuration: one TOML document carrying every tunable default.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::mesh::DEFAULT_ISO;
use crate::model::TrainConfig;
use crate::sampler::SamplerConfig;
use crate::scan::{TrajectoryConfig, TrajectoryStats};
use crate::scene::SceneParams;
use crate::eval::SURFACE_THRESHOLD;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenesConfig {
    pub train: usize,
    pub test: usize,
    /// Template for every generated room; the seed field is replaced per scene.
    pub params: SceneParams,
}

impl Default for ScenesConfig {
    fn default() -> Self {
        Self {
            train: 50,
            test: 6,
            params: SceneParams::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub trajectory: TrajectoryConfig,
    pub stats: TrajectoryStats,
    /// Random views per training scene used to refit the EMD statistics;
    /// zero keeps the configured ones.
    pub bootstrap_views: usize,
    /// Also write every rendered depth frame next to the trajectory.
    pub save_depth: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    /// Free space added around each room before voxelizing, meters.
    pub margin: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { margin: 0.2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Distance below which a voxel counts as surface, voxels.
    pub surface_threshold: f32,
    /// Block edge of the fixed-window baseline, fine voxels.
    pub block_size: usize,
    /// Iso level of exported meshes, voxels.
    pub mesh_iso: f32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            surface_threshold: SURFACE_THRESHOLD,
            block_size: 32,
            mesh_iso: DEFAULT_ISO,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Root seed; per-scene and per-stage seeds derive from it.
    pub seed: u64,
    pub scenes: ScenesConfig,
    pub scan: ScanConfig,
    pub fusion: FusionConfig,
    pub grid: GridConfig,
    pub sampler: SamplerConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenes.params.validate()?;
        self.scan.stats.validate()?;
        self.sampler.validate()?;
        self.train.validate()?;
        if self.scenes.train == 0 {
            return Err(Error::Config("at least one training scene is required".into()));
        }
        if !(self.grid.margin >= 0.0) || self.eval.block_size == 0 || !(self.eval.surface_threshold > 0.0) {
            return Err(Error::Config("grid margin, block size and surface threshold must be positive".into()));
        }
        if !(self.fusion.weight_cap > 0.0) {
            return Err(Error::Config("fusion weight cap must be positive".into()));
        }
        Ok(())
    }
}

/// Short stable digest of any serializable value.
pub fn content_hash(value: &impl Serialize) -> Result<String> {
    let json = serde_json::to_vec(value)?;
    Ok(hex::encode(&Sha256::digest(&json)[..8]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HeadMode, Layout};

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
        for key in ["[scenes.params]", "[scan.trajectory]", "[scan.stats]", "[fusion]", "[sampler]", "[train]", "[eval]"] {
            assert!(text.contains(key), "missing {key}");
        }
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = PipelineConfig::from_toml("seed = 7\n[train]\nsteps = 5\nlayout = \"fine_only\"\nhead = { mode = \"probabilistic\", bins = 32 }\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.steps, 5);
        assert_eq!(cfg.train.layout, Layout::FineOnly);
        assert_eq!(cfg.train.head, HeadMode::Probabilistic { bins: 32 });
        assert_eq!(cfg.sampler, SamplerConfig::default());
        assert_eq!(cfg.fusion.weight_cap, 128.0);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(PipelineConfig::from_toml("[train]\nhead = { mode = \"probabilistic\", bins = 5 }\n").is_err());
        assert!(PipelineConfig::from_toml("[scenes]\ntrain = 0\n").is_err());
        assert!(PipelineConfig::from_toml("[sampler]\nkeep_structural = 1.5\n").is_err());
        assert!(PipelineConfig::from_toml("bogus = [").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(content_hash(&a).unwrap(), content_hash(&b).unwrap());
        b.train.steps += 1;
        assert_ne!(content_hash(&a.train).unwrap(), content_hash(&b.train).unwrap());
        assert_eq!(content_hash(&a).unwrap().len(), 16);
    }
}
