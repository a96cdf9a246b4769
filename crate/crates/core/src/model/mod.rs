//! The completion model: group networks, their heads, hierarchical
//! inference and training.

pub mod groups;
pub mod head;
pub mod hierarchy;
pub mod network;
pub mod train;

pub use groups::{partition_groups, VoxelGroup, GROUP_COUNT};
pub use head::HeadMode;
pub use hierarchy::{LevelModel, LevelPrediction, ModelHierarchy, PassLedger, PassRecord, Task};
pub use network::{GroupNetwork, InputKind, NetInputs, NetOutput, Widths};
pub use train::{
    plan_crops, train_hierarchy, train_level, Conditioning, CropPlan, Layout, LevelTrainReport, SceneLevels, SceneSource, TrainConfig,
};
