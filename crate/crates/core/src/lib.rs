//! Tree-based regularization for multi-environment representation learning.

pub mod dataset;
pub mod env_tree;
pub mod error;
pub mod experiments;
pub mod identifiability;
pub mod io;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod simulator;
pub mod trainer;

pub use dataset::{DataView, MultiEnvDataset, Split, SplitFractions};
pub use env_tree::{ArcId, EnvId, EnvTree};
pub use error::{Result, TbrError};
pub use model::{Batch, BaselineParams, Freeze, LossBreakdown, Model, ModelKind, ModelParams, TbrParams};
pub use numerics::{Matrix, ParamSet};
pub use simulator::{DeltaMode, GroundTruth, SimConfig};
pub use trainer::{TrainConfig, TrainReport};

/// Chapters of the guide in `book/`, compiled here so their snippets run as doc-tests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/environment-trees.md")]
    pub mod environment_trees {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub mod simulation {}
    #[doc = include_str!("../../../book/src/training.md")]
    pub mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub mod evaluation {}
    #[doc = include_str!("../../../book/src/identifiability.md")]
    pub mod identifiability {}
    #[doc = include_str!("../../../book/src/recipes.md")]
    pub mod recipes {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    pub mod file_formats {}
}
