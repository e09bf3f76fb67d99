//! StairReward toolkit: prompt segmentation, stair crops, the StairReward
//! alignment score, MOS processing and the correlation benchmark.

pub mod benchmark;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod model;
pub mod mos;
pub mod prompt_seg;
pub mod scorer;
pub mod stair_crop;
pub mod stair_reward;

pub use error::{Error, Result};
pub use model::{
    AlignmentScore, AnnotatedImage, CorrelationTriple, ModelGroup, ModelTag, ParamVariant, PromptDecomposition,
    PromptText, Raster, StyleClass,
};
pub use prompt_seg::{default_rules, split_prompt, SegmentationRules};
pub use scorer::{ImageRef, Scorer, ScorerDescriptor};
pub use stair_crop::{crop_center_box, stair_lengths, StairSpec};
pub use stair_reward::{compute_stair_reward, morpheme_weights, AblationMode, StairBreakdown};
