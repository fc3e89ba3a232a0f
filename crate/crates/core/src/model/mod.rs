//! Encoder, six-stage refinement decoder, and the deep-supervision loss.

mod config;
mod graph;
mod loss;
mod params;
mod targets;

pub use config::{ModelConfig, ENCODER_STAGES, INPUT_MULTIPLE, NUM_STAGES};
pub use graph::{
    encoder_forward, model_backward, model_forward, refine_stage, ForwardPass, GraphCache,
    StageOutputs,
};
pub use loss::{sum_stage_losses, total_loss, LossOutput};
pub use params::{init_params, ModelParams, Param, ParamGrads, ParamSet};
pub use targets::{downsampled_targets, resize_nearest};
