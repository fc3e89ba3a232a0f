//! Confusion-matrix metrics, stage-wise evaluation, and prediction rendering.

mod confusion;
mod eval;

pub use confusion::{ConfusionMatrix, EvalReport};
pub use eval::{
    argmax_labels, default_palette, evaluate, predict_labels, render_prediction,
    stage_confusions, stagewise_eval, upsample_to,
};
