use super::config::NUM_STAGES;
use super::graph::StageOutputs;
use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::ops::softmax_cross_entropy;
use crate::tensor::{Scalar, Tensor4};

/// Summed deep-supervision loss with its per-stage parts and the gradient
/// of the total with respect to each stage's logits.
#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    pub total: f64,
    pub per_stage: [f64; NUM_STAGES],
    pub grads: Vec<Tensor4<T>>,
}

/// Adds the stage losses in stage order; `total_loss` uses exactly this.
pub fn sum_stage_losses(per_stage: &[f64; NUM_STAGES]) -> f64 {
    per_stage.iter().fold(0.0, |acc, &l| acc + l)
}

/// Cross entropy of every label map against its resized ground truth,
/// summed over the six stages.
pub fn total_loss<T: Scalar>(
    stages: &StageOutputs<T>,
    targets: &[Vec<LabelMap>],
    class_weights: &[T],
) -> Result<LossOutput<T>> {
    if stages.s.len() != NUM_STAGES || targets.len() != NUM_STAGES {
        return Err(Error::dim(format!(
            "expected {NUM_STAGES} stages and target levels, got {} and {}",
            stages.s.len(),
            targets.len()
        )));
    }
    let mut per_stage = [0.0; NUM_STAGES];
    let mut grads = Vec::with_capacity(NUM_STAGES);
    for (k, (s, t)) in stages.s.iter().zip(targets).enumerate() {
        let (l, g) = softmax_cross_entropy(s, t, class_weights)?;
        per_stage[k] = l;
        grads.push(g);
    }
    Ok(LossOutput {
        total: sum_stage_losses(&per_stage),
        per_stage,
        grads,
    })
}
