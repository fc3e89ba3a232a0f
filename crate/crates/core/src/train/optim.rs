use crate::error::{Error, Result};
use crate::model::{ModelParams, ParamGrads, ParamSet};
use crate::tensor::Scalar;

/// Optimization hyperparameters. Defaults are the full-scale schedule;
/// [`TrainConfig::desk`] shortens it for small runs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Iterations between learning-rate drops.
    pub lr_step: u64,
    pub lr_gamma: f64,
    pub max_iters: u64,
    pub seed: u64,
    /// Weight the loss by median-frequency class balancing.
    pub class_balance: bool,
    pub log_every: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 10,
            base_lr: 0.001,
            momentum: 0.9,
            weight_decay: 0.0005,
            lr_step: 50_000,
            lr_gamma: 0.1,
            max_iters: 80_000,
            seed: 0,
            class_balance: false,
            log_every: 100,
            checkpoint_every: 5_000,
        }
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            base_lr: DESK_BASE_LR,
            max_iters: 2_000,
            lr_step: 1_250,
            log_every: 50,
            checkpoint_every: 500,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.base_lr > 0.0) || !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return bad("base_lr must be > 0 and momentum in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0");
        }
        if self.lr_step == 0 || !(self.lr_gamma > 0.0 && self.lr_gamma <= 1.0) {
            return bad("lr_step must be >= 1 and lr_gamma in (0, 1]");
        }
        if self.log_every == 0 || self.checkpoint_every == 0 {
            return bad("log_every and checkpoint_every must be >= 1");
        }
        Ok(())
    }
}

/// Base learning rate of the desk-scale preset.
pub const DESK_BASE_LR: f64 = 0.003;

/// Step decay: `base_lr · gamma^floor(iter / lr_step)`.
pub fn lr_schedule(cfg: &TrainConfig, iter: u64) -> f64 {
    let drops = (iter / cfg.lr_step).min(i32::MAX as u64) as i32;
    cfg.base_lr * cfg.lr_gamma.powi(drops)
}

/// Momentum buffers, one per parameter array, and the iteration count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState<T> {
    pub velocity: ParamSet<T>,
    pub iteration: u64,
}

impl<T: Scalar> OptState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        Self {
            velocity: params.zero_grads().values,
            iteration: 0,
        }
    }
}

/// Biases and batch-norm affine parameters are not decayed.
pub fn decays(path: &str) -> bool {
    !(path.ends_with(".bias") || path.ends_with(".gamma") || path.ends_with(".beta"))
}

/// Momentum SGD with the learning rate inside the velocity:
/// `v ← μ·v + lr·(g + λ·θ)`, `θ ← θ − v`.
pub fn sgd_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ParamGrads<T>,
    opt: &mut OptState<T>,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    let mu = T::from_f64_lossy(cfg.momentum);
    let lr = T::from_f64_lossy(lr);
    for (path, theta) in params.values.iter_mut() {
        let g = grads
            .values
            .get(path)
            .ok_or_else(|| Error::dim(format!("no gradient for {path}")))?
            .as_slice();
        let v = opt
            .velocity
            .get_mut(path)
            .ok_or_else(|| Error::dim(format!("no momentum buffer for {path}")))?
            .as_mut_slice();
        let theta = theta.as_mut_slice();
        if g.len() != theta.len() || v.len() != theta.len() {
            return Err(Error::dim(format!("shape mismatch in optimizer for {path}")));
        }
        let wd = T::from_f64_lossy(if decays(path) { cfg.weight_decay } else { 0.0 });
        for ((t, v), &g) in theta.iter_mut().zip(v.iter_mut()).zip(g) {
            *v = mu * *v + lr * (g + wd * *t);
            *t -= *v;
        }
    }
    Ok(())
}
