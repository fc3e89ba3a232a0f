use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::optim::{lr_schedule, sgd_step, OptState};
use crate::config::RunConfig;
use crate::data::{frequencies_of, median_freq_weights, Dataset};
use crate::error::{Error, Result};
use crate::model::{
    downsampled_targets, init_params, model_backward, model_forward, total_loss, NUM_STAGES,
};
use crate::ops::BnMode;

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub iter: u64,
    pub lr: f64,
    pub loss: f64,
    pub per_stage: [f64; NUM_STAGES],
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "iter={} lr={:.4e} loss={:.8}", self.iter, self.lr, self.loss)?;
        for (k, l) in self.per_stage.iter().enumerate() {
            write!(f, " l{}={:.8}", k + 1, l)?;
        }
        Ok(())
    }
}

/// Receives log lines and intermediate/final checkpoints.
pub trait TrainObserver {
    fn on_log(&mut self, _record: &LogRecord) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _checkpoint: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

/// Discards everything.
pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRecord>,
    /// Loss of every iteration, in order.
    pub losses: Vec<(f64, [f64; NUM_STAGES])>,
}

/// Loss weights for a dataset: median-frequency balancing when enabled,
/// otherwise all ones.
pub fn class_weights(dataset: &Dataset, balance: bool) -> Result<Vec<f32>> {
    if !balance {
        return Ok(vec![1.0; dataset.num_classes]);
    }
    let freq = frequencies_of(&dataset.labels, dataset.num_classes)?;
    Ok(median_freq_weights(&freq)?
        .into_iter()
        .map(|w| w as f32)
        .collect())
}

/// Trains from a fresh initialization. Mini-batches come from a seeded
/// per-epoch shuffle; a trailing partial batch is dropped.
pub fn train_loop(
    config: &RunConfig,
    dataset: &Dataset,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    config.validate()?;
    let (mcfg, tcfg) = (&config.model, &config.train);
    if dataset.is_empty() {
        return Err(Error::data("training dataset is empty"));
    }
    if dataset.len() < tcfg.batch_size {
        return Err(Error::data(format!(
            "dataset has {} samples, fewer than batch_size {}",
            dataset.len(),
            tcfg.batch_size
        )));
    }
    if dataset.num_classes != mcfg.num_classes {
        return Err(Error::dim(format!(
            "dataset has {} classes, model config {}",
            dataset.num_classes, mcfg.num_classes
        )));
    }
    if dataset.image_size() != Some((mcfg.input_h, mcfg.input_w)) {
        return Err(Error::dim(format!(
            "dataset images are {:?}, model expects {}x{}",
            dataset.image_size(),
            mcfg.input_h,
            mcfg.input_w
        )));
    }

    let mean_pixel = dataset.mean_pixel()?;
    let weights = class_weights(dataset, tcfg.class_balance)?;
    let mut params = init_params::<f32>(mcfg, tcfg.seed)?;
    let mut opt = OptState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = dataset.len();

    let mut log = Vec::new();
    let mut losses = Vec::with_capacity(tcfg.max_iters as usize);
    for iter in 0..tcfg.max_iters {
        if cursor + tcfg.batch_size > dataset.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + tcfg.batch_size];
        cursor += tcfg.batch_size;

        let (images, labels) = dataset.batch(idx, &mean_pixel)?;
        let targets = downsampled_targets(&labels, mcfg)?;
        let pass = model_forward(&params, mcfg, &images, BnMode::Train)?;
        let loss = total_loss(&pass.outputs, &targets, &weights)?;
        let grads = model_backward(&params, &pass, &loss.grads)?;
        params.update_running_stats(pass.cache.as_ref().expect("train mode keeps a cache"))?;
        let lr = lr_schedule(tcfg, iter);
        sgd_step(&mut params, &grads, &mut opt, lr, tcfg)?;
        opt.iteration += 1;
        losses.push((loss.total, loss.per_stage));

        let last = iter + 1 == tcfg.max_iters;
        if iter % tcfg.log_every == 0 || last {
            let rec = LogRecord {
                iter,
                lr,
                loss: loss.total,
                per_stage: loss.per_stage,
            };
            observer.on_log(&rec)?;
            log.push(rec);
        }
        if (iter + 1) % tcfg.checkpoint_every == 0 && !last {
            observer.on_checkpoint(&Checkpoint {
                config: config.clone(),
                params: params.clone(),
                opt: opt.clone(),
                mean_pixel,
            })?;
        }
    }
    let checkpoint = Checkpoint {
        config: config.clone(),
        params,
        opt,
        mean_pixel,
    };
    observer.on_checkpoint(&checkpoint)?;
    Ok(TrainOutcome {
        checkpoint,
        log,
        losses,
    })
}
