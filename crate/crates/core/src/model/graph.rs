//! Forward and backward passes over the full encoder/decoder graph.

use super::config::{ModelConfig, ENCODER_STAGES, NUM_STAGES};
use super::params::{dec_conv, dec_skip, enc_block, ModelParams, ParamGrads};
use crate::error::{Error, Result};
use crate::ops::{
    batchnorm_backward, batchnorm_infer, batchnorm_train, concat_channels, conv3x3,
    conv3x3_backward, maxpool2x2, maxpool2x2_backward, relu, relu_backward, split_backward,
    upsample_bilinear2x, upsample_bilinear2x_backward, BnCache, BnMode, PoolIndices,
};
use crate::tensor::{Scalar, Tensor4};

/// The six label maps plus the five encoder skip features.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutputs<T> {
    /// `s[k-1]` is label map `s_k`; all have `num_classes` channels.
    pub s: Vec<Tensor4<T>>,
    /// `f[k-1]` is the pre-pool output of encoder stage `k`.
    pub f: Vec<Tensor4<T>>,
}

/// Intermediates of a conv → BN → ReLU block.
#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    prefix: String,
    input: Tensor4<T>,
    bn: BnCache<T>,
    pre_act: Tensor4<T>,
}

/// Everything a train-mode forward keeps for [`model_backward`].
#[derive(Debug, Clone)]
pub struct GraphCache<T> {
    enc: Vec<Vec<BlockCache<T>>>,
    pools: Vec<PoolIndices>,
    bottom: Tensor4<T>,
    /// indexed by decoder stage − 2
    skips: Vec<BlockCache<T>>,
    concats: Vec<Tensor4<T>>,
}

impl<T> GraphCache<T> {
    /// Batch statistics per BN layer path, in graph order.
    pub fn bn_caches(&self) -> impl Iterator<Item = (String, &BnCache<T>)> {
        self.enc
            .iter()
            .flatten()
            .chain(&self.skips)
            .map(|b| (format!("{}.bn", b.prefix), &b.bn))
    }
}

/// Output of [`model_forward`]. `cache` is present only in train mode.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub outputs: StageOutputs<T>,
    pub cache: Option<GraphCache<T>>,
}

impl<T: Scalar> ModelParams<T> {
    /// Folds the batch statistics of a train-mode forward into every BN
    /// layer's running averages.
    pub fn update_running_stats(&mut self, cache: &GraphCache<T>) -> Result<()> {
        for (path, bn) in cache.bn_caches() {
            self.bn
                .get_mut(&path)
                .ok_or_else(|| Error::Usage(format!("missing batch-norm state {path}")))?
                .update(bn);
        }
        Ok(())
    }
}

fn conv<T: Scalar>(p: &ModelParams<T>, prefix: &str, x: &Tensor4<T>) -> Result<Tensor4<T>> {
    conv3x3(
        x,
        p.tensor(&format!("{prefix}.weight"))?,
        p.vector(&format!("{prefix}.bias"))?,
    )
}

/// conv3x3 → BN → ReLU.
fn block_forward<T: Scalar>(
    p: &ModelParams<T>,
    prefix: &str,
    x: &Tensor4<T>,
    mode: BnMode,
) -> Result<(Tensor4<T>, Option<BlockCache<T>>)> {
    let z = conv(p, &block_conv_path(prefix), x)?;
    let bn_path = format!("{prefix}.bn");
    let gamma = p.vector(&format!("{bn_path}.gamma"))?;
    let beta = p.vector(&format!("{bn_path}.beta"))?;
    let state = p.bn_state(&bn_path)?;
    match mode {
        BnMode::Train => {
            let (a, bn) = batchnorm_train(&z, gamma, beta, state.eps)?;
            let out = relu(&a);
            Ok((
                out,
                Some(BlockCache {
                    prefix: prefix.to_string(),
                    input: x.clone(),
                    bn,
                    pre_act: a,
                }),
            ))
        }
        BnMode::Infer => Ok((relu(&batchnorm_infer(&z, gamma, beta, state)?), None)),
    }
}

/// Encoder blocks keep their conv at `<prefix>.weight`, skip transforms at
/// `<prefix>.conv.weight`.
fn block_conv_path(prefix: &str) -> String {
    if prefix.starts_with("enc.") {
        prefix.to_string()
    } else {
        format!("{prefix}.conv")
    }
}

fn block_backward<T: Scalar>(
    p: &ModelParams<T>,
    cache: &BlockCache<T>,
    grad_out: &Tensor4<T>,
    grads: &mut ParamGrads<T>,
) -> Result<Tensor4<T>> {
    let g = relu_backward(&cache.pre_act, grad_out)?;
    let bn_path = format!("{}.bn", cache.prefix);
    let bn = batchnorm_backward(p.vector(&format!("{bn_path}.gamma"))?, &cache.bn, &g)?;
    grads.accumulate(&format!("{bn_path}.gamma"), &bn.gamma);
    grads.accumulate(&format!("{bn_path}.beta"), &bn.beta);
    let conv_path = block_conv_path(&cache.prefix);
    conv_backward(p, &conv_path, &cache.input, &bn.input, grads)
}

fn conv_backward<T: Scalar>(
    p: &ModelParams<T>,
    prefix: &str,
    input: &Tensor4<T>,
    grad_out: &Tensor4<T>,
    grads: &mut ParamGrads<T>,
) -> Result<Tensor4<T>> {
    let wpath = format!("{prefix}.weight");
    let g = conv3x3_backward(input, p.tensor(&wpath)?, grad_out)?;
    grads.accumulate(&wpath, g.weight.data());
    grads.accumulate(&format!("{prefix}.bias"), &g.bias);
    Ok(g.input)
}

struct EncoderPass<T> {
    f: Vec<Tensor4<T>>,
    bottom: Tensor4<T>,
    blocks: Vec<Vec<BlockCache<T>>>,
    pools: Vec<PoolIndices>,
}

fn encoder_pass<T: Scalar>(
    p: &ModelParams<T>,
    config: &ModelConfig,
    image: &Tensor4<T>,
    mode: BnMode,
) -> Result<EncoderPass<T>> {
    let d = image.dims();
    if d.c != 3 || d.h != config.input_h || d.w != config.input_w {
        return Err(Error::dim(format!(
            "image dims {d} do not match config (n, 3, {}, {})",
            config.input_h, config.input_w
        )));
    }
    let mut x = image.clone();
    let mut f = Vec::with_capacity(ENCODER_STAGES);
    let mut blocks = Vec::with_capacity(ENCODER_STAGES);
    let mut pools = Vec::with_capacity(ENCODER_STAGES);
    for stage in 1..=ENCODER_STAGES {
        let mut caches = Vec::new();
        for j in 0..config.convs_per_stage {
            let prefix = enc_block(stage, j);
            let (y, c) = block_forward(p, &prefix, &x, mode)?;
            caches.extend(c);
            x = y;
        }
        let (pooled, idx) = maxpool2x2(&x)?;
        f.push(x);
        x = pooled;
        blocks.push(caches);
        pools.push(idx);
    }
    Ok(EncoderPass {
        f,
        bottom: x,
        blocks,
        pools,
    })
}

/// Runs the encoder; returns the five skip features and the 1/32-scale
/// bottom feature map.
pub fn encoder_forward<T: Scalar>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    image: &Tensor4<T>,
    mode: BnMode,
) -> Result<(Vec<Tensor4<T>>, Tensor4<T>)> {
    let e = encoder_pass(params, config, image, mode)?;
    Ok((e.f, e.bottom))
}

fn refine_pass<T: Scalar>(
    p: &ModelParams<T>,
    stage: usize,
    s_prev: &Tensor4<T>,
    f_skip: &Tensor4<T>,
    mode: BnMode,
) -> Result<(Tensor4<T>, Option<(BlockCache<T>, Tensor4<T>)>)> {
    let u = upsample_bilinear2x(s_prev);
    let prefix = dec_skip(stage);
    let (m, skip_cache) = block_forward(p, &prefix, f_skip, mode)?;
    let (du, dm) = (u.dims(), m.dims());
    if du.h != dm.h || du.w != dm.w || du.n != dm.n {
        return Err(Error::dim(format!(
            "refinement stage {stage}: upsampled label map {du} and skip feature {dm} disagree"
        )));
    }
    let cat = concat_channels(&u, &m)?;
    let s = conv(p, &dec_conv(stage), &cat)?;
    Ok((s, skip_cache.map(|c| (c, cat))))
}

/// One refinement module: upsample the previous label map, transform the
/// skip feature with conv → BN → ReLU, concatenate, and convolve back to
/// `num_classes` channels. `stage` is in `2..=6`.
pub fn refine_stage<T: Scalar>(
    params: &ModelParams<T>,
    stage: usize,
    s_prev: &Tensor4<T>,
    f_skip: &Tensor4<T>,
    mode: BnMode,
) -> Result<Tensor4<T>> {
    if !(2..=NUM_STAGES).contains(&stage) {
        return Err(Error::Usage(format!("refinement stage {stage} out of 2..=6")));
    }
    Ok(refine_pass(params, stage, s_prev, f_skip, mode)?.0)
}

/// Full forward pass producing all six label maps. In train mode BN uses
/// batch statistics and the cache for [`model_backward`] is kept; running
/// statistics are not touched (see [`ModelParams::update_running_stats`]).
pub fn model_forward<T: Scalar>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    image: &Tensor4<T>,
    mode: BnMode,
) -> Result<ForwardPass<T>> {
    let enc = encoder_pass(params, config, image, mode)?;
    let mut s = Vec::with_capacity(NUM_STAGES);
    s.push(conv(params, &dec_conv(1), &enc.bottom)?);
    let mut skips = Vec::new();
    let mut concats = Vec::new();
    for stage in 2..=NUM_STAGES {
        let f_skip = &enc.f[NUM_STAGES - stage];
        let (out, cache) = refine_pass(params, stage, &s[stage - 2], f_skip, mode)?;
        if let Some((skip, cat)) = cache {
            skips.push(skip);
            concats.push(cat);
        }
        s.push(out);
    }
    let cache = match mode {
        BnMode::Train => Some(GraphCache {
            enc: enc.blocks,
            pools: enc.pools,
            bottom: enc.bottom,
            skips,
            concats,
        }),
        BnMode::Infer => None,
    };
    Ok(ForwardPass {
        outputs: StageOutputs { s, f: enc.f },
        cache,
    })
}

/// Backpropagates per-stage logit gradients through the whole graph.
/// Encoder parameters collect contributions from all six heads.
pub fn model_backward<T: Scalar>(
    params: &ModelParams<T>,
    pass: &ForwardPass<T>,
    stage_grads: &[Tensor4<T>],
) -> Result<ParamGrads<T>> {
    let cache = pass.cache.as_ref().ok_or_else(|| {
        Error::Usage("model_backward needs the cache of a train-mode forward".into())
    })?;
    if stage_grads.len() != NUM_STAGES {
        return Err(Error::Usage(format!(
            "expected {NUM_STAGES} stage gradients, got {}",
            stage_grads.len()
        )));
    }
    for (g, s) in stage_grads.iter().zip(&pass.outputs.s) {
        g.require_dims(s.dims(), "stage gradient")?;
    }
    let num_classes = pass.outputs.s[0].dims().c;
    let mut grads = params.zero_grads();
    let mut skip_grads: Vec<Option<Tensor4<T>>> = vec![None; ENCODER_STAGES];

    let mut g = stage_grads[NUM_STAGES - 1].clone();
    for stage in (2..=NUM_STAGES).rev() {
        let i = stage - 2;
        let g_cat = conv_backward(params, &dec_conv(stage), &cache.concats[i], &g, &mut grads)?;
        let (g_u, g_m) = split_backward(&g_cat, num_classes)?;
        let g_f = block_backward(params, &cache.skips[i], &g_m, &mut grads)?;
        skip_grads[NUM_STAGES - stage] = Some(g_f);
        let mut g_prev = upsample_bilinear2x_backward(&g_u)?;
        g_prev.add_assign(&stage_grads[stage - 2])?;
        g = g_prev;
    }
    let mut g = conv_backward(params, &dec_conv(1), &cache.bottom, &g, &mut grads)?;

    for stage in (1..=ENCODER_STAGES).rev() {
        let mut g_f = maxpool2x2_backward(&cache.pools[stage - 1], &g)?;
        if let Some(skip) = &skip_grads[stage - 1] {
            g_f.add_assign(skip)?;
        }
        g = g_f;
        for block in cache.enc[stage - 1].iter().rev() {
            g = block_backward(params, block, &g, &mut grads)?;
        }
    }
    Ok(grads)
}
