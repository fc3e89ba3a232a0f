//! Finite-difference verification of every backward kernel and of the
//! end-to-end model gradient, all at `f64`.
//!
//! Per-op checks project the op output onto a random cotangent `R` and
//! compare the analytic gradient of `<R, op(x)>` with central differences,
//! element by element. The model check compares `grad · d` with a
//! directional central difference of the summed stage loss.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::labels::{LabelMap, IGNORE};
use crate::model::{
    downsampled_targets, init_params, model_backward, model_forward, total_loss, ModelConfig,
    ModelParams, ParamSet,
};
use crate::ops::{
    batchnorm_backward, batchnorm_train, concat_channels, conv3x3, conv3x3_backward, maxpool2x2,
    maxpool2x2_backward, relu, relu_backward, softmax_cross_entropy, split_backward,
    upsample_bilinear2x, upsample_bilinear2x_backward, BnMode,
};
use crate::tensor::{Dims, Tensor4};

/// Every differentiable kernel, in report order.
pub const OPS: [&str; 7] = [
    "conv3x3",
    "maxpool2x2",
    "relu",
    "batchnorm",
    "upsample_bilinear2x",
    "concat_channels",
    "softmax_cross_entropy",
];
pub const END_TO_END: &str = "model_backward";

pub const OP_TOLERANCE: f64 = 1e-6;
pub const OP_STEP: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-4;
pub const MODEL_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub instances: usize,
    /// Test hook: scale the analytic gradient of the named op by `1 + 1e-3`
    /// so the harness must flag it.
    pub fault: Option<String>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 20,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub ops: Vec<CheckResult>,
    pub end_to_end: CheckResult,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.ops.iter().all(CheckResult::passed) && self.end_to_end.passed()
    }

    pub fn failures(&self) -> Vec<&str> {
        self.ops
            .iter()
            .chain(std::iter::once(&self.end_to_end))
            .filter(|c| !c.passed())
            .map(|c| c.name.as_str())
            .collect()
    }
}

/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn uniform(rng: &mut ChaCha8Rng, dims: Dims) -> Tensor4<f64> {
    Tensor4::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0))
}

/// Fourth-order central difference of `<r, f(x)>` in coordinate `i` of
/// `x`. Output differences are taken elementwise before projecting.
fn fd_coord(
    x: &mut [f64],
    i: usize,
    r: &[f64],
    f: &mut dyn FnMut(&[f64]) -> Vec<f64>,
) -> f64 {
    let orig = x[i];
    let mut eval = |offset: f64| {
        x[i] = orig + offset;
        f(x)
    };
    let (p1, m1) = (eval(OP_STEP), eval(-OP_STEP));
    let (p2, m2) = (eval(2.0 * OP_STEP), eval(-2.0 * OP_STEP));
    x[i] = orig;
    let mut acc = 0.0;
    for j in 0..r.len() {
        acc += r[j] * (8.0 * (p1[j] - m1[j]) - (p2[j] - m2[j]));
    }
    acc / (12.0 * OP_STEP)
}

/// Max relative error between `analytic` and the finite differences of
/// `<r, f(x)>` over every coordinate of `x`.
fn compare(
    x: &[f64],
    analytic: &[f64],
    r: &[f64],
    mut f: impl FnMut(&[f64]) -> Vec<f64>,
) -> f64 {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| rel_err(analytic[i], fd_coord(&mut x, i, r, &mut f)))
        .fold(0.0, f64::max)
}

fn perturb(grad: &mut [f64], on: bool) {
    if on {
        for g in grad {
            *g *= 1.0 + 1e-3;
        }
    }
}

fn random_dims(rng: &mut ChaCha8Rng, even: bool) -> Dims {
    let mut side = |lo: usize, hi: usize| {
        let v = rng.random_range(lo..=hi);
        if even {
            2 * v
        } else {
            v
        }
    };
    let (h, w) = if even { (side(1, 3), side(1, 3)) } else { (side(1, 5), side(1, 5)) };
    Dims::new(rng.random_range(1..=2), rng.random_range(1..=3), h, w)
}

fn check_conv(rng: &mut ChaCha8Rng, fault: bool) -> Result<f64> {
    let d = random_dims(rng, false);
    let cout = rng.random_range(1..=3);
    let x = uniform(rng, d);
    let wd = Dims::new(cout, d.c, 3, 3);
    let w = uniform(rng, wd);
    let b: Vec<f64> = (0..cout).map(|_| rng.random_range(-1.0..1.0)).collect();
    let r = uniform(rng, d.with_c(cout));
    let mut g = conv3x3_backward(&x, &w, &r)?;
    perturb(g.input.data_mut(), fault);
    perturb(g.weight.data_mut(), fault);
    perturb(&mut g.bias, fault);

    let run = |x: &Tensor4<f64>, w: &Tensor4<f64>, b: &[f64]| conv3x3(x, w, b).unwrap().into_vec();
    let e_x = compare(x.data(), g.input.data(), r.data(), |v| {
        run(&Tensor4::from_vec(d, v.to_vec()).unwrap(), &w, &b)
    });
    let e_w = compare(w.data(), g.weight.data(), r.data(), |v| {
        run(&x, &Tensor4::from_vec(wd, v.to_vec()).unwrap(), &b)
    });
    let e_b = compare(&b, &g.bias, r.data(), |v| run(&x, &w, v));
    Ok(e_x.max(e_w).max(e_b))
}

fn check_maxpool(rng: &mut ChaCha8Rng, fault: bool) -> Result<f64> {
    let d = random_dims(rng, true);
    // distinct values spaced far wider than the step: no ties, no switches
    let mut ranks: Vec<usize> = (0..d.len()).collect();
    ranks.shuffle(rng);
    let scale = 2.0 / d.len() as f64;
    let x = Tensor4::from_vec(d, ranks.iter().map(|&k| k as f64 * scale - 1.0).collect())?;
    let (y, idx) = maxpool2x2(&x)?;
    let r = uniform(rng, y.dims());
    let mut g = maxpool2x2_backward(&idx, &r)?;
    perturb(g.data_mut(), fault);
    Ok(compare(x.data(), g.data(), r.data(), |v| {
        maxpool2x2(&Tensor4::from_vec(d, v.to_vec()).unwrap())
            .unwrap()
            .0
            .into_vec()
    }))
}

fn check_relu(rng: &mut ChaCha8Rng, fault: bool) -> Result<f64> {
    let d = random_dims(rng, false);
    // keep every input at least 0.1 away from the kink
    let x = Tensor4::from_fn(d, |_, _, _, _| {
        let m = rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    });
    let r = uniform(rng, d);
    let mut g = relu_backward(&x, &r)?;
    perturb(g.data_mut(), fault);
    Ok(compare(x.data(), g.data(), r.data(), |v| {
        relu(&Tensor4::from_vec(d, v.to_vec()).unwrap()).into_vec()
    }))
}

fn check_batchnorm(rng: &mut ChaCha8Rng, fault: bool) -> Result<f64> {
    let d = Dims::new(
        rng.random_range(2..=3),
        rng.random_range(1..=3),
        rng.random_range(2..=4),
        rng.random_range(2..=4),
    );
    let eps = 1e-5;
    let x = uniform(rng, d);
    let gamma: Vec<f64> = (0..d.c).map(|_| rng.random_range(0.5..1.5)).collect();
    let beta: Vec<f64> = (0..d.c).map(|_| rng.random_range(-1.0..1.0)).collect();
    let r = uniform(rng, d);
    let (_, cache) = batchnorm_train(&x, &gamma, &beta, eps)?;
    let mut g = batchnorm_backward(&gamma, &cache, &r)?;
    perturb(g.input.data_mut(), fault);
    perturb(&mut g.gamma, fault);
    perturb(&mut g.beta, fault);
    let run = |x: &Tensor4<f64>, ga: &[f64], be: &[f64]| {
        batchnorm_train(x, ga, be, eps).unwrap().0.into_vec()
    };
    let e_x = compare(x.data(), g.input.data(), r.data(), |v| {
        run(&Tensor4::from_vec(d, v.to_vec()).unwrap(), &gamma, &beta)
    });
    let e_g = compare(&gamma, &g.gamma, r.data(), |v| run(&x, v, &beta));
    let e_b = compare(&beta, &g.beta, r.data(), |v| run(&x, &gamma, v));
    Ok(e_x.max(e_g).max(e_b))
}

fn check_upsample(rng: &mut ChaCha8Rng, fault: bool) -> Result<f64> {
    let d = random_dims(rng, false);
    let x = uniform(rng, d);
    let r = uniform(rng, d.with_hw(2 * d.h, 2 * d.w));
    let mut g = upsample_bilinear2x_backward(&r)?;
    perturb(g.data_mut(), fault);
    Ok(compare(x.data(), g.data(), r.data(), |v| {
        upsample_bilinear2x(&Tensor4::from_vec(d, v.to_vec()).unwrap()).into_vec()
    }))
}

fn check_concat(rng: &mut ChaCha8Rng, fault: bool) -> Result<f64> {
    let da = random_dims(rng, false);
    let db = da.with_c(rng.random_range(1..=3));
    let a = uniform(rng, da);
    let b = uniform(rng, db);
    let r = uniform(rng, da.with_c(da.c + db.c));
    let (mut ga, mut gb) = split_backward(&r, da.c)?;
    perturb(ga.data_mut(), fault);
    perturb(gb.data_mut(), fault);
    let e_a = compare(a.data(), ga.data(), r.data(), |v| {
        concat_channels(&Tensor4::from_vec(da, v.to_vec()).unwrap(), &b)
            .unwrap()
            .into_vec()
    });
    let e_b = compare(b.data(), gb.data(), r.data(), |v| {
        concat_channels(&a, &Tensor4::from_vec(db, v.to_vec()).unwrap())
            .unwrap()
            .into_vec()
    });
    Ok(e_a.max(e_b))
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, h: usize, w: usize, c: usize) -> Vec<LabelMap> {
    (0..n)
        .map(|_| {
            let data = (0..h * w)
                .map(|_| {
                    if rng.random_bool(0.1) {
                        IGNORE
                    } else {
                        rng.random_range(0..c) as u8
                    }
                })
                .collect();
            LabelMap::from_vec(h, w, data).expect("sized to fit")
        })
        .collect()
}

fn check_cross_entropy(rng: &mut ChaCha8Rng, fault: bool) -> Result<f64> {
    let mut d = random_dims(rng, false);
    d.c = rng.random_range(2..=4);
    let x = uniform(rng, d);
    let labels = random_labels(rng, d.n, d.h, d.w, d.c);
    let weights: Vec<f64> = (0..d.c).map(|_| rng.random_range(0.5..2.0)).collect();
    let (_, mut g) = softmax_cross_entropy(&x, &labels, &weights)?;
    perturb(g.data_mut(), fault);
    // scalar objective: the projection is the loss itself
    Ok(compare(x.data(), g.data(), &[1.0], |v| {
        let t = Tensor4::from_vec(d, v.to_vec()).unwrap();
        vec![softmax_cross_entropy(&t, &labels, &weights).unwrap().0]
    }))
}

/// Runs `instances` random checks of one op; returns the worst error.
pub fn check_op(name: &str, opts: &GradcheckOptions) -> Result<CheckResult> {
    let salt = OPS.iter().position(|&o| o == name).unwrap_or(OPS.len()) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(0x9e37_79b9).wrapping_add(salt));
    let fault = opts.fault.as_deref() == Some(name);
    let mut worst = 0.0f64;
    for _ in 0..opts.instances {
        let e = match name {
            "conv3x3" => check_conv(&mut rng, fault)?,
            "maxpool2x2" => check_maxpool(&mut rng, fault)?,
            "relu" => check_relu(&mut rng, fault)?,
            "batchnorm" => check_batchnorm(&mut rng, fault)?,
            "upsample_bilinear2x" => check_upsample(&mut rng, fault)?,
            "concat_channels" => check_concat(&mut rng, fault)?,
            "softmax_cross_entropy" => check_cross_entropy(&mut rng, fault)?,
            other => {
                return Err(crate::Error::Usage(format!("unknown op {other}")));
            }
        };
        worst = worst.max(e);
    }
    Ok(CheckResult {
        name: name.to_string(),
        instances: opts.instances,
        max_rel_err: worst,
        tolerance: OP_TOLERANCE,
    })
}

/// The smallest configuration the network supports.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        num_classes: 3,
        input_h: 32,
        input_w: 32,
        encoder_channels: [2; 5],
        convs_per_stage: 1,
        ..ModelConfig::default()
    }
}

fn shifted(params: &ModelParams<f64>, dir: &ParamSet<f64>, step: f64) -> ModelParams<f64> {
    let mut p = params.clone();
    for (k, v) in p.values.iter_mut() {
        for (a, &d) in v.as_mut_slice().iter_mut().zip(dir[k].as_slice()) {
            *a += step * d;
        }
    }
    p
}

/// Directional finite-difference check of the summed stage loss on the
/// tiny configuration, batch of two, train-mode batch norm.
pub fn check_end_to_end(seed: u64, fault: bool) -> Result<CheckResult> {
    let cfg = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x05ee_de2e);
    let mut params = init_params::<f64>(&cfg, seed)?;
    // nonzero biases and non-unit BN affine so every parameter matters
    for (k, v) in params.values.iter_mut() {
        if !k.ends_with(".weight") {
            for a in v.as_mut_slice() {
                *a += rng.random_range(-0.2..0.2);
            }
        }
    }
    let image = uniform(&mut rng, Dims::new(2, 3, cfg.input_h, cfg.input_w));
    let labels = random_labels(&mut rng, 2, cfg.input_h, cfg.input_w, cfg.num_classes);
    let targets = downsampled_targets(&labels, &cfg)?;
    let weights: Vec<f64> = (0..cfg.num_classes).map(|_| rng.random_range(0.5..2.0)).collect();

    let loss_at = |p: &ModelParams<f64>| -> Result<f64> {
        let pass = model_forward(p, &cfg, &image, BnMode::Train)?;
        Ok(total_loss(&pass.outputs, &targets, &weights)?.total)
    };

    let pass = model_forward(&params, &cfg, &image, BnMode::Train)?;
    let loss = total_loss(&pass.outputs, &targets, &weights)?;
    let grads = model_backward(&params, &pass, &loss.grads)?;

    let mut dir = params.zero_grads().values;
    let mut norm = 0.0;
    for v in dir.values_mut() {
        for a in v.as_mut_slice() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *a = z;
            norm += z * z;
        }
    }
    let norm = norm.sqrt();
    for v in dir.values_mut() {
        for a in v.as_mut_slice() {
            *a /= norm;
        }
    }

    let mut analytic = grads.dot(&dir);
    if fault {
        analytic *= 1.0 + 1e-3;
    }
    let fd = (loss_at(&shifted(&params, &dir, MODEL_STEP))?
        - loss_at(&shifted(&params, &dir, -MODEL_STEP))?)
        / (2.0 * MODEL_STEP);
    Ok(CheckResult {
        name: END_TO_END.to_string(),
        instances: 1,
        max_rel_err: rel_err(analytic, fd),
        tolerance: MODEL_TOLERANCE,
    })
}

/// Every per-op check plus the end-to-end check.
pub fn run_suite(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let ops = OPS
        .iter()
        .map(|op| check_op(op, opts))
        .collect::<Result<Vec<_>>>()?;
    let end_to_end = check_end_to_end(opts.seed, opts.fault.as_deref() == Some(END_TO_END))?;
    Ok(GradcheckReport { ops, end_to_end })
}
