use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnState<T> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    /// Weight kept on the old running value at each update.
    pub momentum: T,
    pub eps: T,
}

impl<T: Scalar> BnState<T> {
    pub fn new(channels: usize, momentum: T, eps: T) -> Self {
        assert!(eps > T::zero(), "batch-norm eps must be positive");
        Self {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum,
            eps,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    /// Folds the batch statistics of a train-mode forward into the
    /// running averages.
    pub fn update(&mut self, cache: &BnCache<T>) {
        let m = self.momentum;
        let keep = T::one() - m;
        for (r, &b) in self.running_mean.iter_mut().zip(&cache.mean) {
            *r = m * *r + keep * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(&cache.var) {
            *r = m * *r + keep * b;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// What a train-mode forward keeps for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BnCache<T> {
    pub xhat: Tensor4<T>,
    pub mean: Vec<T>,
    /// Biased (population) batch variance.
    pub var: Vec<T>,
    pub inv_std: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnGrads<T> {
    pub input: Tensor4<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

fn check_affine<T: Scalar>(input: &Tensor4<T>, gamma: &[T], beta: &[T]) -> Result<()> {
    let c = input.dims().c;
    if gamma.len() != c || beta.len() != c {
        return Err(Error::dim(format!(
            "batchnorm: {c} channels but gamma/beta have {}/{}",
            gamma.len(),
            beta.len()
        )));
    }
    Ok(())
}

/// Normalizes with batch statistics over `(n, h, w)` per channel.
pub fn batchnorm_train<T: Scalar>(
    input: &Tensor4<T>,
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> Result<(Tensor4<T>, BnCache<T>)> {
    check_affine(input, gamma, beta)?;
    let d = input.dims();
    let count = (d.n * d.plane()) as f64;
    let mut mean = Vec::with_capacity(d.c);
    let mut var = Vec::with_capacity(d.c);
    let mut inv_std = Vec::with_capacity(d.c);
    for c in 0..d.c {
        let mut s = 0.0f64;
        for n in 0..d.n {
            s += input.plane(n, c).iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let mu = s / count;
        let mut sq = 0.0f64;
        for n in 0..d.n {
            sq += input
                .plane(n, c)
                .iter()
                .map(|v| {
                    let e = v.as_f64() - mu;
                    e * e
                })
                .sum::<f64>();
        }
        let v = sq / count;
        mean.push(T::from_f64_lossy(mu));
        var.push(T::from_f64_lossy(v));
        inv_std.push(T::from_f64_lossy(1.0 / (v + eps.as_f64()).sqrt()));
    }

    let mut xhat = Tensor4::zeros(d);
    let mut out = Tensor4::zeros(d);
    let p = d.plane();
    for n in 0..d.n {
        for c in 0..d.c {
            let start = input.index(n, c, 0, 0);
            let src = input.plane(n, c);
            let xh = &mut xhat.data_mut()[start..start + p];
            for (h, &x) in xh.iter_mut().zip(src) {
                *h = (x - mean[c]) * inv_std[c];
            }
            let o = &mut out.data_mut()[start..start + p];
            for (o, &h) in o.iter_mut().zip(&xhat.data()[start..start + p]) {
                *o = gamma[c] * h + beta[c];
            }
        }
    }
    Ok((
        out,
        BnCache {
            xhat,
            mean,
            var,
            inv_std,
        },
    ))
}

/// Normalizes with the running statistics.
pub fn batchnorm_infer<T: Scalar>(
    input: &Tensor4<T>,
    gamma: &[T],
    beta: &[T],
    state: &BnState<T>,
) -> Result<Tensor4<T>> {
    check_affine(input, gamma, beta)?;
    let d = input.dims();
    if state.channels() != d.c {
        return Err(Error::dim(format!(
            "batchnorm: state has {} channels, input {d}",
            state.channels()
        )));
    }
    let scale: Vec<T> = (0..d.c)
        .map(|c| gamma[c] / (state.running_var[c] + state.eps).sqrt())
        .collect();
    let mut out = input.clone();
    let p = d.plane();
    for (i, chunk) in out.data_mut().chunks_mut(p).enumerate() {
        let c = i % d.c;
        let mu = state.running_mean[c];
        for v in chunk {
            *v = (*v - mu) * scale[c] + beta[c];
        }
    }
    Ok(out)
}

/// Mode-dispatching batch norm. In train mode the running statistics in
/// `state` are updated and the cache for the backward pass is returned.
pub fn batchnorm<T: Scalar>(
    input: &Tensor4<T>,
    gamma: &[T],
    beta: &[T],
    state: &mut BnState<T>,
    mode: BnMode,
) -> Result<(Tensor4<T>, Option<BnCache<T>>)> {
    match mode {
        BnMode::Train => {
            if state.channels() != input.dims().c {
                return Err(Error::dim("batchnorm: state/input channel mismatch"));
            }
            let (out, cache) = batchnorm_train(input, gamma, beta, state.eps)?;
            state.update(&cache);
            Ok((out, Some(cache)))
        }
        BnMode::Infer => Ok((batchnorm_infer(input, gamma, beta, state)?, None)),
    }
}

/// Gradients through the batch mean and variance of a train-mode forward.
pub fn batchnorm_backward<T: Scalar>(
    gamma: &[T],
    cache: &BnCache<T>,
    grad_out: &Tensor4<T>,
) -> Result<BnGrads<T>> {
    let d = cache.xhat.dims();
    grad_out.require_dims(d, "batchnorm_backward")?;
    if gamma.len() != d.c {
        return Err(Error::dim("batchnorm_backward: gamma length"));
    }
    let count = (d.n * d.plane()) as f64;
    let mut g_gamma = Vec::with_capacity(d.c);
    let mut g_beta = Vec::with_capacity(d.c);
    let mut grad = Tensor4::zeros(d);
    for c in 0..d.c {
        let (mut sg, mut sgx) = (0.0f64, 0.0f64);
        for n in 0..d.n {
            for (&g, &xh) in grad_out.plane(n, c).iter().zip(cache.xhat.plane(n, c)) {
                sg += g.as_f64();
                sgx += g.as_f64() * xh.as_f64();
            }
        }
        g_beta.push(T::from_f64_lossy(sg));
        g_gamma.push(T::from_f64_lossy(sgx));
        // dx = gamma·inv_std/M · (M·g − Σg − x̂·Σ(g·x̂))
        let k = gamma[c].as_f64() * cache.inv_std[c].as_f64() / count;
        for n in 0..d.n {
            let start = grad.index(n, c, 0, 0);
            let dst = &mut grad.data_mut()[start..start + d.plane()];
            for ((o, &g), &xh) in dst
                .iter_mut()
                .zip(grad_out.plane(n, c))
                .zip(cache.xhat.plane(n, c))
            {
                let v = k * (count * g.as_f64() - sg - xh.as_f64() * sgx);
                *o = T::from_f64_lossy(v);
            }
        }
    }
    Ok(BnGrads {
        input: grad,
        gamma: g_gamma,
        beta: g_beta,
    })
}
