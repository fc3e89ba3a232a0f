use crate::error::{Error, Result};
use crate::labels::{LabelMap, IGNORE};
use crate::tensor::{Scalar, Tensor4};

/// Per-pixel softmax over the channel axis.
pub fn softmax_channels<T: Scalar>(logits: &Tensor4<T>) -> Tensor4<T> {
    let d = logits.dims();
    let p = d.plane();
    let mut out = logits.clone();
    let mut buf = vec![T::zero(); d.c];
    for n in 0..d.n {
        let base = n * d.c * p;
        for i in 0..p {
            let mut m = T::neg_infinity();
            for (c, b) in buf.iter_mut().enumerate() {
                *b = logits.data()[base + c * p + i];
                m = m.max(*b);
            }
            let mut s = T::zero();
            for b in buf.iter_mut() {
                *b = (*b - m).exp();
                s += *b;
            }
            for (c, &b) in buf.iter().enumerate() {
                out.data_mut()[base + c * p + i] = b / s;
            }
        }
    }
    out
}

fn check_targets<T: Scalar>(probs: &Tensor4<T>, target: &[LabelMap], weights: &[T]) -> Result<()> {
    let d = probs.dims();
    if target.len() != d.n {
        return Err(Error::dim(format!(
            "cross entropy: {} label maps for batch of {}",
            target.len(),
            d.n
        )));
    }
    if weights.len() != d.c {
        return Err(Error::dim(format!(
            "cross entropy: {} class weights for {} classes",
            weights.len(),
            d.c
        )));
    }
    for t in target {
        if t.height() != d.h || t.width() != d.w {
            return Err(Error::dim(format!(
                "cross entropy: label map {}x{} vs prediction {}x{}",
                t.height(),
                t.width(),
                d.h,
                d.w
            )));
        }
        if let Some(&bad) = t.data().iter().find(|&&v| v != IGNORE && usize::from(v) >= d.c) {
            return Err(Error::data(format!(
                "label {bad} out of range for {} classes",
                d.c
            )));
        }
    }
    Ok(())
}

/// Class-weighted cross entropy averaged over non-ignored pixels, with the
/// gradient taken with respect to the pre-softmax logits.
pub fn weighted_cross_entropy<T: Scalar>(
    probs: &Tensor4<T>,
    target: &[LabelMap],
    class_weights: &[T],
) -> Result<(f64, Tensor4<T>)> {
    check_targets(probs, target, class_weights)?;
    let d = probs.dims();
    let p = d.plane();
    let valid = target
        .iter()
        .map(|t| t.data().iter().filter(|&&v| v != IGNORE).count())
        .sum::<usize>();
    let mut grad = Tensor4::zeros(d);
    if valid == 0 {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / valid as f64;
    let tiny = T::min_positive_value();
    let mut loss = 0.0f64;
    for (n, t) in target.iter().enumerate() {
        let base = n * d.c * p;
        for (i, &y) in t.data().iter().enumerate() {
            if y == IGNORE {
                continue;
            }
            let y = usize::from(y);
            let w = class_weights[y];
            let py = probs.data()[base + y * p + i].max(tiny);
            loss += w.as_f64() * -py.as_f64().ln();
            let k = T::from_f64_lossy(w.as_f64() * scale);
            for c in 0..d.c {
                let j = base + c * p + i;
                let onehot = if c == y { T::one() } else { T::zero() };
                grad.data_mut()[j] = k * (probs.data()[j] - onehot);
            }
        }
    }
    Ok((loss * scale, grad))
}

/// `weighted_cross_entropy(softmax_channels(logits), ..)`.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor4<T>,
    target: &[LabelMap],
    class_weights: &[T],
) -> Result<(f64, Tensor4<T>)> {
    weighted_cross_entropy(&softmax_channels(logits), target, class_weights)
}
