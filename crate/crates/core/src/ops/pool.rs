use crate::error::{Error, Result};
use crate::tensor::{Dims, Scalar, Tensor4};

/// Argmax positions recorded by [`maxpool2x2`], one flat input index per
/// output element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_dims: Dims,
    pub output_dims: Dims,
    pub idx: Vec<usize>,
}

/// 2×2 max-pool with stride 2. Ties go to the first element in row-major
/// window order.
pub fn maxpool2x2<T: Scalar>(input: &Tensor4<T>) -> Result<(Tensor4<T>, PoolIndices)> {
    let d = input.dims();
    if !d.h.is_multiple_of(2) || !d.w.is_multiple_of(2) {
        return Err(Error::dim(format!(
            "maxpool2x2: spatial dims must be even, got {d}"
        )));
    }
    let od = d.with_hw(d.h / 2, d.w / 2);
    let mut out = Vec::with_capacity(od.len());
    let mut idx = Vec::with_capacity(od.len());
    let src = input.data();
    for n in 0..d.n {
        for c in 0..d.c {
            let base = input.index(n, c, 0, 0);
            for oy in 0..od.h {
                for ox in 0..od.w {
                    let top = base + 2 * oy * d.w + 2 * ox;
                    let mut best = top;
                    for cand in [top + 1, top + d.w, top + d.w + 1] {
                        if src[cand] > src[best] {
                            best = cand;
                        }
                    }
                    out.push(src[best]);
                    idx.push(best);
                }
            }
        }
    }
    Ok((
        Tensor4::from_vec(od, out)?,
        PoolIndices {
            input_dims: d,
            output_dims: od,
            idx,
        },
    ))
}

/// Routes each upstream gradient to the argmax cell it came from.
pub fn maxpool2x2_backward<T: Scalar>(
    idx: &PoolIndices,
    grad_out: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    grad_out.require_dims(idx.output_dims, "maxpool2x2_backward")?;
    let mut grad = Tensor4::zeros(idx.input_dims);
    let dst = grad.data_mut();
    for (&i, &g) in idx.idx.iter().zip(grad_out.data()) {
        dst[i] += g;
    }
    Ok(grad)
}
