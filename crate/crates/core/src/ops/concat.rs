use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

/// Stacks `a` and `b` along the channel axis, `a` first.
pub fn concat_channels<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    let (da, db) = (a.dims(), b.dims());
    if da.n != db.n || da.h != db.h || da.w != db.w {
        return Err(Error::dim(format!("concat_channels: {da} vs {db}")));
    }
    let mut data = Vec::with_capacity(da.len() + db.len());
    for n in 0..da.n {
        data.extend_from_slice(a.sample(n));
        data.extend_from_slice(b.sample(n));
    }
    Tensor4::from_vec(da.with_c(da.c + db.c), data)
}

/// Splits a concatenated gradient back into the parts for `a` (first
/// `c_a` channels) and `b`.
pub fn split_backward<T: Scalar>(
    grad_out: &Tensor4<T>,
    c_a: usize,
) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let d = grad_out.dims();
    if c_a == 0 || c_a >= d.c {
        return Err(Error::dim(format!(
            "split_backward: cannot split {} channels at {c_a}",
            d.c
        )));
    }
    let p = d.plane();
    let mut ga = Vec::with_capacity(d.n * c_a * p);
    let mut gb = Vec::with_capacity(d.n * (d.c - c_a) * p);
    for n in 0..d.n {
        let s = grad_out.sample(n);
        ga.extend_from_slice(&s[..c_a * p]);
        gb.extend_from_slice(&s[c_a * p..]);
    }
    Ok((
        Tensor4::from_vec(d.with_c(c_a), ga)?,
        Tensor4::from_vec(d.with_c(d.c - c_a), gb)?,
    ))
}
