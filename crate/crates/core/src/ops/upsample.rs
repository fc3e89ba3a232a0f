use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

/// Interpolation taps along one axis when doubling `src_len`:
/// `(lo, hi, frac)` per destination index, half-pixel centers, clamped.
fn taps(src_len: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * src_len)
        .map(|dst| {
            let s = ((dst as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (src_len - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src_len - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

/// Bilinear 2× upsampling with half-pixel centers and edge clamping.
pub fn upsample_bilinear2x<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    let d = input.dims();
    let od = d.with_hw(2 * d.h, 2 * d.w);
    let ty = taps(d.h);
    let tx: Vec<(usize, usize, T)> = taps(d.w)
        .into_iter()
        .map(|(a, b, f)| (a, b, T::from_f64_lossy(f)))
        .collect();
    let mut out = Tensor4::zeros(od);
    let op = od.plane();
    for (k, dst) in out.data_mut().chunks_mut(op).enumerate() {
        let src = &input.data()[k * d.plane()..(k + 1) * d.plane()];
        for (y, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = T::from_f64_lossy(fy);
            let (r0, r1) = (&src[y0 * d.w..][..d.w], &src[y1 * d.w..][..d.w]);
            for (x, &(x0, x1, fx)) in tx.iter().enumerate() {
                // lerp form keeps constant fields exact
                let top = r0[x0] + fx * (r0[x1] - r0[x0]);
                let bot = r1[x0] + fx * (r1[x1] - r1[x0]);
                dst[y * od.w + x] = top + fy * (bot - top);
            }
        }
    }
    out
}

/// Transpose of [`upsample_bilinear2x`]: scatters each destination
/// gradient back onto its four source taps.
pub fn upsample_bilinear2x_backward<T: Scalar>(grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    let od = grad_out.dims();
    if !od.h.is_multiple_of(2) || !od.w.is_multiple_of(2) {
        return Err(Error::dim(format!(
            "upsample_bilinear2x_backward: gradient dims {od} are not a 2x upsample"
        )));
    }
    let d = od.with_hw(od.h / 2, od.w / 2);
    let ty = taps(d.h);
    let tx: Vec<(usize, usize, T)> = taps(d.w)
        .into_iter()
        .map(|(a, b, f)| (a, b, T::from_f64_lossy(f)))
        .collect();
    let mut grad = Tensor4::zeros(d);
    let p = d.plane();
    for (k, dst) in grad.data_mut().chunks_mut(p).enumerate() {
        let g = &grad_out.data()[k * od.plane()..(k + 1) * od.plane()];
        for (y, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = T::from_f64_lossy(fy);
            let gy0 = T::one() - fy;
            for (x, &(x0, x1, fx)) in tx.iter().enumerate() {
                let v = g[y * od.w + x];
                let gx0 = T::one() - fx;
                dst[y0 * d.w + x0] += v * gy0 * gx0;
                dst[y0 * d.w + x1] += v * gy0 * fx;
                dst[y1 * d.w + x0] += v * fy * gx0;
                dst[y1 * d.w + x1] += v * fy * fx;
            }
        }
    }
    Ok(grad)
}
