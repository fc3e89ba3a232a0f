use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Dims, Scalar, Tensor4};

/// Gradients of [`conv3x3`] with respect to its three inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor4<T>,
    pub weight: Tensor4<T>,
    pub bias: Vec<T>,
}

fn check_weight(input: Dims, weight: Dims) -> Result<(usize, usize)> {
    if weight.h != 3 || weight.w != 3 {
        return Err(Error::dim(format!(
            "conv3x3: kernel must be 3x3, got weight {weight}"
        )));
    }
    if weight.c != input.c {
        return Err(Error::dim(format!(
            "conv3x3: input has {} channels but weight expects {}",
            input.c, weight.c
        )));
    }
    Ok((weight.n, weight.c))
}

/// Unfolds one sample (`cin × h × w`) into `cin·9` rows of `h·w` columns;
/// row `i·9 + dy·3 + dx` holds the input shifted by `(dy−1, dx−1)`.
fn im2col<T: Scalar>(src: &[T], cin: usize, h: usize, w: usize, col: &mut [T]) {
    let hw = h * w;
    for i in 0..cin {
        let plane = &src[i * hw..(i + 1) * hw];
        for dy in 0..3 {
            for dx in 0..3 {
                let row = &mut col[((i * 9) + dy * 3 + dx) * hw..][..hw];
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + dy as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let srow = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match dx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&srow[..w - 1]);
                        }
                        1 => dst.copy_from_slice(srow),
                        _ => {
                            dst[..w - 1].copy_from_slice(&srow[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Transpose of [`im2col`]: scatter-adds the column rows back onto the planes.
fn col2im<T: Scalar>(col: &[T], cin: usize, h: usize, w: usize, dst: &mut [T]) {
    let hw = h * w;
    dst.fill(T::zero());
    for i in 0..cin {
        let plane = &mut dst[i * hw..(i + 1) * hw];
        for dy in 0..3 {
            for dx in 0..3 {
                let row = &col[((i * 9) + dy * 3 + dx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + dy as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let prow = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match dx {
                        0 => {
                            for (p, &s) in prow[..w - 1].iter_mut().zip(&src[1..]) {
                                *p += s;
                            }
                        }
                        1 => {
                            for (p, &s) in prow.iter_mut().zip(src) {
                                *p += s;
                            }
                        }
                        _ => {
                            for (p, &s) in prow[1..].iter_mut().zip(&src[..w - 1]) {
                                *p += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Stride-1, zero-padded 3×3 convolution. `weight` is `(cout, cin, 3, 3)`.
pub fn conv3x3<T: Scalar>(
    input: &Tensor4<T>,
    weight: &Tensor4<T>,
    bias: &[T],
) -> Result<Tensor4<T>> {
    let d = input.dims();
    let (cout, cin) = check_weight(d, weight.dims())?;
    if bias.len() != cout {
        return Err(Error::dim(format!(
            "conv3x3: bias has {} entries for {cout} output channels",
            bias.len()
        )));
    }
    input.require_finite("conv3x3 input")?;

    let hw = d.plane();
    let mut out = Tensor4::zeros(d.with_c(cout));
    out.data_mut()
        .par_chunks_mut(cout * hw)
        .zip(input.data().par_chunks(cin * hw))
        .for_each_init(
            || vec![T::zero(); cin * 9 * hw],
            |col, (dst, src)| {
                im2col(src, cin, d.h, d.w, col);
                for (o, plane) in dst.chunks_mut(hw).enumerate() {
                    plane.fill(bias[o]);
                }
                T::gemm(cout, cin * 9, hw, weight.data(), false, col, false, T::one(), dst);
            },
        );
    Ok(out)
}

/// Exact gradients of [`conv3x3`] given the upstream gradient `grad_out`.
pub fn conv3x3_backward<T: Scalar>(
    input: &Tensor4<T>,
    weight: &Tensor4<T>,
    grad_out: &Tensor4<T>,
) -> Result<ConvGrads<T>> {
    let d = input.dims();
    let (cout, cin) = check_weight(d, weight.dims())?;
    grad_out.require_dims(d.with_c(cout), "conv3x3_backward grad_out")?;
    let hw = d.plane();
    let k = cin * 9;

    let mut bias = vec![T::zero(); cout];
    for n in 0..d.n {
        for (o, b) in bias.iter_mut().enumerate() {
            *b += grad_out.plane(n, o).iter().fold(T::zero(), |acc, &g| acc + g);
        }
    }

    let mut grad_input = Tensor4::zeros(d);
    // per-sample weight gradients, reduced below in batch order
    let partial: Vec<Vec<T>> = grad_input
        .data_mut()
        .par_chunks_mut(cin * hw)
        .zip(input.data().par_chunks(cin * hw))
        .zip(grad_out.data().par_chunks(cout * hw))
        .map(|((gin, src), g)| {
            let mut col = vec![T::zero(); k * hw];
            im2col(src, cin, d.h, d.w, &mut col);
            let mut gw = vec![T::zero(); cout * k];
            T::gemm(cout, hw, k, g, false, &col, true, T::zero(), &mut gw);
            T::gemm(k, cout, hw, weight.data(), true, g, false, T::zero(), &mut col);
            col2im(&col, cin, d.h, d.w, gin);
            gw
        })
        .collect();

    let mut gw = vec![T::zero(); cout * k];
    for p in &partial {
        for (a, &b) in gw.iter_mut().zip(p) {
            *a += b;
        }
    }
    Ok(ConvGrads {
        input: grad_input,
        weight: Tensor4::from_vec(weight.dims(), gw)?,
        bias,
    })
}
