//! Dense rank-4 tensors in `(n, c, h, w)` layout.

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Real scalar the kernels run on. Training uses `f32`; gradient checks
/// rerun every kernel at `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    /// `c = alpha * a * b + beta * c` for row-major `a: m×k`, `b: k×n`.
    /// `a_t`/`b_t` request the transposed operand.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_t: bool,
        b: &[Self],
        b_t: bool,
        beta: Self,
        c: &mut [Self],
    );

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_t: bool,
                b: &[Self],
                b_t: bool,
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
                let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
                // SAFETY: the bounds above cover every index the strides reach.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Shape of a [`Tensor4`]: batch, channels, rows, cols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn with_c(self, c: usize) -> Self {
        Self { c, ..self }
    }

    pub fn with_hw(self, h: usize, w: usize) -> Self {
        Self { h, w, ..self }
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Rank-4 tensor, row-major with `w` fastest, then `h`, `c`, `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(dims: Dims) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: Dims, value: T) -> Self {
        assert!(
            dims.n > 0 && dims.c > 0 && dims.h > 0 && dims.w > 0,
            "tensor dims must be positive, got {dims}"
        );
        Self {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_vec(dims: Dims, data: Vec<T>) -> Result<Self> {
        if dims.n == 0 || dims.c == 0 || dims.h == 0 || dims.w == 0 {
            return Err(Error::dim(format!("tensor dims must be positive, got {dims}")));
        }
        if data.len() != dims.len() {
            return Err(Error::dim(format!(
                "data length {} does not match dims {dims}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for n in 0..dims.n {
            for c in 0..dims.c {
                for y in 0..dims.h {
                    for x in 0..dims.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Self { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.dims.c + c) * self.dims.h + y) * self.dims.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    /// Contiguous `h × w` plane for sample `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.dims.plane();
        let start = (n * self.dims.c + c) * p;
        &self.data[start..start + p]
    }

    /// Contiguous `c × h × w` block for sample `n`.
    pub fn sample(&self, n: usize) -> &[T] {
        let s = self.dims.c * self.dims.plane();
        &self.data[n * s..(n + 1) * s]
    }

    pub fn sample_tensor(&self, n: usize) -> Self {
        Self {
            dims: Dims { n: 1, ..self.dims },
            data: self.sample(n).to_vec(),
        }
    }

    /// Stacks single- or multi-sample tensors along the batch axis.
    pub fn stack(parts: &[Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::dim("cannot stack an empty list"))?;
        let mut n = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.dims.c != first.dims.c || p.dims.h != first.dims.h || p.dims.w != first.dims.w {
                return Err(Error::dim(format!(
                    "cannot stack {} with {}",
                    p.dims, first.dims
                )));
            }
            n += p.dims.n;
            data.extend_from_slice(&p.data);
        }
        Ok(Self {
            dims: Dims { n, ..first.dims },
            data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.require_dims(other.dims, "add")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn require_finite(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::data(format!(
                "{what}: non-finite value at flat index {i}"
            ))),
        }
    }

    pub fn require_dims(&self, dims: Dims, what: &str) -> Result<()> {
        if self.dims != dims {
            return Err(Error::dim(format!(
                "{what}: expected {dims}, got {}",
                self.dims
            )));
        }
        Ok(())
    }

    /// Converts every element to another scalar width.
    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self
                .data
                .iter()
                .map(|&v| U::from_f64_lossy(v.as_f64()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_w_fastest() {
        let t = Tensor4::<f32>::from_fn(Dims::new(2, 3, 4, 5), |n, c, y, x| {
            (n * 1000 + c * 100 + y * 10 + x) as f32
        });
        assert_eq!(t.data()[1], 1.0);
        assert_eq!(t.data()[5], 10.0);
        assert_eq!(t.data()[20], 100.0);
        assert_eq!(t.data()[60], 1000.0);
        assert_eq!(t.at(1, 2, 3, 4), 1234.0);
    }

    #[test]
    fn from_vec_checks_length_and_dims() {
        assert!(Tensor4::<f32>::from_vec(Dims::new(1, 1, 2, 2), vec![0.0; 3]).is_err());
        assert!(Tensor4::<f32>::from_vec(Dims::new(1, 0, 2, 2), vec![]).is_err());
        assert!(Tensor4::<f32>::from_vec(Dims::new(1, 1, 2, 2), vec![0.0; 4]).is_ok());
    }

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5).collect(); // 3x4
        let mut c = vec![0.0; 8];
        f64::gemm(2, 3, 4, &a, false, &b, false, 0.0, &mut c);
        for i in 0..2 {
            for j in 0..4 {
                let want: f64 = (0..3).map(|k| a[i * 3 + k] * b[k * 4 + j]).sum();
                assert_eq!(c[i * 4 + j], want);
            }
        }
        // a^T stored as 3x2, b^T stored as 4x3
        let at: Vec<f64> = (0..3).flat_map(|k| (0..2).map(move |i| (i * 3 + k) as f64)).collect();
        let bt: Vec<f64> = (0..4)
            .flat_map(|j| (0..3).map(move |k| ((k * 4 + j) as f64) * 0.5))
            .collect();
        let mut c2 = vec![0.0; 8];
        f64::gemm(2, 3, 4, &at, true, &bt, true, 0.0, &mut c2);
        assert_eq!(c, c2);
    }
}
