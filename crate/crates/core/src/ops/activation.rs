use crate::error::Result;
use crate::tensor::{Scalar, Tensor4};

pub fn relu<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Masks `grad_out` wherever `input ≤ 0`.
pub fn relu_backward<T: Scalar>(input: &Tensor4<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    grad_out.require_dims(input.dims(), "relu_backward")?;
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor4::from_vec(input.dims(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims;

    fn t(v: &[f32]) -> Tensor4<f32> {
        Tensor4::from_vec(Dims::new(1, 1, 1, v.len()), v.to_vec()).unwrap()
    }

    #[test]
    fn forward_and_backward() {
        assert_eq!(relu(&t(&[-1.0, 0.0, 2.0])).data(), &[0.0, 0.0, 2.0]);
        let neg = t(&[-3.0, -0.5]);
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
        let g = relu_backward(&neg, &t(&[1.0, 1.0])).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
        assert_eq!(relu_backward(&t(&[3.0]), &t(&[5.0])).unwrap().data(), &[5.0]);
        // gradient at exactly zero is zero
        assert_eq!(relu_backward(&t(&[0.0]), &t(&[5.0])).unwrap().data(), &[0.0]);
    }
}
