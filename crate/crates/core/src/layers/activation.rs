use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.max_with_zero()
}

/// Gradient passes only where `x > 0`.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != dy.shape() {
        return Err(Error::ShapeMismatch {
            expected: x.shape().dims(),
            got: dy.shape().dims(),
        });
    }
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

/// Max-subtracted softmax over the channels of a `(N, C, 1, 1)` tensor.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.shape().dims();
    if h != 1 || w != 1 {
        return Err(Error::ShapeMismatch {
            expected: [n, c, 1, 1],
            got: x.shape().dims(),
        });
    }
    let mut out = Vec::with_capacity(n * c);
    for row in x.data().chunks_exact(c) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - m).exp()).collect();
        let total: T = exps.iter().copied().sum();
        out.extend(exps.into_iter().map(|e| e / total));
    }
    Tensor::from_vec(x.shape(), out)
}
