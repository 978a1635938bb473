use crate::error::{Error, Result};
use crate::layers::gemm::{matmul_at_acc, matmul_bt_acc};
use crate::tensor::{Scalar, Shape, Tensor};

pub struct DenseGrads<T> {
    pub dx: Tensor<T>,
    pub dw: Vec<T>,
    pub db: Vec<T>,
}

/// Fully connected layer on the row-major `(C, H, W)` flattening of each
/// sample. `weight` is `out × in` row-major. Output is `(N, out, 1, 1)`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, weight: &[T], bias: &[T]) -> Result<Tensor<T>> {
    let n = x.shape().n();
    let fan_in = x.shape().sample_len();
    let out = bias.len();
    if weight.len() != out * fan_in {
        return Err(Error::DataLength {
            expected: out * fan_in,
            got: weight.len(),
        });
    }
    let mut y = Vec::with_capacity(n * out);
    for s in 0..n {
        let xs = x.sample(s);
        for (row, &b) in weight.chunks_exact(fan_in).zip(bias) {
            y.push(b + crate::layers::gemm::dot(row, xs));
        }
    }
    Tensor::from_vec(Shape::new(n, out, 1, 1)?, y)
}

pub fn dense_backward<T: Scalar>(x: &Tensor<T>, weight: &[T], dy: &Tensor<T>) -> Result<DenseGrads<T>> {
    let n = x.shape().n();
    let fan_in = x.shape().sample_len();
    let out = dy.shape().c();
    if dy.shape().n() != n || dy.shape().sample_len() != out || weight.len() != out * fan_in {
        return Err(Error::ShapeMismatch {
            expected: [n, weight.len() / fan_in.max(1), 1, 1],
            got: dy.shape().dims(),
        });
    }
    let mut dw = vec![T::zero(); out * fan_in];
    let mut db = vec![T::zero(); out];
    let mut dx = Tensor::zeros(x.shape());
    // dW = dyᵀ · x ; dx = dy · W
    let dyt: Vec<T> = {
        let mut t = vec![T::zero(); out * n];
        for s in 0..n {
            for o in 0..out {
                t[o * n + s] = dy.data()[s * out + o];
            }
        }
        t
    };
    let xt: Vec<T> = {
        let mut t = vec![T::zero(); fan_in * n];
        for s in 0..n {
            for (i, &v) in x.sample(s).iter().enumerate() {
                t[i * n + s] = v;
            }
        }
        t
    };
    matmul_bt_acc(&dyt, &xt, &mut dw, out, n, fan_in);
    for s in 0..n {
        let g = &dy.data()[s * out..(s + 1) * out];
        for (d, &v) in db.iter_mut().zip(g) {
            *d = *d + v;
        }
        matmul_at_acc(g, weight, dx.sample_mut(s), out, 1, fan_in);
    }
    Ok(DenseGrads { dx, dw, db })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights() {
        let x = Tensor::from_vec(Shape::new(1, 3, 1, 1).unwrap(), vec![1.0f32, -2.0, 3.5]).unwrap();
        let w = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let y = dense_forward(&x, &w, &[0.0; 3]).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(32 * 21 * 21 * 64 + 64, 903_232);
        assert_eq!(64 * 11 + 11, 715);
    }

    #[test]
    fn flatten_order_is_row_major() {
        let x = Tensor::from_vec(Shape::new(1, 2, 1, 2).unwrap(), vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        // picks element (c=1, h=0, w=0), flat index 2
        let y = dense_forward(&x, &[0.0, 0.0, 1.0, 0.0], &[0.5]).unwrap();
        assert_eq!(y.data(), &[3.5]);
    }

    #[test]
    fn backward_small_case() {
        let x = Tensor::from_vec(Shape::new(2, 2, 1, 1).unwrap(), vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let w = vec![0.5, -1.0];
        let dy = Tensor::from_vec(Shape::new(2, 1, 1, 1).unwrap(), vec![1.0, 2.0]).unwrap();
        let g = dense_backward(&x, &w, &dy).unwrap();
        assert_eq!(g.dw, vec![1.0 + 6.0, 2.0 + 8.0]);
        assert_eq!(g.db, vec![3.0]);
        assert_eq!(g.dx.data(), &[0.5, -1.0, 1.0, -2.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 3, 1, 1).unwrap());
        assert!(dense_forward(&x, &[0.0; 4], &[0.0; 2]).is_err());
    }
}
