use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Channel concatenation, `a`'s channels first.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n() != sb.n() || sa.h() != sb.h() || sa.w() != sb.w() {
        return Err(Error::ShapeMismatch {
            expected: [sa.n(), sb.c(), sa.h(), sa.w()],
            got: sb.dims(),
        });
    }
    let shape = Shape::new(sa.n(), sa.c() + sb.c(), sa.h(), sa.w())?;
    let mut data = Vec::with_capacity(shape.numel());
    for n in 0..sa.n() {
        data.extend_from_slice(a.sample(n));
        data.extend_from_slice(b.sample(n));
    }
    Tensor::from_vec(shape, data)
}

/// Inverse of [`concat_channels`]: the first `ca` channels and the rest.
pub fn split_channels<T: Scalar>(x: &Tensor<T>, ca: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let [n, c, h, w] = x.shape().dims();
    if ca == 0 || ca >= c {
        return Err(Error::InvalidConfig(format!("cannot split {c} channels at {ca}")));
    }
    let plane = h * w;
    let mut a = Vec::with_capacity(n * ca * plane);
    let mut b = Vec::with_capacity(n * (c - ca) * plane);
    for s in 0..n {
        let (left, right) = x.sample(s).split_at(ca * plane);
        a.extend_from_slice(left);
        b.extend_from_slice(right);
    }
    Ok((
        Tensor::from_vec(Shape::new(n, ca, h, w)?, a)?,
        Tensor::from_vec(Shape::new(n, c - ca, h, w)?, b)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_layout_and_split_inverse() {
        let sa = Shape::new(1, 4, 8, 8).unwrap();
        let a = Tensor::from_vec(sa, (0..256).map(|v| v as f32).collect()).unwrap();
        let b = Tensor::from_vec(sa, (0..256).map(|v| -(v as f32)).collect()).unwrap();
        let y = concat_channels(&a, &b).unwrap();
        assert_eq!(y.shape().dims(), [1, 8, 8, 8]);
        for k in 0..4 {
            assert_eq!(y.get(0, 4 + k, 3, 5), b.get(0, k, 3, 5));
            assert_eq!(y.get(0, k, 3, 5), a.get(0, k, 3, 5));
        }
        let (ra, rb) = split_channels(&y, 4).unwrap();
        assert_eq!(ra, a);
        assert_eq!(rb, b);
    }

    #[test]
    fn batched_concat() {
        let a = Tensor::from_vec(Shape::new(2, 1, 1, 1).unwrap(), vec![1.0f32, 2.0]).unwrap();
        let b = Tensor::from_vec(Shape::new(2, 2, 1, 1).unwrap(), vec![10.0f32, 11.0, 20.0, 21.0]).unwrap();
        let y = concat_channels(&a, &b).unwrap();
        assert_eq!(y.data(), &[1.0, 10.0, 11.0, 2.0, 20.0, 21.0]);
    }

    #[test]
    fn spatial_mismatch_rejected() {
        let a = Tensor::<f32>::zeros(Shape::new(1, 2, 4, 4).unwrap());
        let b = Tensor::<f32>::zeros(Shape::new(1, 2, 4, 2).unwrap());
        assert!(concat_channels(&a, &b).is_err());
    }
}
