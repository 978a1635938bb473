use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Argmax positions recorded by a 2x2 max-pool forward pass.
#[derive(Debug, Clone)]
pub struct PoolSwitches {
    input: Shape,
    output: Shape,
    /// Flat input offset chosen for each output element.
    index: Vec<usize>,
}

impl PoolSwitches {
    pub fn input_shape(&self) -> Shape {
        self.input
    }
    pub fn output_shape(&self) -> Shape {
        self.output
    }
    pub fn indices(&self) -> &[usize] {
        &self.index
    }
}

/// Output extent of a 2x2 pool; odd extents drop the last row/column.
pub fn pooled_hw(h: usize, w: usize) -> Result<(usize, usize)> {
    if h < 2 || w < 2 {
        return Err(Error::SpatialExhausted(format!(
            "cannot max-pool a {h}x{w} feature map"
        )));
    }
    Ok((h / 2, w / 2))
}

/// Non-overlapping 2x2 max-pool. Ties resolve to the first cell position in
/// row-major order.
pub fn maxpool2x2_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolSwitches)> {
    let [n, c, h, w] = x.shape().dims();
    let (ho, wo) = pooled_hw(h, w)?;
    let out_shape = Shape::new(n, c, ho, wo)?;
    let mut y = Vec::with_capacity(out_shape.numel());
    let mut index = Vec::with_capacity(out_shape.numel());
    let data = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..ho {
            for j in 0..wo {
                let top = base + 2 * i * w + 2 * j;
                let cells = [top, top + 1, top + w, top + w + 1];
                let mut best = cells[0];
                for &cell in &cells[1..] {
                    if data[cell] > data[best] {
                        best = cell;
                    }
                }
                y.push(data[best]);
                index.push(best);
            }
        }
    }
    Ok((
        Tensor::from_vec(out_shape, y)?,
        PoolSwitches {
            input: x.shape(),
            output: out_shape,
            index,
        },
    ))
}

/// Routes each upstream gradient to the recorded argmax position.
pub fn maxpool2x2_backward<T: Scalar>(switches: &PoolSwitches, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if dy.shape() != switches.output {
        return Err(Error::ShapeMismatch {
            expected: switches.output.dims(),
            got: dy.shape().dims(),
        });
    }
    let mut dx = Tensor::zeros(switches.input);
    let out = dx.data_mut();
    for (&idx, &g) in switches.index.iter().zip(dy.data()) {
        out[idx] = out[idx] + g;
    }
    Ok(dx)
}

/// Spatial mean per channel, producing `(N, C, 1, 1)`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.shape().dims();
    let hw = h * w;
    let inv = T::from_f64(1.0 / hw as f64);
    let data = x
        .data()
        .chunks_exact(hw)
        .map(|plane| plane.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::from_vec(Shape::new(n, c, 1, 1)?, data)
}

/// Spreads `dy / (H·W)` uniformly over each input plane.
pub fn global_avg_pool_backward<T: Scalar>(input: Shape, dy: &Tensor<T>) -> Result<Tensor<T>> {
    let expected = Shape::new(input.n(), input.c(), 1, 1)?;
    if dy.shape() != expected {
        return Err(Error::ShapeMismatch {
            expected: expected.dims(),
            got: dy.shape().dims(),
        });
    }
    let hw = input.h() * input.w();
    let inv = T::from_f64(1.0 / hw as f64);
    let mut dx = Tensor::zeros(input);
    for (plane, &g) in dx.data_mut().chunks_exact_mut(hw).zip(dy.data()) {
        plane.fill(g * inv);
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(h: usize, w: usize, v: Vec<f32>) -> Tensor<f32> {
        Tensor::from_vec(Shape::new(1, 1, h, w).unwrap(), v).unwrap()
    }

    #[test]
    fn pool_examples() {
        let (y, _) = maxpool2x2_forward(&t(2, 2, vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(y.data(), &[4.0]);

        let (y, _) = maxpool2x2_forward(&t(4, 4, vec![0.3; 16])).unwrap();
        assert_eq!(y.shape().dims(), [1, 1, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 0.3));

        let (y, _) = maxpool2x2_forward(&Tensor::<f32>::zeros(Shape::image96())).unwrap();
        assert_eq!(y.shape().dims(), [1, 1, 48, 48]);
    }

    #[test]
    fn odd_extent_is_floored() {
        let (y, _) = maxpool2x2_forward(&t(3, 5, (0..15).map(|v| v as f32).collect())).unwrap();
        assert_eq!(y.shape().dims(), [1, 1, 1, 2]);
        assert_eq!(y.data(), &[6.0, 8.0]);
        assert!(maxpool2x2_forward(&t(1, 4, vec![0.0; 4])).is_err());
    }

    #[test]
    fn backward_routes_to_argmax() {
        let (_, sw) = maxpool2x2_forward(&t(2, 2, vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        let dx = maxpool2x2_backward(&sw, &t(1, 1, vec![1.0])).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.0, 0.0, 1.0]);

        let (_, sw) = maxpool2x2_forward(&t(2, 2, vec![5.0; 4])).unwrap();
        let dx = maxpool2x2_backward(&sw, &t(1, 1, vec![1.0])).unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);

        let dx = maxpool2x2_backward(&sw, &t(1, 1, vec![0.0])).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_mismatched_switches() {
        let (_, sw) = maxpool2x2_forward(&t(4, 4, vec![0.0; 16])).unwrap();
        assert!(maxpool2x2_backward(&sw, &t(1, 1, vec![1.0])).is_err());
    }

    #[test]
    fn repeated_pooling_halves_96() {
        let mut x = Tensor::<f32>::zeros(Shape::image96());
        for k in 1..=5 {
            x = maxpool2x2_forward(&x).unwrap().0;
            assert_eq!(x.shape().h(), 96 >> k);
            assert_eq!(x.shape().w(), 96 >> k);
        }
    }

    #[test]
    fn gap_examples() {
        let y = global_avg_pool(&t(2, 2, vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(y.data(), &[2.5]);
        let y = global_avg_pool(&t(3, 3, vec![0.7; 9])).unwrap();
        assert!((y.data()[0] - 0.7).abs() < 1e-7);
        let dy = Tensor::from_vec(Shape::new(1, 1, 1, 1).unwrap(), vec![1.0f32]).unwrap();
        let dx = global_avg_pool_backward(Shape::new(1, 1, 2, 2).unwrap(), &dy).unwrap();
        assert_eq!(dx.data(), &[0.25; 4]);
    }
}
