//! Stride-1 2-D convolution lowered to matrix products (im2col).

use crate::error::{Error, Result};
use crate::layers::gemm::{matmul_acc, matmul_at_acc, matmul_bt_acc};
use crate::tensor::{Scalar, Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Padding {
    /// Zero padding that preserves spatial size. Odd overhang goes bottom/right.
    Same,
    Valid,
}

impl Padding {
    pub fn as_str(&self) -> &'static str {
        match self {
            Padding::Same => "same",
            Padding::Valid => "valid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kh: usize,
    pub kw: usize,
    pub padding: Padding,
}

impl ConvSpec {
    /// Square kernels of size 1, 3 or 5 only.
    pub fn new(out_channels: usize, kernel: usize, padding: Padding) -> Result<Self> {
        if ![1, 3, 5].contains(&kernel) {
            return Err(Error::InvalidConfig(format!(
                "unsupported kernel {kernel}x{kernel}; expected 1x1, 3x3 or 5x5"
            )));
        }
        if out_channels == 0 {
            return Err(Error::InvalidConfig("convolution needs at least one filter".into()));
        }
        Ok(ConvSpec {
            out_channels,
            kh: kernel,
            kw: kernel,
            padding,
        })
    }

    /// Top/left padding.
    pub fn pad_before(&self) -> (usize, usize) {
        match self.padding {
            Padding::Same => ((self.kh - 1) / 2, (self.kw - 1) / 2),
            Padding::Valid => (0, 0),
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        match self.padding {
            Padding::Same => Ok((h, w)),
            Padding::Valid => {
                if h < self.kh || w < self.kw {
                    Err(Error::SpatialTooSmall {
                        h,
                        w,
                        kh: self.kh,
                        kw: self.kw,
                    })
                } else {
                    Ok((h - self.kh + 1, w - self.kw + 1))
                }
            }
        }
    }

    pub fn weight_shape(&self, in_channels: usize) -> Result<Shape> {
        Shape::new(self.out_channels, in_channels, self.kh, self.kw)
    }

    pub fn param_count(&self, in_channels: usize) -> usize {
        self.out_channels * in_channels * self.kh * self.kw + self.out_channels
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1
    }
}

pub struct ConvGrads<T> {
    pub dx: Tensor<T>,
    pub dw: Vec<T>,
    pub db: Vec<T>,
}

fn check_inputs<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &[T], spec: &ConvSpec) -> Result<()> {
    let xs = x.shape();
    let expected = spec.weight_shape(xs.c())?;
    if weight.shape().n() != spec.out_channels || weight.shape().h() != spec.kh || weight.shape().w() != spec.kw {
        return Err(Error::ShapeMismatch {
            expected: expected.dims(),
            got: weight.shape().dims(),
        });
    }
    if weight.shape().c() != xs.c() {
        return Err(Error::ChannelMismatch {
            expected: weight.shape().c(),
            got: xs.c(),
        });
    }
    if bias.len() != spec.out_channels {
        return Err(Error::DataLength {
            expected: spec.out_channels,
            got: bias.len(),
        });
    }
    Ok(())
}

/// Per-sample input extents `(c, h, w)` and output extents `(ho, wo)`.
#[derive(Clone, Copy)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
}

/// Lays out every receptive field of one sample as a column:
/// `col[(c·kh + u)·kw + v][i·wo + j] = x[c, i+u−pt, j+v−pl]`.
fn im2col<T: Scalar>(x: &[T], g: Geom, spec: &ConvSpec, col: &mut [T]) {
    let Geom { c, h, w, ho, wo } = g;
    let (pt, pl) = spec.pad_before();
    let p = ho * wo;
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for u in 0..spec.kh {
            for v in 0..spec.kw {
                let row = &mut col[((ch * spec.kh + u) * spec.kw + v) * p..][..p];
                for i in 0..ho {
                    let dst = &mut row[i * wo..(i + 1) * wo];
                    let si = i + u;
                    if si < pt || si - pt >= h {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[(si - pt) * w..(si - pt + 1) * w];
                    // Columns j with 0 <= j + v - pl < w.
                    let j_lo = pl.saturating_sub(v).min(wo);
                    let j_hi = (w + pl).saturating_sub(v).min(wo).max(j_lo);
                    dst[..j_lo].fill(T::zero());
                    dst[j_hi..].fill(T::zero());
                    if j_hi > j_lo {
                        let s0 = j_lo + v - pl;
                        dst[j_lo..j_hi].copy_from_slice(&src[s0..s0 + (j_hi - j_lo)]);
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], g: Geom, spec: &ConvSpec, dx: &mut [T]) {
    let Geom { c, h, w, ho, wo } = g;
    let (pt, pl) = spec.pad_before();
    let p = ho * wo;
    for ch in 0..c {
        let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        for u in 0..spec.kh {
            for v in 0..spec.kw {
                let row = &col[((ch * spec.kh + u) * spec.kw + v) * p..][..p];
                for i in 0..ho {
                    let si = i + u;
                    if si < pt || si - pt >= h {
                        continue;
                    }
                    let src = &row[i * wo..(i + 1) * wo];
                    let j_lo = pl.saturating_sub(v).min(wo);
                    let j_hi = (w + pl).saturating_sub(v).min(wo).max(j_lo);
                    if j_hi == j_lo {
                        continue;
                    }
                    let s0 = j_lo + v - pl;
                    let dst = &mut plane[(si - pt) * w + s0..][..j_hi - j_lo];
                    for (d, &s) in dst.iter_mut().zip(&src[j_lo..j_hi]) {
                        *d = *d + s;
                    }
                }
            }
        }
    }
}

/// `y[n,o,i,j] = b[o] + Σ_{c,u,v} w[o,c,u,v] · x_pad[n,c,i+u,j+v]`
pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &[T], spec: &ConvSpec) -> Result<Tensor<T>> {
    check_inputs(x, weight, bias, spec)?;
    let [n, c, h, w] = x.shape().dims();
    let (ho, wo) = spec.output_hw(h, w)?;
    let out_shape = Shape::new(n, spec.out_channels, ho, wo)?;
    let mut y = Tensor::zeros(out_shape);
    let k = c * spec.kh * spec.kw;
    let p = ho * wo;
    let mut col = if spec.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); k * p]
    };
    for s in 0..n {
        let xs = x.sample(s);
        let ys = y.sample_mut(s);
        for (o, &b) in bias.iter().enumerate() {
            ys[o * p..(o + 1) * p].fill(b);
        }
        let col_ref: &[T] = if spec.is_pointwise() {
            xs
        } else {
            im2col(xs, Geom { c, h, w, ho, wo }, spec, &mut col);
            &col
        };
        matmul_acc(weight.data(), col_ref, ys, spec.out_channels, k, p);
    }
    Ok(y)
}

/// Exact gradients of [`conv2d_forward`] with respect to input, weights and bias.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    spec: &ConvSpec,
    dy: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let [n, c, h, w] = x.shape().dims();
    if weight.shape().c() != c {
        return Err(Error::ChannelMismatch {
            expected: weight.shape().c(),
            got: c,
        });
    }
    let (ho, wo) = spec.output_hw(h, w)?;
    let expected = Shape::new(n, spec.out_channels, ho, wo)?;
    if dy.shape() != expected {
        return Err(Error::ShapeMismatch {
            expected: expected.dims(),
            got: dy.shape().dims(),
        });
    }
    let o = spec.out_channels;
    let k = c * spec.kh * spec.kw;
    let p = ho * wo;
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = vec![T::zero(); o * k];
    let mut db = vec![T::zero(); o];
    let mut col = vec![T::zero(); k * p];
    let mut dcol = vec![T::zero(); k * p];
    for s in 0..n {
        let dys = dy.sample(s);
        for (oc, d) in db.iter_mut().enumerate() {
            *d = *d + dys[oc * p..(oc + 1) * p].iter().copied().sum::<T>();
        }
        if spec.is_pointwise() {
            matmul_bt_acc(dys, x.sample(s), &mut dw, o, p, k);
            matmul_at_acc(weight.data(), dys, dx.sample_mut(s), o, k, p);
        } else {
            im2col(x.sample(s), Geom { c, h, w, ho, wo }, spec, &mut col);
            matmul_bt_acc(dys, &col, &mut dw, o, p, k);
            dcol.fill(T::zero());
            matmul_at_acc(weight.data(), dys, &mut dcol, o, k, p);
            col2im(&dcol, Geom { c, h, w, ho, wo }, spec, dx.sample_mut(s));
        }
    }
    Ok(ConvGrads { dx, dw, db })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(n: usize, c: usize, h: usize, w: usize, v: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(Shape::new(n, c, h, w).unwrap(), v).unwrap()
    }

    #[test]
    fn pointwise_affine() {
        let x = t(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let wt = t(1, 1, 1, 1, vec![2.0]);
        let spec = ConvSpec::new(1, 1, Padding::Same).unwrap();
        let y = conv2d_forward(&x, &wt, &[1.0], &spec).unwrap();
        assert_eq!(y.data(), &[3.0, 5.0, 7.0, 9.0]);
    }

    #[test]
    fn same_padding_overlap_counts() {
        let x = t(1, 1, 3, 3, vec![1.0; 9]);
        let wt = t(1, 1, 3, 3, vec![1.0; 9]);
        let spec = ConvSpec::new(1, 3, Padding::Same).unwrap();
        let y = conv2d_forward(&x, &wt, &[0.0], &spec).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn valid_padding_output_size() {
        let spec = ConvSpec::new(32, 5, Padding::Valid).unwrap();
        assert_eq!(spec.output_hw(96, 96).unwrap(), (92, 92));
        assert_eq!(spec.output_hw(46, 46).unwrap(), (42, 42));
        assert!(matches!(spec.output_hw(4, 8), Err(Error::SpatialTooSmall { .. })));
    }

    #[test]
    fn unsupported_kernel_rejected() {
        assert!(ConvSpec::new(4, 9, Padding::Same).is_err());
        assert!(ConvSpec::new(0, 3, Padding::Same).is_err());
    }

    #[test]
    fn channel_mismatch_rejected() {
        let x = t(1, 2, 3, 3, vec![0.0; 18]);
        let wt = t(1, 1, 3, 3, vec![0.0; 9]);
        let spec = ConvSpec::new(1, 3, Padding::Same).unwrap();
        assert!(matches!(
            conv2d_forward(&x, &wt, &[0.0], &spec),
            Err(Error::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let x = t(1, 2, 4, 4, (0..32).map(|i| i as f64 * 0.1).collect());
        let wt = t(3, 2, 3, 3, (0..54).map(|i| (i as f64).sin()).collect());
        let spec = ConvSpec::new(3, 3, Padding::Same).unwrap();
        let dy = Tensor::zeros(Shape::new(1, 3, 4, 4).unwrap());
        let g = conv2d_backward(&x, &wt, &spec, &dy).unwrap();
        assert!(g.dx.data().iter().all(|&v| v == 0.0));
        assert!(g.dw.iter().all(|&v| v == 0.0));
        assert!(g.db.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pixel_chain_rule() {
        let x = t(1, 1, 1, 1, vec![3.0]);
        let wt = t(1, 1, 1, 1, vec![-2.0]);
        let spec = ConvSpec::new(1, 1, Padding::Same).unwrap();
        let dy = t(1, 1, 1, 1, vec![0.5]);
        let g = conv2d_backward(&x, &wt, &spec, &dy).unwrap();
        assert_eq!(g.dw, vec![1.5]);
        assert_eq!(g.dx.data(), &[-1.0]);
        assert_eq!(g.db, vec![0.5]);
    }

    #[test]
    fn backward_rejects_wrong_dy() {
        let x = t(1, 1, 4, 4, vec![0.0; 16]);
        let wt = t(1, 1, 3, 3, vec![0.0; 9]);
        let spec = ConvSpec::new(1, 3, Padding::Valid).unwrap();
        let dy = Tensor::zeros(Shape::new(1, 1, 4, 4).unwrap());
        assert!(conv2d_backward(&x, &wt, &spec, &dy).is_err());
    }
}
