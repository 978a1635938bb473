//! Test-only oracles, independent of the engine's lowering.
#![allow(dead_code)]

use tinycnn::layers::Padding;

/// Direct sliding-window 2-D convolution in f64.
///
/// `x` is `(n, c, h, w)`, `weight` is `(out, c, k, k)`. Same padding puts
/// the extra row/column of padding at the bottom/right.
pub fn naive_conv(
    x: &[f64],
    [n, c, h, w]: [usize; 4],
    weight: &[f64],
    bias: &[f64],
    out: usize,
    k: usize,
    padding: Padding,
) -> (Vec<f64>, [usize; 4]) {
    let (pt, pl, oh, ow) = match padding {
        Padding::Same => ((k - 1) / 2, (k - 1) / 2, h, w),
        Padding::Valid => (0, 0, h + 1 - k, w + 1 - k),
    };
    let mut y = vec![0.0; n * out * oh * ow];
    for s in 0..n {
        for o in 0..out {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = bias[o];
                    for ci in 0..c {
                        for di in 0..k {
                            for dj in 0..k {
                                let yi = (i + di) as isize - pt as isize;
                                let xj = (j + dj) as isize - pl as isize;
                                if yi < 0 || xj < 0 || yi >= h as isize || xj >= w as isize {
                                    continue;
                                }
                                let xv = x[((s * c + ci) * h + yi as usize) * w + xj as usize];
                                let wv = weight[((o * c + ci) * k + di) * k + dj];
                                acc += xv * wv;
                            }
                        }
                    }
                    y[((s * out + o) * oh + i) * ow + j] = acc;
                }
            }
        }
    }
    (y, [n, out, oh, ow])
}

/// Mixed relative/absolute agreement used for the conv oracle comparison:
/// `|a − b| ≤ tol · max(1, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
