//! Batch normalization over either the channel axis or, in the
//! parameter-count compatible mode, the width axis.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BnMode {
    /// One statistic per channel, normalized over `(N, H, W)`.
    ChannelAxis,
    /// One statistic per position of the last axis, normalized over `(N, C, H)`.
    /// Gives `2·W` trainable parameters.
    WidthAxis,
}

impl BnMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BnMode::ChannelAxis => "channel",
            BnMode::WidthAxis => "width",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "channel" | "channel_axis" | "channel-axis" => Some(BnMode::ChannelAxis),
            "width" | "width_axis" | "width-axis" => Some(BnMode::WidthAxis),
            _ => None,
        }
    }

    /// Length of the parameter vectors for an input of `shape`.
    pub fn axis_len(&self, shape: Shape) -> usize {
        match self {
            BnMode::ChannelAxis => shape.c(),
            BnMode::WidthAxis => shape.w(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchNormSpec {
    pub mode: BnMode,
    pub epsilon: f64,
    pub momentum: f64,
}

impl BatchNormSpec {
    pub const EPSILON: f64 = 1e-5;
    pub const MOMENTUM: f64 = 0.99;

    pub fn new(mode: BnMode) -> Self {
        BatchNormSpec {
            mode,
            epsilon: Self::EPSILON,
            momentum: Self::MOMENTUM,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnParams<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Scalar> BnParams<T> {
    /// γ = 1, β = 0, running mean 0, running variance 1.
    pub fn identity(len: usize) -> Self {
        BnParams {
            gamma: vec![T::one(); len],
            beta: vec![T::zero(); len],
            running_mean: vec![T::zero(); len],
            running_var: vec![T::one(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }
}

/// Statistics saved by a train-phase forward pass.
#[derive(Debug, Clone, Default)]
pub struct BnCache<T> {
    state: Option<BnState<T>>,
}

#[derive(Debug, Clone)]
struct BnState<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    group: usize,
}

impl<T> BnCache<T> {
    pub fn new() -> Self {
        BnCache { state: None }
    }
    pub fn is_filled(&self) -> bool {
        self.state.is_some()
    }
}

#[inline]
fn axis_index(mode: BnMode, shape: Shape, flat: usize) -> usize {
    match mode {
        BnMode::ChannelAxis => (flat / (shape.h() * shape.w())) % shape.c(),
        BnMode::WidthAxis => flat % shape.w(),
    }
}

fn check_axis<T: Scalar>(x: &Tensor<T>, p: &BnParams<T>, spec: &BatchNormSpec) -> Result<usize> {
    let len = spec.mode.axis_len(x.shape());
    if p.len() != len || p.beta.len() != len || p.running_mean.len() != len || p.running_var.len() != len {
        return Err(Error::AxisMismatch {
            expected: p.len(),
            got: len,
        });
    }
    Ok(len)
}

/// Train phase normalizes with batch statistics, updates the running
/// statistics and fills `cache`; infer phase applies the running statistics.
pub fn batchnorm_forward<T: Scalar>(
    x: &Tensor<T>,
    p: &mut BnParams<T>,
    spec: &BatchNormSpec,
    phase: Phase,
    cache: &mut BnCache<T>,
) -> Result<Tensor<T>> {
    let len = check_axis(x, p, spec)?;
    let shape = x.shape();
    let eps = T::from_f64(spec.epsilon);
    match phase {
        Phase::Infer => {
            let scale: Vec<T> = (0..len).map(|l| p.gamma[l] / (p.running_var[l] + eps).sqrt()).collect();
            let data = x
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let l = axis_index(spec.mode, shape, i);
                    scale[l] * (v - p.running_mean[l]) + p.beta[l]
                })
                .collect();
            Tensor::from_vec(shape, data)
        }
        Phase::Train => {
            let group = shape.numel() / len;
            let inv_group = T::from_f64(1.0 / group as f64);
            let mut mean = vec![T::zero(); len];
            for (i, &v) in x.data().iter().enumerate() {
                let l = axis_index(spec.mode, shape, i);
                mean[l] = mean[l] + v;
            }
            mean.iter_mut().for_each(|m| *m = *m * inv_group);
            let mut var = vec![T::zero(); len];
            for (i, &v) in x.data().iter().enumerate() {
                let l = axis_index(spec.mode, shape, i);
                let d = v - mean[l];
                var[l] = var[l] + d * d;
            }
            var.iter_mut().for_each(|s| *s = *s * inv_group);
            let inv_std: Vec<T> = var.iter().map(|&s| T::one() / (s + eps).sqrt()).collect();

            let mut xhat = Vec::with_capacity(shape.numel());
            let mut y = Vec::with_capacity(shape.numel());
            for (i, &v) in x.data().iter().enumerate() {
                let l = axis_index(spec.mode, shape, i);
                let xh = (v - mean[l]) * inv_std[l];
                xhat.push(xh);
                y.push(p.gamma[l] * xh + p.beta[l]);
            }

            let mom = T::from_f64(spec.momentum);
            let keep = T::one() - mom;
            for l in 0..len {
                p.running_mean[l] = mom * p.running_mean[l] + keep * mean[l];
                p.running_var[l] = mom * p.running_var[l] + keep * var[l];
            }
            cache.state = Some(BnState {
                xhat: Tensor::from_vec(shape, xhat)?,
                inv_std,
                group,
            });
            Tensor::from_vec(shape, y)
        }
    }
}

/// Gradients of the train-phase forward: `(dx, dγ, dβ)`.
pub fn batchnorm_backward<T: Scalar>(
    p: &BnParams<T>,
    spec: &BatchNormSpec,
    cache: &BnCache<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let st = cache.state.as_ref().ok_or(Error::MissingCache("batch norm"))?;
    let shape = st.xhat.shape();
    if dy.shape() != shape {
        return Err(Error::ShapeMismatch {
            expected: shape.dims(),
            got: dy.shape().dims(),
        });
    }
    let len = p.len();
    let mut dgamma = vec![T::zero(); len];
    let mut dbeta = vec![T::zero(); len];
    for (i, (&g, &xh)) in dy.data().iter().zip(st.xhat.data()).enumerate() {
        let l = axis_index(spec.mode, shape, i);
        dbeta[l] = dbeta[l] + g;
        dgamma[l] = dgamma[l] + g * xh;
    }
    let m = T::from_f64(st.group as f64);
    let inv_m = T::one() / m;
    let dx = dy
        .data()
        .iter()
        .zip(st.xhat.data())
        .enumerate()
        .map(|(i, (&g, &xh))| {
            let l = axis_index(spec.mode, shape, i);
            p.gamma[l] * st.inv_std[l] * inv_m * (m * g - dbeta[l] - xh * dgamma[l])
        })
        .collect();
    Ok((Tensor::from_vec(shape, dx)?, dgamma, dbeta))
}
