//! Executable networks: parameter storage plus forward and backward passes
//! over a compiled [`NetworkSpec`].

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::{NetworkSpec, Node};
use crate::blocks::NodeOp;
use crate::error::{Error, Result};
use crate::layers::{
    batchnorm_backward, batchnorm_forward, concat_channels, conv2d_backward, conv2d_forward, dense_backward,
    dense_forward, global_avg_pool, global_avg_pool_backward, maxpool2x2_backward, maxpool2x2_forward, relu,
    relu_backward, softmax, split_channels, BnCache, BnParams, ConvSpec, Phase, PoolSwitches,
};
use crate::tensor::{Scalar, Shape, Tensor};

/// A named parameter tensor. `dims` is the logical shape written to model
/// files (rank 1 for biases and norm vectors, rank 2 for dense weights,
/// rank 4 for convolution kernels).
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub value: Tensor<T>,
    pub trainable: bool,
}

/// Parameters in the network's deterministic topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new(params: Vec<Param<T>>) -> Self {
        ParamStore { params }
    }
    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }
    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }
    pub fn len(&self) -> usize {
        self.params.len()
    }
    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }
    pub fn as_slice(&self) -> &[Param<T>] {
        &self.params
    }
    /// Number of trainable scalar parameters.
    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.data().len())
            .sum()
    }
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    dims: p.dims.clone(),
                    value: p.value.cast(),
                    trainable: p.trainable,
                })
                .collect(),
        }
    }
}

/// Init rule for a parameter slot.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    /// Uniform in `±√(6 / (fan_in + fan_out))`.
    Glorot {
        fan_in: usize,
        fan_out: usize,
    },
    Zeros,
    Ones,
}

#[derive(Debug, Clone)]
struct Slot {
    name: String,
    dims: Vec<usize>,
    shape: Shape,
    trainable: bool,
    init: Init,
}

fn conv_slots(prefix: &str, spec: &ConvSpec, in_ch: usize, out: &mut Vec<Slot>) {
    let o = spec.out_channels;
    out.push(Slot {
        name: format!("{prefix}.w"),
        dims: vec![o, in_ch, spec.kh, spec.kw],
        shape: spec.weight_shape(in_ch).expect("validated conv"),
        trainable: true,
        init: Init::Glorot {
            fan_in: in_ch * spec.kh * spec.kw,
            fan_out: o * spec.kh * spec.kw,
        },
    });
    out.push(Slot {
        name: format!("{prefix}.b"),
        dims: vec![o],
        shape: Shape::new(1, o, 1, 1).expect("validated conv"),
        trainable: true,
        init: Init::Zeros,
    });
}

fn vector_slot(name: String, len: usize, trainable: bool, init: Init) -> Slot {
    Slot {
        name,
        dims: vec![len],
        shape: Shape::new(1, len, 1, 1).expect("non-empty vector"),
        trainable,
        init,
    }
}

/// Parameter slots of one node, in file order.
fn node_slots(node: &Node) -> Vec<Slot> {
    let prefix = format!("L{}", node.layer);
    let x = node.input;
    let mut slots = Vec::new();
    match &node.op {
        NodeOp::Conv { spec, role } => conv_slots(&format!("{prefix}.{role}"), spec, x.c(), &mut slots),
        NodeOp::BatchNorm { spec, role } => {
            let len = spec.mode.axis_len(x);
            let p = format!("{prefix}.{role}");
            slots.push(vector_slot(format!("{p}.gamma"), len, true, Init::Ones));
            slots.push(vector_slot(format!("{p}.beta"), len, true, Init::Zeros));
            slots.push(vector_slot(format!("{p}.mean"), len, false, Init::Zeros));
            slots.push(vector_slot(format!("{p}.var"), len, false, Init::Ones));
        }
        NodeOp::Fire { convs, role } => {
            let p = format!("{prefix}.{role}");
            conv_slots(&format!("{p}.squeeze"), &convs.squeeze, x.c(), &mut slots);
            let s = convs.squeeze.out_channels;
            conv_slots(&format!("{p}.expand1"), &convs.expand1, s, &mut slots);
            conv_slots(&format!("{p}.expand3"), &convs.expand3, s, &mut slots);
        }
        NodeOp::Dense { out, role } => {
            let fan_in = x.sample_len();
            slots.push(Slot {
                name: format!("{prefix}.{role}.w"),
                dims: vec![*out, fan_in],
                shape: Shape::new(1, 1, *out, fan_in).expect("validated dense"),
                trainable: true,
                init: Init::Glorot { fan_in, fan_out: *out },
            });
            slots.push(vector_slot(format!("{prefix}.{role}.b"), *out, true, Init::Zeros));
        }
        NodeOp::Relu | NodeOp::MaxPool | NodeOp::Gap | NodeOp::Softmax => {}
    }
    slots
}

/// Per-node cached values needed by the backward pass.
#[derive(Debug, Clone)]
enum NodeCache<T> {
    Input(Tensor<T>),
    Bn(BnCache<T>),
    Pool(PoolSwitches),
    Fire {
        x: Tensor<T>,
        squeeze_pre: Tensor<T>,
        squeeze_act: Tensor<T>,
    },
    Shape(Shape),
    Empty,
}

/// Everything a train-phase forward pass records.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    nodes: Vec<NodeCache<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Hash of every piecewise-linear branch decision taken in the pass:
    /// the sign pattern at each ReLU and every max-pool argmax.
    pub fn branch_signature(&self, nodes: &[Node]) -> u64 {
        let mut h = DefaultHasher::new();
        for (node, cache) in nodes.iter().zip(&self.nodes) {
            match (&node.op, cache) {
                (NodeOp::Relu, NodeCache::Input(x)) => x.data().iter().for_each(|v| (*v > T::zero()).hash(&mut h)),
                (NodeOp::Fire { .. }, NodeCache::Fire { squeeze_pre, .. }) => {
                    squeeze_pre.data().iter().for_each(|v| (*v > T::zero()).hash(&mut h))
                }
                (_, NodeCache::Pool(sw)) => sw.indices().hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }
}

/// Gradients aligned with [`ParamStore`] order; non-trainable slots stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub values: Vec<Vec<T>>,
}

#[derive(Debug, Clone)]
pub struct Model<T = f32> {
    spec: NetworkSpec,
    nodes: Vec<Node>,
    /// Index of each node's first parameter slot.
    first_param: Vec<usize>,
    params: ParamStore<T>,
}

impl<T: Scalar> Model<T> {
    /// Fresh model with seeded Glorot-uniform weights, zero biases and
    /// identity batch norm.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes = spec.nodes();
        let mut first_param = Vec::with_capacity(nodes.len());
        let mut params = Vec::new();
        for node in &nodes {
            first_param.push(params.len());
            for slot in node_slots(node) {
                let value = match slot.init {
                    Init::Zeros => Tensor::zeros(slot.shape),
                    Init::Ones => Tensor::full(slot.shape, T::one()),
                    Init::Glorot { fan_in, fan_out } => {
                        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        let data = (0..slot.shape.numel())
                            .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
                            .collect();
                        Tensor::from_vec(slot.shape, data).expect("slot shape")
                    }
                };
                params.push(Param {
                    name: slot.name,
                    dims: slot.dims,
                    value,
                    trainable: slot.trainable,
                });
            }
        }
        Model {
            spec: spec.clone(),
            nodes,
            first_param,
            params: ParamStore { params },
        }
    }

    /// Pairs a spec with loaded parameters, checking names and extents
    /// against the spec's own layout.
    pub fn from_parts(spec: &NetworkSpec, params: ParamStore<T>) -> Result<Self> {
        let mut model = Model::<T>::init(spec, 0);
        let expected: Vec<_> = model.params.iter().map(|p| (p.name.clone(), p.dims.clone())).collect();
        if params.len() != expected.len() {
            return Err(Error::BlobMismatch {
                name: "<all>".into(),
                msg: format!("expected {} parameter blobs, found {}", expected.len(), params.len()),
            });
        }
        for ((name, dims), got) in expected.iter().zip(params.iter()) {
            if *name != got.name {
                return Err(Error::BlobMismatch {
                    name: got.name.clone(),
                    msg: format!("expected blob {name}"),
                });
            }
            if *dims != got.dims {
                return Err(Error::BlobMismatch {
                    name: got.name.clone(),
                    msg: format!("expected extents {dims:?}, found {:?}", got.dims),
                });
            }
        }
        for (dst, src) in model.params.iter_mut().zip(params.params) {
            dst.value = src.value;
        }
        Ok(model)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }
    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            spec: self.spec.clone(),
            nodes: self.nodes.clone(),
            first_param: self.first_param.clone(),
            params: self.params.cast(),
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let want = self.spec.input.with_batch(x.shape().n())?;
        if x.shape() != want {
            return Err(Error::ShapeMismatch {
                expected: want.dims(),
                got: x.shape().dims(),
            });
        }
        Ok(())
    }

    fn value(&self, idx: usize) -> &Tensor<T> {
        &self.params.params[idx].value
    }

    fn bn_params(&self, first: usize) -> BnParams<T> {
        BnParams {
            gamma: self.value(first).data().to_vec(),
            beta: self.value(first + 1).data().to_vec(),
            running_mean: self.value(first + 2).data().to_vec(),
            running_var: self.value(first + 3).data().to_vec(),
        }
    }

    fn conv(&self, first: usize, spec: &ConvSpec, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_forward(x, self.value(first), self.value(first + 1).data(), spec)
    }

    /// Inference-phase forward pass returning class probabilities `(N, c, 1, 1)`.
    /// Parameters and running statistics are left untouched.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (node, &first) in self.nodes.iter().zip(&self.first_param) {
            h = match &node.op {
                NodeOp::Conv { spec, .. } => self.conv(first, spec, &h)?,
                NodeOp::Relu => relu(&h),
                NodeOp::BatchNorm { spec, .. } => {
                    let mut p = self.bn_params(first);
                    batchnorm_forward(&h, &mut p, spec, Phase::Infer, &mut BnCache::new())?
                }
                NodeOp::MaxPool => maxpool2x2_forward(&h)?.0,
                NodeOp::Fire { convs, .. } => {
                    let mut s = self.conv(first, &convs.squeeze, &h)?;
                    if convs.relu_after_squeeze {
                        s = relu(&s);
                    }
                    let e1 = self.conv(first + 2, &convs.expand1, &s)?;
                    let e3 = self.conv(first + 4, &convs.expand3, &s)?;
                    concat_channels(&e1, &e3)?
                }
                NodeOp::Dense { .. } => dense_forward(&h, self.value(first).data(), self.value(first + 1).data())?,
                NodeOp::Gap => global_avg_pool(&h)?,
                NodeOp::Softmax => softmax(&h)?,
            };
        }
        h.check_finite("forward pass")?;
        Ok(h)
    }

    /// Train-phase forward pass: batch norm uses batch statistics and
    /// updates its running statistics.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.nodes.len());
        let mut h = x.clone();
        for i in 0..self.nodes.len() {
            let first = self.first_param[i];
            let (next, cache) = match &self.nodes[i].op {
                NodeOp::Conv { spec, .. } => (self.conv(first, spec, &h)?, NodeCache::Input(h)),
                NodeOp::Relu => (relu(&h), NodeCache::Input(h)),
                NodeOp::BatchNorm { spec, .. } => {
                    let spec = *spec;
                    let mut p = self.bn_params(first);
                    let mut cache = BnCache::new();
                    let y = batchnorm_forward(&h, &mut p, &spec, Phase::Train, &mut cache)?;
                    self.params.params[first + 2]
                        .value
                        .data_mut()
                        .copy_from_slice(&p.running_mean);
                    self.params.params[first + 3]
                        .value
                        .data_mut()
                        .copy_from_slice(&p.running_var);
                    (y, NodeCache::Bn(cache))
                }
                NodeOp::MaxPool => {
                    let (y, sw) = maxpool2x2_forward(&h)?;
                    (y, NodeCache::Pool(sw))
                }
                NodeOp::Fire { convs, .. } => {
                    let squeeze_pre = self.conv(first, &convs.squeeze, &h)?;
                    let squeeze_act = if convs.relu_after_squeeze {
                        relu(&squeeze_pre)
                    } else {
                        squeeze_pre.clone()
                    };
                    let e1 = self.conv(first + 2, &convs.expand1, &squeeze_act)?;
                    let e3 = self.conv(first + 4, &convs.expand3, &squeeze_act)?;
                    (
                        concat_channels(&e1, &e3)?,
                        NodeCache::Fire {
                            x: h,
                            squeeze_pre,
                            squeeze_act,
                        },
                    )
                }
                NodeOp::Dense { .. } => (
                    dense_forward(&h, self.value(first).data(), self.value(first + 1).data())?,
                    NodeCache::Input(h),
                ),
                NodeOp::Gap => (global_avg_pool(&h)?, NodeCache::Shape(h.shape())),
                NodeOp::Softmax => (softmax(&h)?, NodeCache::Empty),
            };
            caches.push(cache);
            h = next;
        }
        h.check_finite("forward pass")?;
        Ok((h, ForwardCache { nodes: caches }))
    }

    /// Back-propagates `d_scores`, the loss gradient with respect to the
    /// input of the final softmax, through every earlier node.
    pub fn backward(&self, cache: &ForwardCache<T>, d_scores: &Tensor<T>) -> Result<Grads<T>> {
        if cache.nodes.len() != self.nodes.len() {
            return Err(Error::MissingCache("network"));
        }
        let mut grads = Grads {
            values: self
                .params
                .iter()
                .map(|p| vec![T::zero(); p.value.data().len()])
                .collect(),
        };
        let last = self.nodes.len() - 1;
        let mut dy = d_scores.clone();
        for i in (0..last).rev() {
            let first = self.first_param[i];
            let node = &self.nodes[i];
            dy = match (&node.op, &cache.nodes[i]) {
                (NodeOp::Conv { spec, .. }, NodeCache::Input(x)) => {
                    let g = conv2d_backward(x, self.value(first), spec, &dy)?;
                    grads.values[first] = g.dw;
                    grads.values[first + 1] = g.db;
                    g.dx
                }
                (NodeOp::Relu, NodeCache::Input(x)) => relu_backward(x, &dy)?,
                (NodeOp::BatchNorm { spec, .. }, NodeCache::Bn(bn)) => {
                    let p = self.bn_params(first);
                    let (dx, dg, db) = batchnorm_backward(&p, spec, bn, &dy)?;
                    grads.values[first] = dg;
                    grads.values[first + 1] = db;
                    dx
                }
                (NodeOp::MaxPool, NodeCache::Pool(sw)) => maxpool2x2_backward(sw, &dy)?,
                (
                    NodeOp::Fire { convs, .. },
                    NodeCache::Fire {
                        x,
                        squeeze_pre,
                        squeeze_act,
                    },
                ) => {
                    let (d1, d3) = split_channels(&dy, convs.expand1.out_channels)?;
                    let g1 = conv2d_backward(squeeze_act, self.value(first + 2), &convs.expand1, &d1)?;
                    let g3 = conv2d_backward(squeeze_act, self.value(first + 4), &convs.expand3, &d3)?;
                    let mut ds = g1.dx.add(&g3.dx)?;
                    if convs.relu_after_squeeze {
                        ds = relu_backward(squeeze_pre, &ds)?;
                    }
                    let gs = conv2d_backward(x, self.value(first), &convs.squeeze, &ds)?;
                    grads.values[first] = gs.dw;
                    grads.values[first + 1] = gs.db;
                    grads.values[first + 2] = g1.dw;
                    grads.values[first + 3] = g1.db;
                    grads.values[first + 4] = g3.dw;
                    grads.values[first + 5] = g3.db;
                    gs.dx
                }
                (NodeOp::Dense { .. }, NodeCache::Input(x)) => {
                    let g = dense_backward(x, self.value(first).data(), &dy)?;
                    grads.values[first] = g.dw;
                    grads.values[first + 1] = g.db;
                    g.dx
                }
                (NodeOp::Gap, NodeCache::Shape(s)) => global_avg_pool_backward(*s, &dy)?,
                _ => return Err(Error::MissingCache("network node")),
            };
        }
        Ok(grads)
    }
}
