//! Composite blocks: Fire, Tiny and SmallFire.
//!
//! Builders return a [`Fragment`], the ordered primitive operations that the
//! graph compiler wires into a network.

use crate::error::{Error, Result};
use crate::layers::{BatchNormSpec, BnMode, ConvSpec, Padding};

/// Where ReLU non-linearities go inside the blocks. Every builder in this
/// module reads this one table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReluPlacement {
    pub tiny_after_3x3: bool,
    pub tiny_after_norm: bool,
    pub fire_after_squeeze: bool,
    /// The expand convolutions stay linear; the activation follows the merge.
    pub fire_after_merge: bool,
    /// Stem convolutions and hidden dense layers of the plain networks.
    pub after_plain_layers: bool,
}

pub const RELU_PLACEMENT: ReluPlacement = ReluPlacement {
    tiny_after_3x3: true,
    tiny_after_norm: true,
    fire_after_squeeze: true,
    fire_after_merge: true,
    after_plain_layers: true,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FireConfig {
    pub s1x1: usize,
    pub e1x1: usize,
    pub e3x3: usize,
}

impl FireConfig {
    pub fn new(s1x1: usize, e1x1: usize, e3x3: usize) -> Result<Self> {
        if s1x1 == 0 || e1x1 == 0 || e3x3 == 0 {
            return Err(Error::InvalidConfig(format!(
                "fire filter counts must be >= 1 (s={s1x1} e1={e1x1} e3={e3x3})"
            )));
        }
        Ok(FireConfig { s1x1, e1x1, e3x3 })
    }

    pub fn out_channels(&self) -> usize {
        self.e1x1 + self.e3x3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TinyConfig {
    /// Filter count shared by the 3x3 and the 1x1 convolution.
    pub filters: usize,
}

impl TinyConfig {
    pub fn new(filters: usize) -> Result<Self> {
        if filters == 0 {
            return Err(Error::InvalidConfig("tiny block needs at least one filter".into()));
        }
        Ok(TinyConfig { filters })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SmallFireConfig {
    pub fire: FireConfig,
}

/// The three convolutions of a Fire block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FireConvs {
    pub squeeze: ConvSpec,
    pub expand1: ConvSpec,
    pub expand3: ConvSpec,
    pub relu_after_squeeze: bool,
}

impl FireConvs {
    pub fn from_config(cfg: FireConfig) -> Result<Self> {
        Ok(FireConvs {
            squeeze: ConvSpec::new(cfg.s1x1, 1, Padding::Same)?,
            expand1: ConvSpec::new(cfg.e1x1, 1, Padding::Same)?,
            expand3: ConvSpec::new(cfg.e3x3, 3, Padding::Same)?,
            relu_after_squeeze: RELU_PLACEMENT.fire_after_squeeze,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.expand1.out_channels + self.expand3.out_channels
    }
}

/// A primitive operation in a compiled network. `role` names the parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeOp {
    Conv {
        spec: ConvSpec,
        role: String,
    },
    Relu,
    BatchNorm {
        spec: BatchNormSpec,
        role: String,
    },
    MaxPool,
    /// Squeeze → (expand 1x1 ‖ expand 3x3) → channel concatenation.
    Fire {
        convs: FireConvs,
        role: String,
    },
    Dense {
        out: usize,
        role: String,
    },
    Gap,
    Softmax,
}

impl NodeOp {
    pub fn kind(&self) -> &'static str {
        match self {
            NodeOp::Conv { .. } => "conv",
            NodeOp::Relu => "relu",
            NodeOp::BatchNorm { .. } => "batchnorm",
            NodeOp::MaxPool => "maxpool",
            NodeOp::Fire { .. } => "fire",
            NodeOp::Dense { .. } => "dense",
            NodeOp::Gap => "gap",
            NodeOp::Softmax => "softmax",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub ops: Vec<NodeOp>,
    pub out_channels: usize,
}

fn check_in(in_channels: usize) -> Result<()> {
    if in_channels == 0 {
        return Err(Error::InvalidConfig("block input needs at least one channel".into()));
    }
    Ok(())
}

fn fire_ops(cfg: FireConfig, role: &str, ops: &mut Vec<NodeOp>) -> Result<()> {
    ops.push(NodeOp::Fire {
        convs: FireConvs::from_config(cfg)?,
        role: role.to_string(),
    });
    if RELU_PLACEMENT.fire_after_merge {
        ops.push(NodeOp::Relu);
    }
    Ok(())
}

pub fn build_fire(cfg: FireConfig, in_channels: usize) -> Result<Fragment> {
    check_in(in_channels)?;
    let mut ops = Vec::new();
    fire_ops(cfg, "fire", &mut ops)?;
    Ok(Fragment {
        ops,
        out_channels: cfg.out_channels(),
    })
}

/// 3x3 conv → 1x1 conv → batch norm → 2x2 max-pool.
pub fn build_tiny(cfg: TinyConfig, in_channels: usize, bn_mode: BnMode) -> Result<Fragment> {
    check_in(in_channels)?;
    let mut ops = vec![NodeOp::Conv {
        spec: ConvSpec::new(cfg.filters, 3, Padding::Same)?,
        role: "conv3".into(),
    }];
    if RELU_PLACEMENT.tiny_after_3x3 {
        ops.push(NodeOp::Relu);
    }
    ops.push(NodeOp::Conv {
        spec: ConvSpec::new(cfg.filters, 1, Padding::Same)?,
        role: "conv1".into(),
    });
    ops.push(NodeOp::BatchNorm {
        spec: BatchNormSpec::new(bn_mode),
        role: "bn".into(),
    });
    if RELU_PLACEMENT.tiny_after_norm {
        ops.push(NodeOp::Relu);
    }
    ops.push(NodeOp::MaxPool);
    Ok(Fragment {
        ops,
        out_channels: cfg.filters,
    })
}

/// Fire → Fire → 2x2 max-pool, both Fire blocks sharing one configuration.
pub fn build_smallfire(cfg: SmallFireConfig, in_channels: usize) -> Result<Fragment> {
    check_in(in_channels)?;
    let mut ops = Vec::new();
    fire_ops(cfg.fire, "fire0", &mut ops)?;
    fire_ops(cfg.fire, "fire1", &mut ops)?;
    ops.push(NodeOp::MaxPool);
    Ok(Fragment {
        ops,
        out_channels: cfg.fire.out_channels(),
    })
}
