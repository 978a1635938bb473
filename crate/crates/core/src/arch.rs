//! Network descriptions, the four reference architectures, and static
//! parameter / FLOP accounting.

use std::fmt;

use crate::blocks::{
    build_fire, build_smallfire, build_tiny, FireConfig, FireConvs, NodeOp, SmallFireConfig, TinyConfig, RELU_PLACEMENT,
};
use crate::error::{Error, Result};
use crate::layers::{pooled_hw, BnMode, ConvSpec, Padding};
use crate::tensor::Shape;

/// One line of an architecture description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    Conv(ConvSpec),
    Relu,
    BatchNorm,
    MaxPool,
    Tiny(TinyConfig),
    Fire(FireConfig),
    SmallFire(SmallFireConfig),
    Dense { out: usize },
    Gap,
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    /// Per-sample input shape; the batch extent is 1.
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    pub classes: usize,
    pub bn_mode: BnMode,
}

/// A compiled primitive node with its shapes (batch extent 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    /// Index into [`NetworkSpec::layers`].
    pub layer: usize,
    pub op: NodeOp,
    pub input: Shape,
    pub output: Shape,
}

/// Error raised while compiling layer `layer`.
#[derive(Debug)]
pub struct LayerError {
    pub layer: usize,
    pub error: Error,
}

/// Flattens a layer list into shape-checked primitive nodes.
pub fn compile_layers(
    input: Shape,
    layers: &[LayerSpec],
    bn_mode: BnMode,
) -> std::result::Result<Vec<Node>, LayerError> {
    let mut nodes = Vec::new();
    let mut shape = input;
    for (idx, layer) in layers.iter().enumerate() {
        let wrap = |error| LayerError { layer: idx, error };
        let ops = match *layer {
            LayerSpec::Conv(spec) => vec![NodeOp::Conv {
                spec,
                role: "conv".into(),
            }],
            LayerSpec::Relu => vec![NodeOp::Relu],
            LayerSpec::BatchNorm => vec![NodeOp::BatchNorm {
                spec: crate::layers::BatchNormSpec::new(bn_mode),
                role: "bn".into(),
            }],
            LayerSpec::MaxPool => vec![NodeOp::MaxPool],
            LayerSpec::Tiny(cfg) => build_tiny(cfg, shape.c(), bn_mode).map_err(wrap)?.ops,
            LayerSpec::Fire(cfg) => build_fire(cfg, shape.c()).map_err(wrap)?.ops,
            LayerSpec::SmallFire(cfg) => build_smallfire(cfg, shape.c()).map_err(wrap)?.ops,
            LayerSpec::Dense { out } => vec![NodeOp::Dense {
                out,
                role: "dense".into(),
            }],
            LayerSpec::Gap => vec![NodeOp::Gap],
            LayerSpec::Softmax => vec![NodeOp::Softmax],
        };
        for op in ops {
            let output = node_output(&op, shape).map_err(wrap)?;
            nodes.push(Node {
                layer: idx,
                op,
                input: shape,
                output,
            });
            shape = output;
        }
    }
    Ok(nodes)
}

fn node_output(op: &NodeOp, x: Shape) -> Result<Shape> {
    match op {
        NodeOp::Conv { spec, .. } => {
            let (h, w) = spec.output_hw(x.h(), x.w())?;
            Shape::new(x.n(), spec.out_channels, h, w)
        }
        NodeOp::Relu | NodeOp::BatchNorm { .. } => Ok(x),
        NodeOp::MaxPool => {
            let (h, w) = pooled_hw(x.h(), x.w())?;
            Shape::new(x.n(), x.c(), h, w)
        }
        NodeOp::Fire { convs, .. } => Shape::new(x.n(), convs.out_channels(), x.h(), x.w()),
        NodeOp::Dense { out, .. } => {
            if *out == 0 {
                return Err(Error::InvalidConfig("dense layer needs at least one unit".into()));
            }
            Shape::new(x.n(), *out, 1, 1)
        }
        NodeOp::Gap => Shape::new(x.n(), x.c(), 1, 1),
        NodeOp::Softmax => {
            if x.h() != 1 || x.w() != 1 {
                return Err(Error::InvalidConfig(format!(
                    "softmax needs a spatially reduced input, got {}x{}",
                    x.h(),
                    x.w()
                )));
            }
            Ok(x)
        }
    }
}

impl NetworkSpec {
    /// Shape-checks `layers` against `input` and derives the class count.
    /// The final layer must be a softmax over a `(1, c, 1, 1)` score map.
    pub fn new(name: impl Into<String>, input: Shape, layers: Vec<LayerSpec>, bn_mode: BnMode) -> Result<Self> {
        let input = input.with_batch(1)?;
        let nodes = compile_layers(input, &layers, bn_mode).map_err(|e| e.error)?;
        let classes = Self::check_head(&nodes)?;
        Ok(NetworkSpec {
            name: name.into(),
            input,
            layers,
            classes,
            bn_mode,
        })
    }

    pub(crate) fn check_head(nodes: &[Node]) -> Result<usize> {
        match nodes.last() {
            Some(Node {
                op: NodeOp::Softmax,
                output,
                ..
            }) => Ok(output.c()),
            _ => Err(Error::InvalidConfig("network must end with softmax".into())),
        }
    }

    pub fn nodes(&self) -> Vec<Node> {
        compile_layers(self.input, &self.layers, self.bn_mode).expect("NetworkSpec is shape-checked at construction")
    }

    /// Rebuilds the spec for a different per-sample input shape.
    pub fn with_input(&self, input: Shape) -> Result<Self> {
        NetworkSpec::new(self.name.clone(), input, self.layers.clone(), self.bn_mode)
    }

    /// Rebuilds the spec with a different batch-norm parameterization.
    pub fn with_bn_mode(&self, bn_mode: BnMode) -> Result<Self> {
        NetworkSpec::new(self.name.clone(), self.input, self.layers.clone(), bn_mode)
    }

    /// Equality ignoring the name.
    pub fn same_structure(&self, other: &NetworkSpec) -> bool {
        self.input == other.input
            && self.layers == other.layers
            && self.classes == other.classes
            && self.bn_mode == other.bn_mode
    }

    /// Published figures when this spec is one of the evaluated configurations.
    pub fn paper_figures(&self) -> Option<PaperFigures> {
        if self.input != Shape::image96() || self.classes != 11 {
            return None;
        }
        paper_figures(&self.name)
    }
}

fn check_depth(input: Shape, n_modules: usize) -> Result<()> {
    if n_modules == 0 {
        return Err(Error::InvalidConfig("at least one module is required".into()));
    }
    // every module halves the map; at least a 2x2 map must remain
    let ok =
        n_modules < usize::BITS as usize - 1 && input.h() >= 2usize << n_modules && input.w() >= 2usize << n_modules;
    if !ok {
        return Err(Error::SpatialExhausted(format!(
            "{n_modules} pooling modules on a {}x{} input leave less than 2x2",
            input.h(),
            input.w()
        )));
    }
    Ok(())
}

fn classes_ok(classes: usize) -> Result<()> {
    if classes == 0 {
        return Err(Error::InvalidConfig("class count must be >= 1".into()));
    }
    Ok(())
}

pub fn tinynet(filters: usize, n_modules: usize, classes: usize) -> Result<NetworkSpec> {
    tinynet_with(filters, n_modules, classes, Shape::image96(), BnMode::WidthAxis)
}

/// `n` Tiny blocks, the first fed by the raw input, then a 1x1 class-score
/// convolution, global average pooling and softmax.
pub fn tinynet_with(
    filters: usize,
    n_modules: usize,
    classes: usize,
    input: Shape,
    bn_mode: BnMode,
) -> Result<NetworkSpec> {
    classes_ok(classes)?;
    check_depth(input, n_modules)?;
    let tiny = TinyConfig::new(filters)?;
    let mut layers = vec![LayerSpec::Tiny(tiny); n_modules];
    layers.push(LayerSpec::Conv(ConvSpec::new(classes, 1, Padding::Same)?));
    layers.push(LayerSpec::Gap);
    layers.push(LayerSpec::Softmax);
    NetworkSpec::new(format!("tinynet-{filters}-{n_modules}"), input, layers, bn_mode)
}

fn stem_layers(out: &mut Vec<LayerSpec>) -> Result<()> {
    out.push(LayerSpec::Conv(ConvSpec::new(8, 5, Padding::Same)?));
    if RELU_PLACEMENT.after_plain_layers {
        out.push(LayerSpec::Relu);
    }
    Ok(())
}

fn fire_head(classes: usize, out: &mut Vec<LayerSpec>) -> Result<()> {
    out.push(LayerSpec::Conv(ConvSpec::new(classes, 5, Padding::Same)?));
    out.push(LayerSpec::Gap);
    out.push(LayerSpec::Softmax);
    Ok(())
}

pub fn smallfirenet(n_modules: usize, classes: usize) -> Result<NetworkSpec> {
    smallfirenet_with(n_modules, classes, Shape::image96())
}

/// 5x5 conv (8) → `n` SmallFire(4, 4, 4) blocks → 5x5 class conv → GAP → softmax.
pub fn smallfirenet_with(n_modules: usize, classes: usize, input: Shape) -> Result<NetworkSpec> {
    classes_ok(classes)?;
    check_depth(input, n_modules)?;
    let block = SmallFireConfig {
        fire: FireConfig::new(4, 4, 4)?,
    };
    let mut layers = Vec::new();
    stem_layers(&mut layers)?;
    layers.extend(std::iter::repeat_n(LayerSpec::SmallFire(block), n_modules));
    fire_head(classes, &mut layers)?;
    NetworkSpec::new(format!("smallfirenet-{n_modules}"), input, layers, BnMode::WidthAxis)
}

/// 5x5 conv (8) → Fire(16,16,16) → Fire(16,16,16) → 5x5 class conv → GAP → softmax.
pub fn fire_baseline(classes: usize) -> Result<NetworkSpec> {
    classes_ok(classes)?;
    let fire = FireConfig::new(16, 16, 16)?;
    let mut layers = Vec::new();
    stem_layers(&mut layers)?;
    layers.push(LayerSpec::Fire(fire));
    layers.push(LayerSpec::Fire(fire));
    fire_head(classes, &mut layers)?;
    NetworkSpec::new("fire-baseline", Shape::image96(), layers, BnMode::WidthAxis)
}

/// Conv(32,5,5)-MaxPool(2,2)-Conv(32,5,5)-MaxPool(2,2)-FC(64)-FC(c), valid padding.
pub fn baseline_cnn(classes: usize) -> Result<NetworkSpec> {
    classes_ok(classes)?;
    let conv = LayerSpec::Conv(ConvSpec::new(32, 5, Padding::Valid)?);
    let relu = RELU_PLACEMENT.after_plain_layers;
    let mut layers = Vec::new();
    for _ in 0..2 {
        layers.push(conv);
        if relu {
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::MaxPool);
    }
    layers.push(LayerSpec::Dense { out: 64 });
    if relu {
        layers.push(LayerSpec::Relu);
    }
    layers.push(LayerSpec::Dense { out: classes });
    layers.push(LayerSpec::Softmax);
    NetworkSpec::new("baseline-cnn", Shape::image96(), layers, BnMode::WidthAxis)
}

/// Builds one of the named architectures.
pub fn by_name(name: &str, n_modules: usize, filters: usize, classes: usize) -> Result<NetworkSpec> {
    match name {
        "tinynet" => tinynet(filters, n_modules, classes),
        "smallfirenet" => smallfirenet(n_modules, classes),
        "fire-baseline" | "fire_baseline" => fire_baseline(classes),
        "baseline-cnn" | "baseline_cnn" => baseline_cnn(classes),
        other => Err(Error::InvalidConfig(format!("unknown architecture {other:?}"))),
    }
}

/// Published accuracy, latency and parameter figures for the evaluated
/// configurations (11 classes, 96x96 input).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaperFigures {
    pub params: Option<u64>,
    /// Mean accuracy in percent.
    pub accuracy_pct: f64,
    /// Per-image latency in milliseconds on the reference embedded board.
    pub latency_ms: f64,
}

pub fn paper_figures(name: &str) -> Option<PaperFigures> {
    let fig = |params: u64, accuracy_pct: f64, latency_ms: f64| {
        Some(PaperFigures {
            params: Some(params),
            accuracy_pct,
            latency_ms,
        })
    };
    match name {
        "baseline-cnn" => fig(930_000, 98.8, 1200.0),
        "fire-baseline" => fig(18_000, 99.6, 600.0),
        "smallfirenet-1" => fig(3163, 99.0, 70.0),
        "smallfirenet-2" => fig(3643, 99.7, 59.0),
        "smallfirenet-3" => fig(4087, 99.8, 61.0),
        "tinynet-4-1" => fig(307, 93.5, 28.0),
        "tinynet-4-2" => fig(571, 95.0, 35.0),
        "tinynet-4-3" => fig(787, 95.9, 38.0),
        "tinynet-4-4" => fig(979, 97.0, 40.0),
        "tinynet-4-5" => fig(1159, 98.8, 42.0),
        "tinynet-8-1" => fig(443, 95.8, 57.0),
        "tinynet-8-2" => fig(1195, 98.2, 88.0),
        "tinynet-8-3" => fig(1899, 98.4, 95.0),
        "tinynet-8-4" => fig(2579, 98.8, 99.0),
        "tinynet-8-5" => fig(3247, 99.6, 110.0),
        _ => None,
    }
}

/// One row of a [`CostReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct CostRow {
    pub name: String,
    pub kind: &'static str,
    pub params: u64,
    /// Multiply-accumulates; non-MAC layers contribute their elementwise op
    /// count here.
    pub macs: u64,
    pub output: Shape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub network: String,
    pub rows: Vec<CostRow>,
}

impl CostReport {
    pub fn total_params(&self) -> u64 {
        self.rows.iter().map(|r| r.params).sum()
    }
    pub fn total_macs(&self) -> u64 {
        self.rows.iter().map(|r| r.macs).sum()
    }
    pub fn total_flops(&self) -> u64 {
        2 * self.total_macs()
    }
    /// Rows that carry trainable parameters.
    pub fn param_rows(&self) -> impl Iterator<Item = &CostRow> {
        self.rows.iter().filter(|r| r.params > 0)
    }
    /// Parameters held by convolution rows only.
    pub fn conv_params(&self) -> u64 {
        self.rows.iter().filter(|r| r.kind == "conv").map(|r| r.params).sum()
    }
    pub fn norm_params(&self) -> u64 {
        self.rows
            .iter()
            .filter(|r| r.kind == "batchnorm")
            .map(|r| r.params)
            .sum()
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "network: {}", self.network)?;
        writeln!(
            f,
            "{:<28} {:<10} {:>10} {:>14}  output",
            "layer", "kind", "params", "MACs"
        )?;
        for r in &self.rows {
            let [_, c, h, w] = r.output.dims();
            writeln!(
                f,
                "{:<28} {:<10} {:>10} {:>14}  {}x{}x{}",
                r.name, r.kind, r.params, r.macs, c, h, w
            )?;
        }
        writeln!(f, "total params: {}", self.total_params())?;
        writeln!(f, "total MACs:   {}", self.total_macs())?;
        write!(f, "total FLOPs:  {}", self.total_flops())
    }
}

fn conv_macs(spec: &ConvSpec, in_ch: usize, out: Shape) -> u64 {
    (spec.kh * spec.kw * in_ch * spec.out_channels * out.h() * out.w()) as u64
}

fn rows_for(spec: &NetworkSpec) -> Vec<CostRow> {
    let mut rows = Vec::new();
    for node in spec.nodes() {
        let prefix = format!("L{}", node.layer);
        let (x, y) = (node.input, node.output);
        match &node.op {
            NodeOp::Conv { spec: c, role } => rows.push(CostRow {
                name: format!("{prefix}.{role}"),
                kind: "conv",
                params: c.param_count(x.c()) as u64,
                macs: conv_macs(c, x.c(), y),
                output: y,
            }),
            NodeOp::BatchNorm { spec: b, role } => rows.push(CostRow {
                name: format!("{prefix}.{role}"),
                kind: "batchnorm",
                params: 2 * b.mode.axis_len(x) as u64,
                macs: y.numel() as u64,
                output: y,
            }),
            NodeOp::Fire { convs, role } => {
                let FireConvs {
                    squeeze,
                    expand1,
                    expand3,
                    ..
                } = convs;
                let s_out = Shape::new(1, squeeze.out_channels, x.h(), x.w()).expect("valid");
                let e1_out = Shape::new(1, expand1.out_channels, x.h(), x.w()).expect("valid");
                let e3_out = Shape::new(1, expand3.out_channels, x.h(), x.w()).expect("valid");
                for (conv, in_ch, out, part) in [
                    (squeeze, x.c(), s_out, "squeeze"),
                    (expand1, squeeze.out_channels, e1_out, "expand1"),
                    (expand3, squeeze.out_channels, e3_out, "expand3"),
                ] {
                    rows.push(CostRow {
                        name: format!("{prefix}.{role}.{part}"),
                        kind: "conv",
                        params: conv.param_count(in_ch) as u64,
                        macs: conv_macs(conv, in_ch, out),
                        output: out,
                    });
                    if part == "squeeze" && convs.relu_after_squeeze {
                        rows.push(CostRow {
                            name: format!("{prefix}.{role}.relu"),
                            kind: "relu",
                            params: 0,
                            macs: out.numel() as u64,
                            output: out,
                        });
                    }
                }
                rows.push(CostRow {
                    name: format!("{prefix}.{role}.concat"),
                    kind: "concat",
                    params: 0,
                    macs: 0,
                    output: y,
                });
            }
            NodeOp::Dense { out, role } => rows.push(CostRow {
                name: format!("{prefix}.{role}"),
                kind: "dense",
                params: (x.sample_len() * out + out) as u64,
                macs: (x.sample_len() * out) as u64,
                output: y,
            }),
            NodeOp::Relu | NodeOp::Softmax => rows.push(CostRow {
                name: format!("{prefix}.{}", node.op.kind()),
                kind: node.op.kind(),
                params: 0,
                macs: y.numel() as u64,
                output: y,
            }),
            NodeOp::MaxPool | NodeOp::Gap => rows.push(CostRow {
                name: format!("{prefix}.{}", node.op.kind()),
                kind: node.op.kind(),
                params: 0,
                macs: x.numel() as u64,
                output: y,
            }),
        }
    }
    rows
}

/// Per-layer trainable parameter counts. Batch norm contributes
/// `2 × axis length`; running statistics are excluded.
pub fn count_params(spec: &NetworkSpec) -> CostReport {
    CostReport {
        network: spec.name.clone(),
        rows: rows_for(spec),
    }
}

/// Per-layer multiply-accumulate counts; `total_flops = 2 × total_macs`.
pub fn count_flops(spec: &NetworkSpec) -> CostReport {
    count_params(spec)
}

/// Parameter counts published for SmallFireNet, used to report the residual
/// that conv-only accounting leaves unexplained.
pub fn smallfirenet_published_params(n_modules: usize) -> Option<u64> {
    paper_figures(&format!("smallfirenet-{n_modules}")).and_then(|f| f.params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(spec: &NetworkSpec) -> u64 {
        count_params(spec).total_params()
    }

    #[test]
    fn tinynet_table_counts() {
        let four: Vec<u64> = (1..=5).map(|n| params(&tinynet(4, n, 11).unwrap())).collect();
        assert_eq!(four, [307, 571, 787, 979, 1159]);
        let eight: Vec<u64> = (1..=5).map(|n| params(&tinynet(8, n, 11).unwrap())).collect();
        assert_eq!(eight, [443, 1195, 1899, 2579, 3247]);
    }

    #[test]
    fn tinynet_single_module_decomposition() {
        let report = count_params(&tinynet(4, 1, 11).unwrap());
        let per: Vec<u64> = report.param_rows().map(|r| r.params).collect();
        assert_eq!(per, [40, 20, 192, 55]);
    }

    #[test]
    fn head_only_spec() {
        let input = Shape::new(1, 4, 3, 3).unwrap();
        let spec = NetworkSpec::new(
            "head",
            input,
            vec![
                LayerSpec::Conv(ConvSpec::new(11, 1, Padding::Same).unwrap()),
                LayerSpec::Gap,
                LayerSpec::Softmax,
            ],
            BnMode::WidthAxis,
        )
        .unwrap();
        assert_eq!(params(&spec), 55);
        assert_eq!(spec.classes, 11);
    }

    #[test]
    fn tiny_block_deltas() {
        // Tiny(8) on 8 channels at 48x48: 584 + 72 + 96
        assert_eq!(
            params(&tinynet(8, 2, 11).unwrap()) - params(&tinynet(8, 1, 11).unwrap()),
            752
        );
        let block: u64 = count_params(&tinynet(4, 1, 11).unwrap())
            .rows
            .iter()
            .filter(|r| r.name.starts_with("L0."))
            .map(|r| r.params)
            .sum();
        assert_eq!(block, 252);
    }

    #[test]
    fn smallfirenet_conv_only_counts() {
        let counts: Vec<u64> = (1..=3).map(|n| params(&smallfirenet(n, 11).unwrap())).collect();
        assert_eq!(counts, [2827, 3235, 3643]);
        let residual: Vec<u64> = (1..=3)
            .map(|n| smallfirenet_published_params(n).unwrap() - counts[n - 1])
            .collect();
        assert_eq!(residual, [336, 408, 444]);
    }

    #[test]
    fn fire_block_counts() {
        let report = count_params(&smallfirenet(1, 11).unwrap());
        let first_fire: u64 = report
            .rows
            .iter()
            .filter(|r| r.name.starts_with("L2.fire0."))
            .map(|r| r.params)
            .sum();
        assert_eq!(first_fire, 204);
        let block: u64 = report
            .rows
            .iter()
            .filter(|r| r.name.starts_with("L2."))
            .map(|r| r.params)
            .sum();
        assert_eq!(block, 408);
        let fb = count_params(&fire_baseline(11).unwrap());
        let fire0: Vec<u64> = fb
            .rows
            .iter()
            .filter(|r| r.name.starts_with("L2.") && r.params > 0)
            .map(|r| r.params)
            .collect();
        assert_eq!(fire0, [144, 272, 2320]);
        assert_eq!(fb.total_params(), 14_875);
    }

    #[test]
    fn baseline_cnn_counts_and_trace() {
        let spec = baseline_cnn(11).unwrap();
        let report = count_params(&spec);
        let per: Vec<u64> = report.param_rows().map(|r| r.params).collect();
        assert_eq!(per, [832, 25_632, 903_232, 715]);
        assert_eq!(report.total_params(), 930_411);
        let widths: Vec<usize> = spec
            .nodes()
            .iter()
            .filter(|n| matches!(n.op, NodeOp::Conv { .. } | NodeOp::MaxPool))
            .map(|n| n.output.w())
            .collect();
        assert_eq!(widths, [92, 46, 42, 21]);
        let dense = spec
            .nodes()
            .into_iter()
            .find(|n| matches!(n.op, NodeOp::Dense { .. }))
            .unwrap();
        assert_eq!(dense.input.sample_len(), 14_112);
    }

    #[test]
    fn conv_mac_formula() {
        let report = count_flops(&tinynet(4, 1, 11).unwrap());
        assert_eq!(report.rows[0].macs, 331_776);
        // 1x1 conv: in·out·H·W
        let conv1 = report.rows.iter().find(|r| r.name == "L0.conv1").unwrap();
        assert_eq!(conv1.macs, 4 * 4 * 96 * 96);
        assert_eq!(report.total_flops(), 2 * report.total_macs());
    }

    #[test]
    fn depth_limits() {
        assert!(tinynet(4, 5, 11).is_ok());
        assert!(matches!(tinynet(4, 6, 11), Err(Error::SpatialExhausted(_))));
        assert!(matches!(tinynet(4, 9, 11), Err(Error::SpatialExhausted(_))));
        assert!(matches!(tinynet(4, 0, 11), Err(Error::InvalidConfig(_))));
        assert!(smallfirenet(5, 11).is_ok());
        assert!(smallfirenet(6, 11).is_err());
    }

    #[test]
    fn bn_mode_switch_only_changes_norm_rows() {
        let w = count_params(&tinynet(8, 3, 11).unwrap());
        let c = count_params(&tinynet(8, 3, 11).unwrap().with_bn_mode(BnMode::ChannelAxis).unwrap());
        assert_eq!(w.rows.len(), c.rows.len());
        for (a, b) in w.rows.iter().zip(&c.rows) {
            if a.kind != "batchnorm" {
                assert_eq!(a, b);
            } else {
                assert_eq!(b.params, 16);
            }
        }
    }

    #[test]
    fn softmax_required_at_end() {
        let r = NetworkSpec::new(
            "bad",
            Shape::image96(),
            vec![
                LayerSpec::Conv(ConvSpec::new(11, 1, Padding::Same).unwrap()),
                LayerSpec::Gap,
            ],
            BnMode::WidthAxis,
        );
        assert!(r.is_err());
    }
}
