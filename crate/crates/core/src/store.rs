//! The `TNET` model file and the architecture descriptor text.
//!
//! # Descriptor grammar
//!
//! One statement per line. Blank lines and lines starting with `#` are
//! ignored; a `#` later in a line starts a trailing comment.
//!
//! ```text
//! name <text>                     header, default "custom"
//! input <C>x<H>x<W>               header, default 1x96x96
//! bnmode width|channel            header, default width
//! conv <K>x<K> f=<N> [pad=same|valid]    K in {1, 3, 5}, pad defaults to same
//! relu
//! bn
//! maxpool 2x2
//! tiny f=<N>
//! fire s=<N> e1=<N> e3=<N>
//! smallfire s=<N> e1=<N> e3=<N>
//! dense f=<N>
//! gap
//! softmax
//! ```
//!
//! # File layout
//!
//! All integers are unsigned 32-bit little-endian; no padding anywhere.
//!
//! ```text
//! magic        4 bytes  "TNET"
//! version      u32      1
//! descriptor   u32 byte length, UTF-8 text
//! blob count   u32
//! blob*        u32 name length, UTF-8 name,
//!              u32 rank, rank x u32 extents,
//!              prod(extents) x f32 little-endian, row-major
//! ```
//!
//! Blobs follow the model's topological parameter order and include the
//! non-trainable batch-norm running statistics.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::arch::{LayerSpec, NetworkSpec};
use crate::blocks::{FireConfig, SmallFireConfig, TinyConfig};
use crate::error::{Error, Result};
use crate::layers::{BnMode, ConvSpec, Padding};
use crate::model::{Model, Param, ParamStore};
use crate::tensor::{Shape, Tensor};

pub const MAGIC: [u8; 4] = *b"TNET";
pub const VERSION: u32 = 1;

/// Parses descriptor text into a shape-checked spec.
pub fn parse_descriptor(text: &str) -> Result<NetworkSpec> {
    let mut name = "custom".to_string();
    let mut input = Shape::image96();
    let mut bn_mode = BnMode::WidthAxis;
    let mut layers = Vec::new();
    let mut lines = Vec::new();
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Descriptor { line: line_no, msg };
        let (word, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        match word {
            "name" => {
                if rest.is_empty() {
                    return Err(err("name needs a value".into()));
                }
                name = rest.to_string();
            }
            "input" => input = parse_input(rest).map_err(err)?,
            "bnmode" => {
                bn_mode = BnMode::parse(rest).ok_or_else(|| err(format!("unknown bnmode {rest:?}")))?;
            }
            _ => {
                layers.push(parse_layer(word, rest).map_err(err)?);
                lines.push(line_no);
            }
        }
    }
    if layers.is_empty() {
        return Err(Error::Descriptor {
            line: last_line.max(1),
            msg: "descriptor declares no layers".into(),
        });
    }
    let input = input.with_batch(1)?;
    if let Err(e) = crate::arch::compile_layers(input, &layers, bn_mode) {
        return Err(Error::Descriptor {
            line: lines[e.layer],
            msg: e.error.to_string(),
        });
    }
    NetworkSpec::new(name, input, layers, bn_mode).map_err(|e| Error::Descriptor {
        line: *lines.last().expect("non-empty"),
        msg: e.to_string(),
    })
}

fn parse_input(text: &str) -> std::result::Result<Shape, String> {
    let parts: Vec<&str> = text.split('x').collect();
    let dims: Vec<usize> = parts
        .iter()
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format!("input must be CxHxW, got {text:?}"))?;
    if dims.len() != 3 {
        return Err(format!("input must be CxHxW, got {text:?}"));
    }
    Shape::new(1, dims[0], dims[1], dims[2]).map_err(|e| e.to_string())
}

struct Args<'a> {
    word: &'a str,
    pairs: Vec<(&'a str, &'a str)>,
    positional: Vec<&'a str>,
}

impl<'a> Args<'a> {
    fn parse(word: &'a str, rest: &'a str) -> std::result::Result<Self, String> {
        let mut pairs = Vec::new();
        let mut positional = Vec::new();
        for tok in rest.split_whitespace() {
            match tok.split_once('=') {
                Some((k, v)) if !k.is_empty() && !v.is_empty() => {
                    if pairs.iter().any(|(key, _)| *key == k) {
                        return Err(format!("{word}: duplicate key {k:?}"));
                    }
                    pairs.push((k, v));
                }
                Some(_) => return Err(format!("{word}: malformed key=value {tok:?}")),
                None => positional.push(tok),
            }
        }
        Ok(Args {
            word,
            pairs,
            positional,
        })
    }

    fn allow(&self, keys: &[&str], max_positional: usize) -> std::result::Result<(), String> {
        if let Some((k, _)) = self.pairs.iter().find(|(k, _)| !keys.contains(k)) {
            return Err(format!("{}: unknown key {k:?}", self.word));
        }
        if self.positional.len() > max_positional {
            return Err(format!(
                "{}: unexpected argument {:?}",
                self.word, self.positional[max_positional]
            ));
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    fn count(&self, key: &str) -> std::result::Result<usize, String> {
        let v = self.raw(key).ok_or_else(|| format!("{}: missing {key}=", self.word))?;
        v.parse()
            .map_err(|_| format!("{}: malformed key=value {key}={v:?}", self.word))
    }
}

fn parse_kernel(word: &str, tok: Option<&str>) -> std::result::Result<usize, String> {
    let tok = tok.ok_or_else(|| format!("{word}: missing kernel size such as 3x3"))?;
    let (a, b) = tok
        .split_once('x')
        .ok_or_else(|| format!("{word}: malformed kernel size {tok:?}"))?;
    let (a, b): (usize, usize) = match (a.parse(), b.parse()) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return Err(format!("{word}: malformed kernel size {tok:?}")),
    };
    if a != b {
        return Err(format!("{word}: unsupported kernel {tok}; only square kernels"));
    }
    Ok(a)
}

fn fire_args(args: &Args) -> std::result::Result<FireConfig, String> {
    args.allow(&["s", "e1", "e3"], 0)?;
    FireConfig::new(args.count("s")?, args.count("e1")?, args.count("e3")?).map_err(|e| e.to_string())
}

fn parse_layer(word: &str, rest: &str) -> std::result::Result<LayerSpec, String> {
    let args = Args::parse(word, rest)?;
    let bare = |args: &Args| args.allow(&[], 0);
    Ok(match word {
        "conv" => {
            args.allow(&["f", "pad"], 1)?;
            let k = parse_kernel(word, args.positional.first().copied())?;
            let padding = match args.raw("pad") {
                None | Some("same") => Padding::Same,
                Some("valid") => Padding::Valid,
                Some(p) => return Err(format!("conv: unknown padding {p:?}")),
            };
            LayerSpec::Conv(ConvSpec::new(args.count("f")?, k, padding).map_err(|e| e.to_string())?)
        }
        "maxpool" => {
            args.allow(&[], 1)?;
            if let Some(k) = args.positional.first() {
                if parse_kernel(word, Some(k))? != 2 {
                    return Err(format!("maxpool: only 2x2 pooling is supported, got {k}"));
                }
            }
            LayerSpec::MaxPool
        }
        "relu" => bare(&args).map(|_| LayerSpec::Relu)?,
        "bn" => bare(&args).map(|_| LayerSpec::BatchNorm)?,
        "gap" => bare(&args).map(|_| LayerSpec::Gap)?,
        "softmax" => bare(&args).map(|_| LayerSpec::Softmax)?,
        "tiny" => {
            args.allow(&["f"], 0)?;
            LayerSpec::Tiny(TinyConfig::new(args.count("f")?).map_err(|e| e.to_string())?)
        }
        "fire" => LayerSpec::Fire(fire_args(&args)?),
        "smallfire" => LayerSpec::SmallFire(SmallFireConfig {
            fire: fire_args(&args)?,
        }),
        "dense" => {
            args.allow(&["f"], 0)?;
            LayerSpec::Dense { out: args.count("f")? }
        }
        other => return Err(format!("unknown layer word {other:?}")),
    })
}

/// Canonical descriptor text; `parse_descriptor` of the result is
/// structurally equal to `spec` and carries the same name.
pub fn to_descriptor(spec: &NetworkSpec) -> String {
    let mut out = String::new();
    let name = spec.name.replace(['\n', '#'], " ");
    let name = if name.trim().is_empty() {
        "custom".to_string()
    } else {
        name.trim().to_string()
    };
    let s = spec.input;
    writeln!(out, "name {name}").unwrap();
    writeln!(out, "input {}x{}x{}", s.c(), s.h(), s.w()).unwrap();
    writeln!(out, "bnmode {}", spec.bn_mode.as_str()).unwrap();
    for layer in &spec.layers {
        match layer {
            LayerSpec::Conv(c) => writeln!(
                out,
                "conv {}x{} f={} pad={}",
                c.kh,
                c.kw,
                c.out_channels,
                c.padding.as_str()
            ),
            LayerSpec::Relu => writeln!(out, "relu"),
            LayerSpec::BatchNorm => writeln!(out, "bn"),
            LayerSpec::MaxPool => writeln!(out, "maxpool 2x2"),
            LayerSpec::Tiny(t) => writeln!(out, "tiny f={}", t.filters),
            LayerSpec::Fire(f) => writeln!(out, "fire s={} e1={} e3={}", f.s1x1, f.e1x1, f.e3x3),
            LayerSpec::SmallFire(sf) => {
                let f = sf.fire;
                writeln!(out, "smallfire s={} e1={} e3={}", f.s1x1, f.e1x1, f.e3x3)
            }
            LayerSpec::Dense { out: n } => writeln!(out, "dense f={n}"),
            LayerSpec::Gap => writeln!(out, "gap"),
            LayerSpec::Softmax => writeln!(out, "softmax"),
        }
        .unwrap();
    }
    out
}

fn check_params(spec: &NetworkSpec, params: &ParamStore<f32>) -> Result<()> {
    Model::from_parts(spec, params.clone()).map(|_| ())
}

/// Serializes `spec` and `params` to bytes in the `TNET` layout.
pub fn encode(spec: &NetworkSpec, params: &ParamStore<f32>) -> Result<Vec<u8>> {
    check_params(spec, params)?;
    let descriptor = to_descriptor(spec);
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_bytes(&mut out, descriptor.as_bytes())?;
    put_u32(&mut out, params.len())?;
    for p in params.iter() {
        put_bytes(&mut out, p.name.as_bytes())?;
        put_u32(&mut out, p.dims.len())?;
        for &d in &p.dims {
            put_u32(&mut out, d)?;
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidConfig(format!("{v} does not fit a 32-bit field")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) -> Result<()> {
    put_u32(out, bytes.len())?;
    out.extend_from_slice(bytes);
    Ok(())
}

/// Writes a model file, truncating any existing file.
pub fn save(spec: &NetworkSpec, params: &ParamStore<f32>, path: &Path) -> Result<()> {
    fs::write(path, encode(spec, params)?)?;
    Ok(())
}

pub fn save_model(model: &Model<f32>, path: &Path) -> Result<()> {
    save(model.spec(), model.params(), path)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Truncated(what.to_string()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn text(&mut self, what: &str) -> Result<&'a str> {
        let n = self.u32(what)? as usize;
        let b = self.take(n, what)?;
        std::str::from_utf8(b).map_err(|_| Error::BlobMismatch {
            name: what.to_string(),
            msg: "invalid UTF-8".into(),
        })
    }
}

/// Parses a `TNET` byte image.
pub fn decode(bytes: &[u8]) -> Result<(NetworkSpec, ParamStore<f32>)> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let spec = parse_descriptor(r.text("descriptor")?)?;
    let template = Model::<f32>::init(&spec, 0);
    let expected = template.params();
    let count = r.u32("blob count")? as usize;
    if count != expected.len() {
        return Err(Error::BlobMismatch {
            name: "<all>".into(),
            msg: format!("expected {} parameter blobs, found {count}", expected.len()),
        });
    }
    let mut params = Vec::with_capacity(count);
    for (i, want) in expected.iter().enumerate() {
        let name = r.text(&format!("name of blob #{i}"))?.to_string();
        if name != want.name {
            return Err(Error::BlobMismatch {
                name,
                msg: format!("expected blob {}", want.name),
            });
        }
        let rank = r.u32(&name)? as usize;
        if rank != want.dims.len() {
            return Err(Error::BlobMismatch {
                name,
                msg: format!("expected rank {}, found {rank}", want.dims.len()),
            });
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32(&name)? as usize);
        }
        if dims != want.dims {
            return Err(Error::BlobMismatch {
                msg: format!("expected extents {:?}, found {dims:?}", want.dims),
                name,
            });
        }
        let n = want.value.data().len();
        let raw = r.take(n * 4, &name)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        params.push(Param {
            value: Tensor::from_vec(want.value.shape(), data)?,
            name,
            dims,
            trainable: want.trainable,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::BlobMismatch {
            name: "<trailer>".into(),
            msg: format!("{} unexpected trailing bytes", bytes.len() - r.pos),
        });
    }
    Ok((spec, ParamStore::new(params)))
}

pub fn load(path: &Path) -> Result<(NetworkSpec, ParamStore<f32>)> {
    decode(&fs::read(path)?)
}

pub fn load_model(path: &Path) -> Result<Model<f32>> {
    let (spec, params) = load(path)?;
    Model::from_parts(&spec, params)
}
