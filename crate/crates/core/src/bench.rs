//! Single-core inference latency measurement and speedup tables.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::{count_flops, NetworkSpec, PaperFigures};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;

/// Environment variable through which a thread count could be requested.
/// The engine only supports 1; anything else makes [`bench`] fail.
pub const THREADS_ENV: &str = "TINYCNN_THREADS";

/// Worker threads the engine would use for a forward pass.
pub fn internal_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(1)
}

pub fn ensure_single_thread() -> Result<()> {
    match internal_threads() {
        1 => Ok(()),
        n => Err(Error::Parallelism(n)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub warmup: usize,
    pub runs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { warmup: 10, runs: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub name: String,
    pub warmup: usize,
    pub runs: usize,
    pub latencies_ms: Vec<f64>,
    pub mean_ms: f64,
    /// Population standard deviation over the measured runs.
    pub std_ms: f64,
    pub params: u64,
    pub flops: u64,
    pub published: Option<PaperFigures>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fixed pseudo-random 96x96 probe image.
pub fn probe_input(model: &Model<f32>) -> Tensor<f32> {
    let shape = model.spec().input;
    let mut rng = ChaCha8Rng::seed_from_u64(0x96);
    let data = (0..shape.numel()).map(|_| rng.gen::<f32>()).collect();
    Tensor::from_vec(shape, data).expect("input shape")
}

/// Times `runs` single-image forward passes after `warmup` untimed ones.
pub fn bench(model: &Model<f32>, cfg: BenchConfig) -> Result<BenchReport> {
    ensure_single_thread()?;
    if cfg.runs == 0 {
        return Err(Error::InvalidConfig("at least one measured run is required".into()));
    }
    let x = probe_input(model);
    for _ in 0..cfg.warmup {
        std::hint::black_box(model.predict(&x)?);
    }
    let mut latencies_ms = Vec::with_capacity(cfg.runs);
    for _ in 0..cfg.runs {
        let t = Instant::now();
        std::hint::black_box(model.predict(std::hint::black_box(&x))?);
        latencies_ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let (mean_ms, std_ms) = mean_std(&latencies_ms);
    let spec = model.spec();
    let cost = count_flops(spec);
    Ok(BenchReport {
        name: spec.name.clone(),
        warmup: cfg.warmup,
        runs: cfg.runs,
        latencies_ms,
        mean_ms,
        std_ms,
        params: cost.total_params(),
        flops: cost.total_flops(),
        published: spec.paper_figures(),
    })
}

/// Benchmarks a freshly initialized model of `spec`.
pub fn bench_spec(spec: &NetworkSpec, cfg: BenchConfig) -> Result<BenchReport> {
    bench(&Model::<f32>::init(spec, 0), cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub report: BenchReport,
    /// Reference mean latency divided by this mean latency.
    pub speedup: f64,
    pub published_ms: Option<f64>,
    pub published_speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub reference: String,
    /// Sorted by ascending mean latency.
    pub rows: Vec<ComparisonRow>,
}

/// Ratio of published latencies, when both networks have them.
pub fn published_speedup(reference: &BenchReport, report: &BenchReport) -> Option<f64> {
    Some(reference.published?.latency_ms / report.published?.latency_ms)
}

pub fn compare(reports: &[BenchReport], reference: &str) -> Result<Comparison> {
    let base = reports
        .iter()
        .find(|r| r.name == reference)
        .ok_or_else(|| Error::MissingReference(reference.to_string()))?;
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            speedup: base.mean_ms / r.mean_ms,
            published_ms: r.published.map(|p| p.latency_ms),
            published_speedup: published_speedup(base, r),
            report: r.clone(),
        })
        .collect();
    rows.sort_by(|a, b| a.report.mean_ms.total_cmp(&b.report.mean_ms));
    Ok(Comparison {
        reference: reference.to_string(),
        rows,
    })
}

pub const CSV_HEADER: &str = "name,params,flops,mean_ms,std_ms,speedup";

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let b = &r.report;
            out += &format!(
                "{},{},{},{:.4},{:.4},{:.4}\n",
                b.name, b.params, b.flops, b.mean_ms, b.std_ms, r.speedup
            );
        }
        out
    }
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.prec$}"))
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "reference: {}", self.reference)?;
        writeln!(
            f,
            "{:<18} {:>9} {:>12} {:>10} {:>8} {:>8}   {:>12} {:>14}",
            "name", "params", "flops", "mean_ms", "std_ms", "speedup", "published_ms", "published_speed"
        )?;
        for r in &self.rows {
            let b = &r.report;
            writeln!(
                f,
                "{:<18} {:>9} {:>12} {:>10.3} {:>8.3} {:>8.1}   {:>12} {:>14}",
                b.name,
                b.params,
                b.flops,
                b.mean_ms,
                b.std_ms,
                r.speedup,
                opt(r.published_ms, 0),
                opt(r.published_speedup, 1)
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "network: {}", self.name)?;
        writeln!(f, "warmup runs: {}  measured runs: {}", self.warmup, self.runs)?;
        writeln!(f, "params: {}  flops: {}", self.params, self.flops)?;
        write!(f, "mean: {:.3} ms  std: {:.3} ms", self.mean_ms, self.std_ms)?;
        if let Some(p) = self.published {
            write!(f, "\npublished latency: {:.0} ms", p.latency_ms)?;
        }
        Ok(())
    }
}

/// One row of a previously written report CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub name: String,
    pub params: u64,
    pub flops: u64,
    pub mean_ms: f64,
    pub std_ms: f64,
}

/// Reads rows written by [`Comparison::to_csv`] or [`report_csv`].
pub fn parse_report_csv(text: &str) -> Result<Vec<CsvRow>> {
    let bad = |line: usize, msg: &str| Error::InvalidConfig(format!("report line {line}: {msg}"));
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("name,") {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 5 {
            return Err(bad(i + 1, "expected name,params,flops,mean_ms,std_ms[,speedup]"));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(i + 1, "malformed number"));
        rows.push(CsvRow {
            name: f[0].to_string(),
            params: num(f[1])? as u64,
            flops: num(f[2])? as u64,
            mean_ms: num(f[3])?,
            std_ms: num(f[4])?,
        });
    }
    if rows.is_empty() {
        return Err(Error::MissingReference("report contains no rows".into()));
    }
    Ok(rows)
}

/// A single report as CSV, with an optional speedup against `reference_ms`.
pub fn report_csv(report: &BenchReport, reference_ms: Option<f64>) -> String {
    let speedup = reference_ms.map_or(String::new(), |r| format!("{:.4}", r / report.mean_ms));
    format!(
        "{CSV_HEADER}\n{},{},{},{:.4},{:.4},{}\n",
        report.name, report.params, report.flops, report.mean_ms, report.std_ms, speedup
    )
}
