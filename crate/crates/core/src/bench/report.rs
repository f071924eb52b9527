use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LatencyStats;
use crate::dsp::Polarization;
use crate::Result;

pub const Q_CSV: &str = "q_vs_sparsity.csv";
pub const COMPLEXITY_CSV: &str = "complexity.csv";
pub const LATENCY_CSV: &str = "latency.csv";
pub const LATENCY_RAW_CSV: &str = "latency_raw.csv";
pub const Q_PLOT: &str = "fig_q_vs_sparsity.dat";
pub const COMPLEXITY_PLOT: &str = "fig_complexity.dat";
pub const LATENCY_PLOT: &str = "fig_latency.dat";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "LE")]
    Le,
    #[serde(rename = "FP32")]
    Fp32,
    #[serde(rename = "pruned")]
    Pruned,
    #[serde(rename = "pruned+quant")]
    PrunedQuant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QRow {
    pub power_dbm: f64,
    pub polarization: Polarization,
    pub sparsity: f64,
    pub stage: Stage,
    pub ber: f64,
    pub q_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    /// Empty for analytic rows computed without a trained model.
    pub power_dbm: Option<f64>,
    pub model: String,
    pub sparsity: f64,
    pub bops: String,
    pub bops_reduction_pct: String,
    pub bytes: u64,
    pub size_reduction_pct: String,
}

impl ComplexityRow {
    pub fn from_report(power_dbm: Option<f64>, r: &crate::complexity::ComplexityReport) -> Self {
        Self {
            power_dbm,
            model: r.label.clone(),
            sparsity: r.sparsity,
            bops: format!("{:.2}", r.total_bops),
            bops_reduction_pct: format!("{:.2}", r.reduction_pct),
            bytes: r.model_bytes,
            size_reduction_pct: format!("{:.2}", r.size_reduction_pct),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LatencyRow {
    model_variant: String,
    mean_s: f64,
    sigma_s: f64,
    per_symbol_us: f64,
    n_repeats: usize,
    n_inferences: usize,
    n_symbols: usize,
    coarse_timer: bool,
    energy: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineResults {
    pub q_rows: Vec<QRow>,
    pub complexity: Vec<ComplexityRow>,
    pub latency: Vec<LatencyStats>,
}

impl PipelineResults {
    pub fn q(&self, power: f64, pol: Polarization, stage: Stage, sparsity: f64) -> Option<f64> {
        self.q_rows
            .iter()
            .find(|r| r.power_dbm == power && r.polarization == pol && r.stage == stage && r.sparsity == sparsity)
            .map(|r| r.q_db)
    }
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn read_q_csv(path: impl AsRef<Path>) -> Result<Vec<QRow>> {
    read_rows(path.as_ref())
}

pub fn read_complexity_csv(path: impl AsRef<Path>) -> Result<Vec<ComplexityRow>> {
    read_rows(path.as_ref())
}

/// Writes the CSV reports and one gnuplot-style data file per figure.
pub fn emit_report(results: &PipelineResults, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_rows(
        &dir.join(Q_CSV),
        &["power_dbm", "polarization", "sparsity", "stage", "ber", "q_db"],
        &results.q_rows,
    )?;
    emit_complexity(&results.complexity, dir)?;
    let latency: Vec<LatencyRow> = results
        .latency
        .iter()
        .map(|s| LatencyRow {
            model_variant: s.model_variant.clone(),
            mean_s: s.mean_s,
            sigma_s: s.sigma_s,
            per_symbol_us: s.per_symbol_us,
            n_repeats: s.n_repeats,
            n_inferences: s.n_inferences,
            n_symbols: s.n_symbols,
            coarse_timer: s.coarse_timer,
            energy: s.energy.clone(),
        })
        .collect();
    write_rows(
        &dir.join(LATENCY_CSV),
        &["model_variant", "mean_s", "sigma_s", "per_symbol_us", "n_repeats", "n_inferences", "n_symbols", "coarse_timer", "energy"],
        &latency,
    )?;
    let mut raw = csv::Writer::from_path(dir.join(LATENCY_RAW_CSV))?;
    raw.write_record(["model_variant", "repeat", "seconds_per_inference"])?;
    for s in &results.latency {
        for (i, t) in s.raw_s.iter().enumerate() {
            raw.write_record([s.model_variant.clone(), i.to_string(), t.to_string()])?;
        }
    }
    raw.flush()?;

    fs::write(dir.join(Q_PLOT), q_plot(results))?;
    fs::write(dir.join(LATENCY_PLOT), latency_plot(results))?;
    Ok(())
}

/// Writes only the complexity CSV and its plot file.
pub fn emit_complexity(rows: &[ComplexityRow], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_rows(
        &dir.join(COMPLEXITY_CSV),
        &["power_dbm", "model", "sparsity", "bops", "bops_reduction_pct", "bytes", "size_reduction_pct"],
        rows,
    )?;
    fs::write(dir.join(COMPLEXITY_PLOT), complexity_plot(rows))?;
    Ok(())
}

fn fmt_q(q: Option<f64>) -> String {
    q.map_or("NaN".into(), |q| format!("{q:.4}"))
}

/// One block per (power, polarization), separated by two blank lines.
fn q_plot(results: &PipelineResults) -> String {
    let mut out = String::from("# sparsity LE_q_db FP32_q_db pruned_q_db pruned_quant_q_db\n");
    let mut keys: Vec<(f64, Polarization)> = Vec::new();
    for r in &results.q_rows {
        if !keys.contains(&(r.power_dbm, r.polarization)) {
            keys.push((r.power_dbm, r.polarization));
        }
    }
    for (i, &(p, pol)) in keys.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        let _ = writeln!(out, "# power {p} dBm, polarization {}", pol.name());
        let le = results.q(p, pol, Stage::Le, 0.0);
        let fp = results.q(p, pol, Stage::Fp32, 0.0);
        let _ = writeln!(out, "0 {} {} {} {}", fmt_q(le), fmt_q(fp), fmt_q(fp), fmt_q(None));
        let mut sparsities: Vec<f64> = results
            .q_rows
            .iter()
            .filter(|r| r.power_dbm == p && r.polarization == pol && r.stage == Stage::Pruned)
            .map(|r| r.sparsity)
            .collect();
        sparsities.dedup();
        for s in sparsities {
            let _ = writeln!(
                out,
                "{s} {} {} {} {}",
                fmt_q(le),
                fmt_q(fp),
                fmt_q(results.q(p, pol, Stage::Pruned, s)),
                fmt_q(results.q(p, pol, Stage::PrunedQuant, s))
            );
        }
    }
    out
}

fn complexity_plot(rows: &[ComplexityRow]) -> String {
    let mut out = String::from("# model sparsity bops bytes\n");
    for r in rows {
        let _ = writeln!(out, "{} {} {} {}", r.model, r.sparsity, r.bops, r.bytes);
    }
    out
}

fn latency_plot(results: &PipelineResults) -> String {
    let mut out = String::from("# variant mean_ms sigma_ms per_symbol_us\n");
    for s in &results.latency {
        let _ = writeln!(
            out,
            "{} {:.6} {:.6} {:.6}",
            s.model_variant,
            s.mean_s * 1e3,
            s.sigma_s * 1e3,
            s.per_symbol_us
        );
    }
    out
}
