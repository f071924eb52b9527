//! Bit-operation (BoPs) accounting, model byte sizes and the `.mlpz` model
//! file format.
//!
//! A dense layer with fan-in `n` and fan-out `m` costs `m n (1 - f_p) b_a b_w`
//! for its multipliers. Accumulator cost comes in two flavours:
//!
//! * [`AdderModel::Scaled`] (default): `m n (b_a + b_w) log2(n)`. This is the
//!   accounting that reproduces the published totals, e.g. 75,960,427.38 BoPs
//!   for the FP32 `[84, 500, 10, 500, 2]` network.
//! * [`AdderModel::Additive`]: `m n (b_a + b_w + log2(n))`, the per-layer form.
//!
//! The first layer multiplies network inputs (`b_i` bits), every other layer
//! multiplies activations (`b_a` bits).

mod format;

pub use format::{
    deserialize_model, model_size, read_model, serialize_dense, serialize_quantized,
    write_model, LayerEncoding, ModelFile, QuantLayout, MLPZ_HEADER_LEN, MLPZ_MAGIC,
    MLPZ_VERSION,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitWidths {
    pub input: u32,
    pub activation: u32,
    pub weight: u32,
    /// Carried for completeness; no accounting term uses it.
    pub output: u32,
}

impl BitWidths {
    pub const FP32: BitWidths = BitWidths::uniform(32);

    /// Full-precision input, INT8 weights and activations.
    pub const INT8: BitWidths = BitWidths {
        input: 32,
        activation: 8,
        weight: 8,
        output: 8,
    };

    pub const fn uniform(bits: u32) -> Self {
        Self {
            input: bits,
            activation: bits,
            weight: bits,
            output: bits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.activation == 0 || self.weight == 0 || self.output == 0 {
            return Err(Error::input("bit widths must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdderModel {
    #[default]
    Scaled,
    Additive,
}

fn check_fraction(f_p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&f_p) {
        return Err(Error::input(format!("pruned fraction {f_p} outside [0, 1]")));
    }
    Ok(())
}

/// Convolutional layer with `m` filters, `n` input channels and a `k x k`
/// kernel.
pub fn bops_conv(m: usize, n: usize, k: usize, b_a: u32, b_w: u32) -> Result<f64> {
    if m == 0 || n == 0 || k == 0 {
        return Err(Error::input("layer sizes must be > 0"));
    }
    let (ba, bw) = (b_a as f64, b_w as f64);
    let nk2 = (n * k * k) as f64;
    Ok(m as f64 * nk2 * (ba * bw + ba + bw + nk2.log2()))
}

/// Dense layer `n -> m` with a fraction `f_p` of its weights pruned,
/// per-layer additive accumulator cost.
pub fn bops_dense(n: usize, m: usize, b_a: u32, b_w: u32, f_p: f64) -> Result<f64> {
    check_fraction(f_p)?;
    if m == 0 || n == 0 {
        return Err(Error::input("layer sizes must be > 0"));
    }
    let (ba, bw) = (b_a as f64, b_w as f64);
    let mn = (m * n) as f64;
    Ok(mn * ((1.0 - f_p) * ba * bw + ba + bw + (n as f64).log2()))
}

/// One term per weight matrix (input layer first).
pub fn bops_mlp_terms(dims: &[usize], b: &BitWidths, f_p: f64, adder: AdderModel) -> Result<Vec<f64>> {
    check_fraction(f_p)?;
    b.validate()?;
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::input(format!("invalid layer sizes {dims:?}")));
    }
    let bw = b.weight as f64;
    Ok(dims
        .windows(2)
        .enumerate()
        .map(|(k, pair)| {
            let (n, m) = (pair[0] as f64, pair[1] as f64);
            let bx = if k == 0 { b.input } else { b.activation } as f64;
            let mult = n * m * bx * bw * (1.0 - f_p);
            let add = match adder {
                AdderModel::Scaled => n * m * (bx + bw) * n.log2(),
                AdderModel::Additive => n * m * (bx + bw + n.log2()),
            };
            mult + add
        })
        .collect())
}

pub fn bops_mlp(dims: &[usize], b: &BitWidths, f_p: f64) -> Result<f64> {
    Ok(bops_mlp_terms(dims, b, f_p, AdderModel::Scaled)?.iter().sum())
}

pub fn reduction_pct(current: f64, baseline: f64) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::input(format!("baseline {baseline} must be > 0")));
    }
    Ok(100.0 * (1.0 - current / baseline))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub label: String,
    pub sparsity: f64,
    pub bits: BitWidths,
    pub per_layer_bops: Vec<f64>,
    pub total_bops: f64,
    pub baseline_bops: f64,
    pub reduction_pct: f64,
    pub model_bytes: u64,
    pub baseline_bytes: u64,
    pub size_reduction_pct: f64,
}

impl ComplexityReport {
    /// Compares a model at `bits`/`f_p` against the unpruned FP32 network of
    /// the same shape.
    pub fn new(
        label: impl Into<String>,
        dims: &[usize],
        bits: BitWidths,
        f_p: f64,
        model_bytes: u64,
        baseline_bytes: u64,
    ) -> Result<Self> {
        let per_layer_bops = bops_mlp_terms(dims, &bits, f_p, AdderModel::Scaled)?;
        let total_bops = per_layer_bops.iter().sum();
        let baseline_bops = bops_mlp(dims, &BitWidths::FP32, 0.0)?;
        Ok(Self {
            label: label.into(),
            sparsity: f_p,
            bits,
            per_layer_bops,
            total_bops,
            baseline_bops,
            reduction_pct: reduction_pct(total_bops, baseline_bops)?,
            model_bytes,
            baseline_bytes,
            size_reduction_pct: reduction_pct(model_bytes as f64, baseline_bytes as f64)?,
        })
    }

    pub fn table_row(&self) -> String {
        format!(
            "{:<16} {:>8.2} {:>18.2} {:>8.2}% {:>10} {:>8.2}%",
            self.label,
            self.sparsity,
            self.total_bops,
            self.reduction_pct,
            self.model_bytes,
            self.size_reduction_pct
        )
    }

    pub fn table_header() -> String {
        format!(
            "{:<16} {:>8} {:>18} {:>9} {:>10} {:>9}",
            "model", "sparsity", "bops", "bops_red", "bytes", "size_red"
        )
    }
}
