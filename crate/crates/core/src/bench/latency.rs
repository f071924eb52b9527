use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::LatencyConfig;
use crate::neuralnet::Equalizer;
use crate::{Error, Result};

/// Per-inference wall-clock statistics. `raw_s` holds one entry per repeat:
/// the mean time of that repeat's inferences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub model_variant: String,
    pub mean_s: f64,
    pub sigma_s: f64,
    pub per_symbol_us: f64,
    pub n_repeats: usize,
    pub n_inferences: usize,
    pub n_symbols: usize,
    pub timer_resolution_s: f64,
    pub coarse_timer: bool,
    pub energy: String,
    pub raw_s: Vec<f64>,
}

/// Smallest nonzero step observed between consecutive clock reads.
pub fn timer_resolution() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..64 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}

/// Repeats `n_symbols`-row windows from `rows` (cycling if needed) to build
/// the benchmark input.
pub fn latency_inputs(rows: ArrayView2<'_, f32>, n_symbols: usize) -> Result<Array2<f32>> {
    if rows.nrows() == 0 {
        return Err(Error::input("no windows to benchmark on"));
    }
    let idx: Vec<usize> = (0..n_symbols).map(|i| i % rows.nrows()).collect();
    Ok(rows.select(Axis(0), &idx))
}

/// Runs one untimed warm-up inference, then `n_repeats` measurements of
/// `n_inferences` back-to-back inferences over the same `n_symbols` inputs.
pub fn bench_latency<E: Equalizer<f32> + ?Sized>(
    variant: &str,
    eq: &E,
    inputs: ArrayView2<'_, f32>,
    cfg: &LatencyConfig,
) -> Result<LatencyStats> {
    if cfg.n_repeats == 0 || cfg.n_inferences == 0 {
        return Err(Error::input("latency protocol sizes must be > 0"));
    }
    if inputs.nrows() != cfg.n_symbols {
        return Err(Error::input(format!(
            "benchmark input has {} rows, protocol expects {}",
            inputs.nrows(),
            cfg.n_symbols
        )));
    }
    std::hint::black_box(eq.equalize(inputs)?);
    let mut raw = Vec::with_capacity(cfg.n_repeats);
    for _ in 0..cfg.n_repeats {
        let start = Instant::now();
        for _ in 0..cfg.n_inferences {
            std::hint::black_box(eq.equalize(std::hint::black_box(inputs))?);
        }
        raw.push(start.elapsed().as_secs_f64() / cfg.n_inferences as f64);
    }
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let sigma = (raw.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n).sqrt();
    let resolution = timer_resolution().as_secs_f64();
    let coarse = mean < 100.0 * resolution;
    if coarse {
        log::warn!(
            "{variant}: {mean:.3e} s per inference is under 100 timer ticks ({resolution:.1e} s); timings are unreliable"
        );
    }
    Ok(LatencyStats {
        model_variant: variant.to_string(),
        mean_s: mean,
        sigma_s: sigma,
        per_symbol_us: mean / cfg.n_symbols as f64 * 1e6,
        n_repeats: cfg.n_repeats,
        n_inferences: cfg.n_inferences,
        n_symbols: cfg.n_symbols,
        timer_resolution_s: resolution,
        coarse_timer: coarse,
        energy: "not measured".into(),
        raw_s: raw,
    })
}
