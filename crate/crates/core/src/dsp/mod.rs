//! Receiver linear DSP and quality metrics.
//!
//! The linear equalizer (LE) is chromatic dispersion compensation in the
//! frequency domain, an RRC matched filter, downsampling at the symbol
//! instants and a per-polarization complex gain `K` fitted to the transmitted
//! symbols.

mod metrics;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::txsim::{angular_frequencies, rrc_taps, DualPolWaveform, FiberParams, LinkOutput, TxConfig};
use crate::{Error, Result};

pub use metrics::{ber_to_q, bit_errors, compute_ber, q_to_ber, QualityMetrics};

/// Aligned transmitted and received symbols, one sample per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    pub tx_h: Vec<Complex64>,
    pub tx_v: Vec<Complex64>,
    pub rx_h: Vec<Complex64>,
    pub rx_v: Vec<Complex64>,
    pub launch_power_dbm: f64,
}

/// Selects one polarization of a dual-polarization signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn name(self) -> &'static str {
        match self {
            Polarization::H => "h",
            Polarization::V => "v",
        }
    }
}

impl SymbolBlock {
    pub fn new(
        tx_h: Vec<Complex64>,
        tx_v: Vec<Complex64>,
        rx_h: Vec<Complex64>,
        rx_v: Vec<Complex64>,
        launch_power_dbm: f64,
    ) -> Result<Self> {
        let n = tx_h.len();
        if n == 0 || tx_v.len() != n || rx_h.len() != n || rx_v.len() != n {
            return Err(Error::input(format!(
                "symbol sequences must be non-empty and equal length ({}, {}, {}, {})",
                tx_h.len(),
                tx_v.len(),
                rx_h.len(),
                rx_v.len()
            )));
        }
        Ok(Self {
            tx_h,
            tx_v,
            rx_h,
            rx_v,
            launch_power_dbm,
        })
    }

    pub fn len(&self) -> usize {
        self.tx_h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tx_h.is_empty()
    }

    pub fn tx(&self, pol: Polarization) -> &[Complex64] {
        match pol {
            Polarization::H => &self.tx_h,
            Polarization::V => &self.tx_v,
        }
    }

    pub fn rx(&self, pol: Polarization) -> &[Complex64] {
        match pol {
            Polarization::H => &self.rx_h,
            Polarization::V => &self.rx_v,
        }
    }

    /// Rounds every sample to single precision, matching what the dataset
    /// container stores.
    pub fn to_f32_precision(&self) -> Self {
        let round = |x: &[Complex64]| {
            x.iter()
                .map(|s| Complex64::new(s.re as f32 as f64, s.im as f32 as f64))
                .collect()
        };
        Self {
            tx_h: round(&self.tx_h),
            tx_v: round(&self.tx_v),
            rx_h: round(&self.rx_h),
            rx_v: round(&self.rx_v),
            launch_power_dbm: self.launch_power_dbm,
        }
    }

    /// Hard-decision metrics of the received symbols on `range`.
    pub fn metrics(&self, pol: Polarization, range: std::ops::Range<usize>) -> Result<QualityMetrics> {
        let rx = self
            .rx(pol)
            .get(range.clone())
            .ok_or_else(|| Error::input("metric range outside block"))?;
        QualityMetrics::measure(rx, &self.tx(pol)[range])
    }
}

fn apply_spectral(x: &mut [Complex64], response: &[Complex64], planner: &mut FftPlanner<f64>) {
    let n = x.len();
    planner.plan_fft_forward(n).process(x);
    let norm = 1.0 / n as f64;
    x.iter_mut().zip(response).for_each(|(s, r)| *s *= r * norm);
    planner.plan_fft_inverse(n).process(x);
}

/// Frequency-domain CD compensation: multiplies each polarization's spectrum by
/// `exp(-i beta2 w^2 L / 2)` with `L` the total link length.
pub fn cdc_frequency_domain(w: &DualPolWaveform, fiber: &FiberParams) -> DualPolWaveform {
    let length_m = fiber.total_length_km() * 1e3;
    if length_m == 0.0 {
        return w.clone();
    }
    let beta2 = fiber.beta2();
    let response: Vec<Complex64> = angular_frequencies(w.len(), w.sample_rate_hz)
        .into_iter()
        .map(|om| Complex64::from_polar(1.0, -beta2 * om * om * length_m / 2.0))
        .collect();
    let mut planner = FftPlanner::new();
    let mut out = w.clone();
    apply_spectral(&mut out.h, &response, &mut planner);
    apply_spectral(&mut out.v, &response, &mut planner);
    out
}

/// Circular RRC matched filter followed by sampling at `delay + k * sps` for
/// `k < n_symbols`. `delay_samples` should be
/// [`TxConfig::total_filter_delay_samples`].
pub fn matched_filter_downsample(
    w: &DualPolWaveform,
    tx: &TxConfig,
    delay_samples: usize,
    n_symbols: usize,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let len = w.len();
    if n_symbols == 0 || n_symbols * tx.sps > len {
        return Err(Error::Framing(format!(
            "{n_symbols} symbols at {} sps do not fit in {len} samples",
            tx.sps
        )));
    }
    let taps = rrc_taps(tx.sps, tx.rolloff, tx.filter_span_symbols)?;
    let mut kernel = vec![Complex64::new(0.0, 0.0); len];
    for (n, &t) in taps.iter().enumerate() {
        kernel[n % len] += t;
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut kernel);
    let sample = |x: &[Complex64], planner: &mut FftPlanner<f64>| -> Vec<Complex64> {
        let mut y = x.to_vec();
        apply_spectral(&mut y, &kernel, planner);
        (0..n_symbols)
            .map(|k| y[(delay_samples + k * tx.sps) % len])
            .collect()
    };
    let h = sample(&w.h, &mut planner);
    let v = sample(&w.v, &mut planner);
    Ok((h, v))
}

/// Least-squares complex gain `K = <tx, rx> / ||rx||^2` (conjugate-linear in
/// `rx`), returning `K * rx` and `K`.
pub fn normalize_kdsp(rx: &[Complex64], tx: &[Complex64]) -> Result<(Vec<Complex64>, Complex64)> {
    if rx.is_empty() || rx.len() != tx.len() {
        return Err(Error::input(format!(
            "normalization needs equal non-empty lengths (rx={}, tx={})",
            rx.len(),
            tx.len()
        )));
    }
    let energy: f64 = rx.iter().map(|s| s.norm_sqr()).sum();
    if energy == 0.0 {
        return Err(Error::Degenerate("received sequence is identically zero".into()));
    }
    let inner: Complex64 = rx.iter().zip(tx).map(|(r, t)| t * r.conj()).sum();
    let k = inner / energy;
    Ok((rx.iter().map(|&r| r * k).collect(), k))
}

/// Full linear equalizer: CDC, matched filter, downsampling and per-polarization
/// K normalization.
pub fn linear_equalize(link: &LinkOutput, tx: &TxConfig, fiber: &FiberParams) -> Result<SymbolBlock> {
    let compensated = cdc_frequency_domain(&link.rx, fiber);
    let (rx_h, rx_v) = matched_filter_downsample(
        &compensated,
        tx,
        tx.total_filter_delay_samples(),
        link.n_symbols(),
    )?;
    let (rx_h, _) = normalize_kdsp(&rx_h, &link.tx_h)?;
    let (rx_v, _) = normalize_kdsp(&rx_v, &link.tx_v)?;
    SymbolBlock::new(
        link.tx_h.clone(),
        link.tx_v.clone(),
        rx_h,
        rx_v,
        link.rx.launch_power_dbm,
    )
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::{Rng, SeedableRng};
    use rand_mt::Mt64;

    use super::*;
    use crate::txsim::{launch, ssfm_span};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_symbols(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = Mt64::seed_from_u64(seed);
        (0..n)
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect()
    }

    #[test]
    fn cdc_zero_length_is_identity() {
        let w = DualPolWaveform::new(random_symbols(64, 1), random_symbols(64, 2), 1e9, 0.0).unwrap();
        let fiber = FiberParams {
            n_spans: 0,
            ..FiberParams::ssmf()
        };
        assert_eq!(cdc_frequency_domain(&w, &fiber), w);
    }

    #[test]
    fn cdc_inverts_dispersion_only_link() {
        let w = DualPolWaveform::new(random_symbols(1024, 3), random_symbols(1024, 4), 240e9, 0.0)
            .unwrap();
        let fiber = FiberParams {
            alpha_db_per_km: 0.0,
            gamma_w_km: 0.0,
            n_spans: 3,
            ..FiberParams::ssmf()
        };
        let mut x = w.clone();
        for _ in 0..fiber.n_spans {
            x = ssfm_span(&x, &fiber).unwrap();
        }
        let back = cdc_frequency_domain(&x, &fiber);
        let err: f64 = back
            .h
            .iter()
            .chain(&back.v)
            .zip(w.h.iter().chain(&w.v))
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        assert!((err / w.energy()).sqrt() < 1e-9);
        assert!((back.energy() / w.energy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cdc_tone_phase() {
        let len = 512;
        let fs = 240e9;
        let bin = 21;
        let tone: Vec<_> = (0..len)
            .map(|n| Complex64::from_polar(1.0, 2.0 * PI * (bin * n) as f64 / len as f64))
            .collect();
        let w = DualPolWaveform::new(tone.clone(), tone.clone(), fs, 0.0).unwrap();
        let fiber = FiberParams::ssmf();
        let out = cdc_frequency_domain(&w, &fiber);
        let omega = 2.0 * PI * bin as f64 * fs / len as f64;
        let expected = -fiber.beta2() * omega * omega * fiber.total_length_km() * 1e3 / 2.0;
        for (o, i) in out.h.iter().zip(&tone) {
            let d = ((o / i).arg() - expected).rem_euclid(2.0 * PI);
            assert!(d.min(2.0 * PI - d) < 1e-6);
        }
    }

    #[test]
    fn back_to_back_recovers_symbols() {
        let tx = TxConfig::default();
        let (sh, sv, w) = launch(&tx, 512).unwrap();
        let (rh, rv) =
            matched_filter_downsample(&w, &tx, tx.total_filter_delay_samples(), 512).unwrap();
        let (rh, _) = normalize_kdsp(&rh, &sh).unwrap();
        let (rv, _) = normalize_kdsp(&rv, &sv).unwrap();
        for (a, b) in rh.iter().zip(&sh).chain(rv.iter().zip(&sv)) {
            assert!((a - b).norm() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_waveform_gives_zero_symbols() {
        let z = vec![c(0.0, 0.0); 1024];
        let w = DualPolWaveform::new(z.clone(), z, 240e9, 0.0).unwrap();
        let tx = TxConfig::default();
        let (h, v) = matched_filter_downsample(&w, &tx, tx.total_filter_delay_samples(), 128).unwrap();
        assert!(h.iter().chain(&v).all(|s| s.norm() == 0.0));
    }

    #[test]
    fn too_many_symbols_is_framing_error() {
        let z = vec![c(0.0, 0.0); 64];
        let w = DualPolWaveform::new(z.clone(), z, 240e9, 0.0).unwrap();
        let tx = TxConfig::default();
        assert!(matches!(
            matched_filter_downsample(&w, &tx, 0, 9),
            Err(Error::Framing(_))
        ));
    }

    #[test]
    fn kdsp_examples() {
        let tx = random_symbols(100, 5);
        let (_, k) = normalize_kdsp(&tx, &tx).unwrap();
        assert!((k - c(1.0, 0.0)).norm() < 1e-15);
        let g = Complex64::from_polar(2.0, PI / 4.0);
        let rx: Vec<_> = tx.iter().map(|t| t * g).collect();
        let (_, k) = normalize_kdsp(&rx, &tx).unwrap();
        assert!((k - Complex64::from_polar(0.5, -PI / 4.0)).norm() < 1e-14);
        assert!(matches!(
            normalize_kdsp(&[c(0.0, 0.0)], &[c(1.0, 0.0)]),
            Err(Error::Degenerate(_))
        ));
        assert!(normalize_kdsp(&[], &[]).is_err());
    }

    #[test]
    fn kdsp_is_optimal_against_random_scalars() {
        let tx = random_symbols(500, 6);
        let noise = random_symbols(500, 7);
        let g = c(0.3, -1.1);
        let rx: Vec<_> = tx.iter().zip(&noise).map(|(t, n)| t * g + n * 0.2).collect();
        let (norm_rx, _) = normalize_kdsp(&rx, &tx).unwrap();
        let residual = |y: &[Complex64]| -> f64 { y.iter().zip(&tx).map(|(a, b)| (a - b).norm_sqr()).sum() };
        let best = residual(&norm_rx);
        let mut rng = Mt64::seed_from_u64(8);
        for _ in 0..100 {
            let cand = c(rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0);
            let y: Vec<_> = rx.iter().map(|r| r * cand).collect();
            assert!(best <= residual(&y));
        }
    }
}
