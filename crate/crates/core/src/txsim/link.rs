use num_complex::Complex64;

use super::{
    amplify_edfa, generate_prbs, shape_rrc_padded, AmplifierParams, DualPolWaveform, FiberParams,
    SplitStep, TxConfig,
};
use crate::qam::{map_qam64, BITS_PER_SYMBOL};
use crate::{Error, Result};

const V_SEED_SALT: u64 = 0xa5a5_a5a5_a5a5_a5a5;

/// Ground-truth symbols and the field at the receiver input.
#[derive(Debug, Clone)]
pub struct LinkOutput {
    pub tx_h: Vec<Complex64>,
    pub tx_v: Vec<Complex64>,
    pub rx: DualPolWaveform,
}

impl LinkOutput {
    pub fn n_symbols(&self) -> usize {
        self.tx_h.len()
    }
}

/// PRBS, 64-QAM mapping and RRC shaping for both polarizations, scaled so that
/// each polarization carries half of the launch power.
///
/// The waveform is zero-padded to the next power of two before shaping so the
/// pulse skirts wrap inside the padded frame.
pub fn launch(tx: &TxConfig, n_symbols: usize) -> Result<(Vec<Complex64>, Vec<Complex64>, DualPolWaveform)> {
    tx.validate()?;
    if n_symbols == 0 {
        return Err(Error::input("n_symbols must be > 0"));
    }
    let n_bits = n_symbols * BITS_PER_SYMBOL;
    let sym_h = map_qam64(&generate_prbs(tx.prbs_order, n_bits, tx.seed)?)?;
    let sym_v = map_qam64(&generate_prbs(tx.prbs_order, n_bits, tx.seed ^ V_SEED_SALT)?)?;
    let len = (n_symbols * tx.sps).next_power_of_two();
    let per_pol = tx.launch_power_w() / 2.0;
    let active = (n_symbols * tx.sps) as f64;
    let shape = |s: &[Complex64]| -> Result<Vec<Complex64>> {
        let mut x = shape_rrc_padded(s, tx.sps, tx.rolloff, tx.filter_span_symbols, len)?;
        let power = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / active;
        let scale = (per_pol / power).sqrt();
        x.iter_mut().for_each(|v| *v *= scale);
        Ok(x)
    };
    let h = shape(&sym_h)?;
    let v = shape(&sym_v)?;
    let waveform = DualPolWaveform::new(h, v, tx.sample_rate_hz(), tx.launch_power_dbm)?;
    Ok((sym_h, sym_v, waveform))
}

/// Transmits `n_symbols` per polarization over `fiber.n_spans` amplified spans.
///
/// Each span is split-step propagation followed by an EDFA whose gain must equal
/// the span loss. The noise seed of span `i` is derived from `amp.seed` and `i`.
/// `n_spans = 0` returns the launched waveform.
pub fn simulate_link(
    tx: &TxConfig,
    fiber: &FiberParams,
    amp: &AmplifierParams,
    n_symbols: usize,
) -> Result<LinkOutput> {
    fiber.validate()?;
    amp.validate()?;
    if (amp.gain_db - fiber.span_loss_db()).abs() > 1e-9 {
        return Err(Error::config(format!(
            "amplifier gain {} dB does not compensate span loss {} dB",
            amp.gain_db,
            fiber.span_loss_db()
        )));
    }
    let (tx_h, tx_v, mut w) = launch(tx, n_symbols)?;
    if fiber.n_spans > 0 {
        let mut solver = SplitStep::new(w.len(), w.sample_rate_hz, fiber)?;
        for span in 0..fiber.n_spans {
            solver.propagate_span(&mut w)?;
            let stage = AmplifierParams {
                seed: span_seed(amp.seed, span),
                ..amp.clone()
            };
            w = amplify_edfa(&w, &stage)?;
        }
    }
    Ok(LinkOutput { tx_h, tx_v, rx: w })
}

fn span_seed(seed: u64, span: usize) -> u64 {
    seed.wrapping_add((span as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_tx() -> TxConfig {
        TxConfig {
            filter_span_symbols: 16,
            ..TxConfig::default()
        }
    }

    #[test]
    fn launch_power_split_between_polarizations() {
        let tx = TxConfig {
            launch_power_dbm: 3.0,
            ..small_tx()
        };
        let (_, _, w) = launch(&tx, 256).unwrap();
        let ph: f64 = w.h.iter().map(|s| s.norm_sqr()).sum::<f64>() / (256.0 * 8.0);
        let pv: f64 = w.v.iter().map(|s| s.norm_sqr()).sum::<f64>() / (256.0 * 8.0);
        let target = tx.launch_power_w() / 2.0;
        assert!((ph / target - 1.0).abs() < 1e-12);
        assert!((pv / target - 1.0).abs() < 1e-12);
    }

    #[test]
    fn polarizations_carry_independent_data() {
        let (h, v, _) = launch(&small_tx(), 128).unwrap();
        assert_ne!(h, v);
    }

    #[test]
    fn zero_spans_returns_launched_waveform() {
        let tx = small_tx();
        let fiber = FiberParams {
            n_spans: 0,
            ..FiberParams::ssmf()
        };
        let amp = AmplifierParams::for_span(&fiber, 4.5, 1);
        let out = simulate_link(&tx, &fiber, &amp, 64).unwrap();
        let (_, _, launched) = launch(&tx, 64).unwrap();
        assert_eq!(out.rx, launched);
    }

    #[test]
    fn gain_must_match_span_loss() {
        let fiber = FiberParams::ssmf();
        let amp = AmplifierParams::noiseless(12.0);
        assert!(matches!(
            simulate_link(&small_tx(), &fiber, &amp, 64),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn deterministic_for_fixed_seeds() {
        let fiber = FiberParams {
            n_spans: 2,
            span_km: 10.0,
            ..FiberParams::ssmf()
        };
        let amp = AmplifierParams::for_span(&fiber, 4.5, 3);
        let a = simulate_link(&small_tx(), &fiber, &amp, 128).unwrap();
        let b = simulate_link(&small_tx(), &fiber, &amp, 128).unwrap();
        assert_eq!(a.rx, b.rx);
        assert_eq!(a.tx_h, b.tx_h);
    }
}
