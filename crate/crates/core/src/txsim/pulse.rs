use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;

use crate::{Error, Result};

/// Root-raised-cosine taps spanning `span_symbols` symbols at `sps` samples per
/// symbol (`span_symbols * sps + 1` taps, centered), scaled to unit energy.
///
/// With unit energy the transmit/matched filter cascade has a peak of exactly 1
/// at the symbol instant.
pub fn rrc_taps(sps: usize, rolloff: f64, span_symbols: usize) -> Result<Vec<f64>> {
    if sps < 2 {
        return Err(Error::config("samples per symbol must be >= 2"));
    }
    if span_symbols == 0 || span_symbols % 2 != 0 {
        return Err(Error::config("filter span must be even and > 0"));
    }
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(Error::config("roll-off must lie in [0, 1]"));
    }
    let n_taps = span_symbols * sps + 1;
    let center = (n_taps / 2) as f64;
    let beta = rolloff;
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|n| rrc_value((n as f64 - center) / sps as f64, beta))
        .collect();
    let energy: f64 = taps.iter().map(|t| t * t).sum();
    let norm = energy.sqrt();
    taps.iter_mut().for_each(|t| *t /= norm);
    Ok(taps)
}

fn rrc_value(t: f64, beta: f64) -> f64 {
    if t.abs() < 1e-12 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    if beta > 0.0 && (t.abs() - 1.0 / (4.0 * beta)).abs() < 1e-9 {
        let arg = PI / (4.0 * beta);
        return beta / SQRT_2 * ((1.0 + 2.0 / PI) * arg.sin() + (1.0 - 2.0 / PI) * arg.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

/// Upsamples `symbols` by `sps` and filters them with the RRC pulse.
///
/// The output has `symbols.len() * sps` samples and is a circular convolution:
/// the pulse of symbol `k` starts at sample `k * sps`, so each symbol peak
/// appears `span_symbols * sps / 2` samples later.
pub fn shape_rrc(
    symbols: &[Complex64],
    sps: usize,
    rolloff: f64,
    span_symbols: usize,
) -> Result<Vec<Complex64>> {
    shape_rrc_padded(symbols, sps, rolloff, span_symbols, symbols.len() * sps)
}

/// Like [`shape_rrc`] but circular over `len >= symbols.len() * sps` samples;
/// the tail beyond the last symbol is left for the pulse skirts.
pub fn shape_rrc_padded(
    symbols: &[Complex64],
    sps: usize,
    rolloff: f64,
    span_symbols: usize,
    len: usize,
) -> Result<Vec<Complex64>> {
    let taps = rrc_taps(sps, rolloff, span_symbols)?;
    if symbols.is_empty() {
        return Err(Error::input("no symbols to shape"));
    }
    if len < symbols.len() * sps {
        return Err(Error::input(format!(
            "output length {len} shorter than {} upsampled samples",
            symbols.len() * sps
        )));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for (k, &s) in symbols.iter().enumerate() {
        if s == Complex64::new(0.0, 0.0) {
            continue;
        }
        let start = k * sps;
        for (n, &t) in taps.iter().enumerate() {
            out[(start + n) % len] += s * t;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taps_are_symmetric_unit_energy() {
        let taps = rrc_taps(8, 0.1, 64).unwrap();
        assert_eq!(taps.len(), 513);
        let energy: f64 = taps.iter().map(|t| t * t).sum();
        assert!((energy - 1.0).abs() < 1e-12);
        for i in 0..taps.len() {
            assert!((taps[i] - taps[taps.len() - 1 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn singular_points_are_continuous() {
        let beta = 0.25;
        let t0 = 1.0 / (4.0 * beta);
        let at = rrc_value(t0, beta);
        let near = rrc_value(t0 + 1e-6, beta);
        assert!((at - near).abs() < 1e-5);
        let near0 = rrc_value(1e-7, beta);
        assert!((rrc_value(0.0, beta) - near0).abs() < 1e-6);
    }

    #[test]
    fn impulse_reproduces_pulse() {
        let mut symbols = vec![Complex64::new(0.0, 0.0); 128];
        symbols[0] = Complex64::new(1.0, 0.0);
        let out = shape_rrc(&symbols, 8, 0.1, 64).unwrap();
        let taps = rrc_taps(8, 0.1, 64).unwrap();
        for (n, t) in taps.iter().enumerate() {
            assert_eq!(out[n], Complex64::new(*t, 0.0));
        }
        assert!(out[taps.len()..].iter().all(|s| s.norm() == 0.0));
    }

    /// Direct linear convolution of the taps with themselves, sampled every
    /// `sps` samples away from the peak.
    #[test]
    fn matched_cascade_is_nyquist() {
        let sps = 8;
        let taps = rrc_taps(sps, 0.1, 64).unwrap();
        let n = taps.len();
        let mut cascade = vec![0.0; 2 * n - 1];
        for i in 0..n {
            for j in 0..n {
                cascade[i + j] += taps[i] * taps[j];
            }
        }
        let peak = n - 1;
        assert!((cascade[peak] - 1.0).abs() < 1e-12);
        let mut k = sps;
        while k <= peak {
            assert!(cascade[peak - k].abs() < 1e-3, "ISI at {k}: {}", cascade[peak - k]);
            assert!(cascade[peak + k].abs() < 1e-3);
            k += sps;
        }
    }

    #[test]
    fn constant_symbol_spectrum_is_band_limited() {
        use rustfft::FftPlanner;
        let sps = 8;
        let rolloff = 0.1;
        let n_sym = 256;
        let symbols = vec![Complex64::new(1.0, 1.0); n_sym];
        let mut out = shape_rrc(&symbols, sps, rolloff, 64).unwrap();
        FftPlanner::new().plan_fft_forward(out.len()).process(&mut out);
        let total: f64 = out.iter().map(|s| s.norm_sqr()).sum();
        let dc = out[0].norm_sqr();
        assert!(dc / total > 0.999_999);
        // Normalized frequency bound (1 + rolloff) / 2 symbols^-1.
        let len = out.len() as f64;
        let outside: f64 = out
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = if (*k as f64) < len / 2.0 { *k as f64 } else { *k as f64 - len };
                (f / len * sps as f64).abs() > (1.0 + rolloff) / 2.0
            })
            .map(|(_, s)| s.norm_sqr())
            .sum();
        // Only truncation leakage of the finite pulse remains outside the band.
        assert!(outside / total < 1e-6, "{}", outside / total);
    }

    #[test]
    fn rejects_odd_span() {
        assert!(rrc_taps(8, 0.1, 63).is_err());
        assert!(shape_rrc(&[Complex64::new(1.0, 0.0)], 1, 0.1, 64).is_err());
    }
}
