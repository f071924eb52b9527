use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::qam::{self, BITS_PER_SYMBOL};
use crate::special::{erfc, erfc_inv};
use crate::{Error, Result};

/// Bit error ratio and the equivalent Gaussian Q-factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityMetrics {
    pub ber: f64,
    /// `+inf` when no errors were counted.
    pub q_db: f64,
    pub n_bits: u64,
}

impl QualityMetrics {
    pub fn from_counts(errors: u64, n_bits: u64) -> Self {
        let ber = if n_bits == 0 { 0.0 } else { errors as f64 / n_bits as f64 };
        Self {
            ber,
            q_db: q_db_or_limit(ber),
            n_bits,
        }
    }

    pub fn measure(rx: &[Complex64], tx: &[Complex64]) -> Result<Self> {
        let (errors, bits) = bit_errors(rx, tx)?;
        Ok(Self::from_counts(errors, bits))
    }

    /// Pools the bit counts of several measurements.
    pub fn combine(parts: &[QualityMetrics]) -> Self {
        let bits: u64 = parts.iter().map(|m| m.n_bits).sum();
        let errors: f64 = parts.iter().map(|m| m.ber * m.n_bits as f64).sum();
        Self::from_counts(errors.round() as u64, bits)
    }
}

fn q_db_or_limit(ber: f64) -> f64 {
    if ber <= 0.0 {
        f64::INFINITY
    } else if ber >= 0.5 {
        f64::NEG_INFINITY
    } else {
        ber_to_q(ber).expect("ber within (0, 0.5)")
    }
}

/// Counts differing bits between the Gray hard decisions of `rx` and `tx`.
pub fn bit_errors(rx: &[Complex64], tx: &[Complex64]) -> Result<(u64, u64)> {
    if rx.len() != tx.len() {
        return Err(Error::input(format!(
            "length mismatch: rx={} tx={}",
            rx.len(),
            tx.len()
        )));
    }
    let errors = rx
        .iter()
        .zip(tx)
        .map(|(&r, &t)| qam::bit_distance(r, t) as u64)
        .sum();
    Ok((errors, (rx.len() * BITS_PER_SYMBOL) as u64))
}

/// Bit error ratio of 64-QAM hard decisions.
pub fn compute_ber(rx: &[Complex64], tx: &[Complex64]) -> Result<f64> {
    let (errors, bits) = bit_errors(rx, tx)?;
    if bits == 0 {
        return Err(Error::input("no symbols to compare"));
    }
    Ok(errors as f64 / bits as f64)
}

/// `Q[dB] = 20 log10(sqrt(2) erfc^-1(2 BER))` for `0 < BER < 0.5`.
pub fn ber_to_q(ber: f64) -> Result<f64> {
    if !(ber > 0.0 && ber < 0.5) {
        return Err(Error::input(format!("BER {ber} outside (0, 0.5)")));
    }
    Ok(20.0 * (std::f64::consts::SQRT_2 * erfc_inv(2.0 * ber)).log10())
}

/// Inverse of [`ber_to_q`].
pub fn q_to_ber(q_db: f64) -> f64 {
    let q = 10f64.powf(q_db / 20.0);
    0.5 * erfc(q / std::f64::consts::SQRT_2)
}
