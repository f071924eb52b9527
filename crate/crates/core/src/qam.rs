//! Gray-labelled square 64-QAM constellation.
//!
//! Each symbol carries six bits `b0..b5`. Bits `b0 b1 b2` select the in-phase
//! level and `b3 b4 b5` the quadrature level (first bit most significant). On
//! each axis the eight amplitudes `-7, -5, ..., +7` are labelled, in increasing
//! order, with the reflected Gray code of their index:
//!
//! | amplitude | -7  | -5  | -3  | -1  | +1  | +3  | +5  | +7  |
//! |-----------|-----|-----|-----|-----|-----|-----|-----|-----|
//! | label     | 000 | 001 | 011 | 010 | 110 | 111 | 101 | 100 |
//!
//! Points are scaled by `1/sqrt(42)` so that the constellation has unit mean
//! power. `000000` therefore maps to the corner `(-7 - 7j)/sqrt(42)`.

use num_complex::Complex64;

use crate::{Error, Result};

pub const BITS_PER_SYMBOL: usize = 6;
const LEVELS: usize = 8;

/// Mean of `i^2 + q^2` over the unnormalized square 64-QAM grid.
const MEAN_POWER: f64 = 42.0;

fn scale() -> f64 {
    1.0 / MEAN_POWER.sqrt()
}

fn gray(index: usize) -> usize {
    index ^ (index >> 1)
}

fn gray_inverse(mut label: usize) -> usize {
    let mut index = 0;
    while label != 0 {
        index ^= label;
        label >>= 1;
    }
    index
}

fn level_amplitude(index: usize) -> f64 {
    2.0 * index as f64 - (LEVELS as f64 - 1.0)
}

fn bits_to_label(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | (b & 1) as usize)
}

/// Constellation point for a 6-bit word given most significant bit first.
pub fn point(word: u8) -> Complex64 {
    let i_label = ((word >> 3) & 0b111) as usize;
    let q_label = (word & 0b111) as usize;
    let s = scale();
    Complex64::new(
        level_amplitude(gray_inverse(i_label)) * s,
        level_amplitude(gray_inverse(q_label)) * s,
    )
}

/// Maps a bit sequence onto 64-QAM symbols, six bits per symbol.
pub fn map_qam64(bits: &[u8]) -> Result<Vec<Complex64>> {
    if bits.len() % BITS_PER_SYMBOL != 0 {
        return Err(Error::input(format!(
            "bit count {} is not a multiple of {BITS_PER_SYMBOL}",
            bits.len()
        )));
    }
    Ok(bits
        .chunks_exact(BITS_PER_SYMBOL)
        .map(|chunk| point(bits_to_label(chunk) as u8))
        .collect())
}

fn decide_axis(value: f64) -> usize {
    let idx = ((value / scale() + (LEVELS as f64 - 1.0)) / 2.0).round();
    idx.clamp(0.0, (LEVELS - 1) as f64) as usize
}

/// Nearest-point hard decision, returned as the 6-bit Gray label.
pub fn decide(symbol: Complex64) -> u8 {
    let i = gray(decide_axis(symbol.re));
    let q = gray(decide_axis(symbol.im));
    ((i << 3) | q) as u8
}

/// Nearest constellation point.
pub fn slice(symbol: Complex64) -> Complex64 {
    point(decide(symbol))
}

/// Hard-decision demapper producing six bits per symbol.
pub fn demap_qam64(symbols: &[Complex64]) -> Vec<u8> {
    let mut bits = Vec::with_capacity(symbols.len() * BITS_PER_SYMBOL);
    for &s in symbols {
        let word = decide(s);
        for k in (0..BITS_PER_SYMBOL).rev() {
            bits.push((word >> k) & 1);
        }
    }
    bits
}

/// Number of differing bits between the hard decisions of two symbols.
pub fn bit_distance(a: Complex64, b: Complex64) -> u32 {
    (decide(a) ^ decide(b)).count_ones()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_point_for_all_zero_word() {
        let s = map_qam64(&[0, 0, 0, 0, 0, 0]).unwrap();
        let expected = Complex64::new(-7.0, -7.0) / 42f64.sqrt();
        assert!((s[0] - expected).norm() < 1e-15);
    }

    #[test]
    fn gray_table_matches_documentation() {
        let labels: Vec<usize> = (0..LEVELS).map(gray).collect();
        assert_eq!(labels, vec![0b000, 0b001, 0b011, 0b010, 0b110, 0b111, 0b101, 0b100]);
        for i in 0..LEVELS {
            assert_eq!(gray_inverse(gray(i)), i);
        }
    }

    #[test]
    fn full_constellation_has_unit_power() {
        let pts: Vec<Complex64> = (0..64u8).map(point).collect();
        let mut distinct = pts.clone();
        distinct.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        distinct.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
        assert_eq!(distinct.len(), 64);
        let mean: f64 = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / 64.0;
        assert!((mean - 1.0).abs() < 1e-14);
    }

    #[test]
    fn neighbours_differ_in_one_bit() {
        let d = 2.0 * scale();
        for w in 0..64u8 {
            let p = point(w);
            for step in [Complex64::new(d, 0.0), Complex64::new(0.0, d)] {
                let n = p + step;
                if n.re.abs() < 7.5 * scale() && n.im.abs() < 7.5 * scale() {
                    assert_eq!((decide(n) ^ w).count_ones(), 1);
                }
            }
        }
    }

    #[test]
    fn map_then_demap_round_trips() {
        let bits: Vec<u8> = (0..64u8)
            .flat_map(|w| (0..6).rev().map(move |k| (w >> k) & 1))
            .collect();
        let symbols = map_qam64(&bits).unwrap();
        assert_eq!(demap_qam64(&symbols), bits);
    }

    #[test]
    fn rejects_partial_symbol() {
        assert!(matches!(map_qam64(&[1, 0, 1]), Err(Error::Input(_))));
    }
}
