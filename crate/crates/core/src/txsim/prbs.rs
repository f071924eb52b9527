use crate::{Error, Result};

/// Feedback taps (polynomial exponents) of the maximal-length polynomial for
/// each supported register length.
pub(crate) fn taps(order: u32) -> Result<&'static [u32]> {
    match order {
        7 => Ok(&[7, 6]),
        15 => Ok(&[15, 14]),
        23 => Ok(&[23, 18]),
        31 => Ok(&[31, 28]),
        32 => Ok(&[32, 22, 2, 1]),
        _ => Err(Error::config(format!(
            "unsupported PRBS order {order} (expected 7, 15, 23, 31 or 32)"
        ))),
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Fibonacci LFSR bit source.
///
/// The register holds `order` bits. Each clock emits the oldest bit and shifts
/// in the XOR of the tapped positions. The initial state is the all-ones word
/// XORed with a hash of the seed; the forbidden all-zero state is replaced by 1.
#[derive(Debug, Clone)]
pub struct Prbs {
    state: u64,
    mask: u64,
    tap_mask: u64,
    order: u32,
}

impl Prbs {
    pub fn new(order: u32, seed: u64) -> Result<Self> {
        let exps = taps(order)?;
        let mask = if order == 64 { u64::MAX } else { (1u64 << order) - 1 };
        let tap_mask = exps.iter().fold(0u64, |m, &e| m | (1u64 << (e - 1)));
        let mut state = (mask ^ splitmix64(seed)) & mask;
        if state == 0 {
            state = 1;
        }
        Ok(Self {
            state,
            mask,
            tap_mask,
            order,
        })
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_bit(&mut self) -> u8 {
        let out = ((self.state >> (self.order - 1)) & 1) as u8;
        let feedback = (self.state & self.tap_mask).count_ones() as u64 & 1;
        self.state = ((self.state << 1) | feedback) & self.mask;
        out
    }
}

impl Iterator for Prbs {
    type Item = u8;

    fn next(&mut self) -> Option<u8> {
        Some(self.next_bit())
    }
}

/// First `n_bits` bits of the PRBS of the given order, seeded by `seed`.
pub fn generate_prbs(order: u32, n_bits: usize, seed: u64) -> Result<Vec<u8>> {
    if n_bits == 0 {
        return Err(Error::input("n_bits must be > 0"));
    }
    Ok(Prbs::new(order, seed)?.take(n_bits).collect())
}
