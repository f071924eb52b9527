//! Binary dataset container for waveforms and symbol blocks.
//!
//! Layout (little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 12   | magic: `MLPEQ-WAVE\0\0` or `MLPEQ-SYMB\0\0` |
//! | 12     | 4    | version (u32, currently 1)              |
//! | 16     | 8    | n_symbols (u64)                         |
//! | 24     | 4    | sps (u32)                               |
//! | 28     | 8    | sample_rate in Hz (f64)                 |
//! | 36     | ...  | payload of complex64 values (f32 re, f32 im) |
//!
//! Waveform payload: `n_symbols * sps` samples, each `h` then `v`.
//! Symbol payload: `n_symbols` records of `tx_h, tx_v, rx_h, rx_v`; `sps` is 1
//! and the sample rate is the symbol rate.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::dsp::SymbolBlock;
use crate::txsim::DualPolWaveform;
use crate::{Error, Result};

pub const WAVEFORM_MAGIC: &[u8; 12] = b"MLPEQ-WAVE\0\0";
pub const SYMBOL_MAGIC: &[u8; 12] = b"MLPEQ-SYMB\0\0";
pub const DATASET_VERSION: u32 = 1;
pub const DATASET_HEADER_LEN: usize = 36;

fn push_c64(buf: &mut Vec<u8>, s: Complex64) {
    buf.extend_from_slice(&(s.re as f32).to_le_bytes());
    buf.extend_from_slice(&(s.im as f32).to_le_bytes());
}

fn header(magic: &[u8; 12], n_symbols: u64, sps: u32, sample_rate: f64) -> Vec<u8> {
    let mut buf = Vec::with_capacity(DATASET_HEADER_LEN);
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&n_symbols.to_le_bytes());
    buf.extend_from_slice(&sps.to_le_bytes());
    buf.extend_from_slice(&sample_rate.to_le_bytes());
    buf
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::format("truncated dataset file"))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn c64(&mut self) -> Result<Complex64> {
        let b = self.take(8)?;
        let re = f32::from_le_bytes(b[..4].try_into().unwrap());
        let im = f32::from_le_bytes(b[4..].try_into().unwrap());
        Ok(Complex64::new(re as f64, im as f64))
    }
}

fn read_header(cur: &mut Cursor<'_>, magic: &[u8; 12]) -> Result<(u64, u32, f64)> {
    if cur.take(12)? != magic {
        return Err(Error::format("bad dataset magic"));
    }
    let version = cur.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::format(format!("unsupported dataset version {version}")));
    }
    Ok((cur.u64()?, cur.u32()?, cur.f64()?))
}

pub fn encode_waveform(w: &DualPolWaveform, sps: usize) -> Result<Vec<u8>> {
    if sps == 0 || w.len() % sps != 0 {
        return Err(Error::input(format!(
            "waveform length {} is not a multiple of sps {sps}",
            w.len()
        )));
    }
    let mut buf = header(WAVEFORM_MAGIC, (w.len() / sps) as u64, sps as u32, w.sample_rate_hz);
    buf.reserve(w.len() * 16);
    for (&h, &v) in w.h.iter().zip(&w.v) {
        push_c64(&mut buf, h);
        push_c64(&mut buf, v);
    }
    Ok(buf)
}

/// Returns the waveform and its samples per symbol. The launch power is not
/// stored and reads back as NaN.
pub fn decode_waveform(data: &[u8]) -> Result<(DualPolWaveform, usize)> {
    let mut cur = Cursor { data, pos: 0 };
    let (n_symbols, sps, rate) = read_header(&mut cur, WAVEFORM_MAGIC)?;
    let n = (n_symbols as usize)
        .checked_mul(sps as usize)
        .ok_or_else(|| Error::format("sample count overflow"))?;
    if data.len() != DATASET_HEADER_LEN + n * 16 {
        return Err(Error::format("waveform payload length mismatch"));
    }
    let mut h = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        h.push(cur.c64()?);
        v.push(cur.c64()?);
    }
    let w = DualPolWaveform::new(h, v, rate, f64::NAN).map_err(|e| Error::format(e.to_string()))?;
    Ok((w, sps as usize))
}

pub fn encode_symbols(block: &SymbolBlock, baud_rate_hz: f64) -> Vec<u8> {
    let mut buf = header(SYMBOL_MAGIC, block.len() as u64, 1, baud_rate_hz);
    buf.reserve(block.len() * 32);
    for i in 0..block.len() {
        push_c64(&mut buf, block.tx_h[i]);
        push_c64(&mut buf, block.tx_v[i]);
        push_c64(&mut buf, block.rx_h[i]);
        push_c64(&mut buf, block.rx_v[i]);
    }
    buf
}

/// Returns the symbol block (launch power `NaN`) and the stored symbol rate.
pub fn decode_symbols(data: &[u8]) -> Result<(SymbolBlock, f64)> {
    let mut cur = Cursor { data, pos: 0 };
    let (n_symbols, _, rate) = read_header(&mut cur, SYMBOL_MAGIC)?;
    let n = n_symbols as usize;
    if data.len() != DATASET_HEADER_LEN + n.saturating_mul(32) {
        return Err(Error::format("symbol payload length mismatch"));
    }
    let mut cols: [Vec<Complex64>; 4] = Default::default();
    for _ in 0..n {
        for col in cols.iter_mut() {
            col.push(cur.c64()?);
        }
    }
    let [tx_h, tx_v, rx_h, rx_v] = cols;
    let block = SymbolBlock::new(tx_h, tx_v, rx_h, rx_v, f64::NAN)
        .map_err(|e| Error::format(e.to_string()))?;
    Ok((block, rate))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}
