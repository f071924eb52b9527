//! `.mlpz` model files (little-endian).
//!
//! Header, 16 bytes:
//!
//! | offset | size | field                                            |
//! |--------|------|--------------------------------------------------|
//! | 0      | 4    | magic `MLPZ`                                     |
//! | 4      | 2    | version (u16, currently 1)                       |
//! | 6      | 1    | variant: 0 dense FP32, 1 dense INT8, 2 sparse INT8 |
//! | 7      | 1    | activation code                                  |
//! | 8      | 1    | flags: bit 0 = FP32 masks present                |
//! | 9      | 4    | bit widths b_i, b_a, b_w, b_o (u8 each)          |
//! | 13     | 1    | reserved (0)                                     |
//! | 14     | 2    | number of layer sizes (u16)                      |
//!
//! followed by the layer sizes as u32.
//!
//! Dense FP32 body: each weight matrix row-major `(fan_in, fan_out)` as f32,
//! then, if flagged, one packed bitmap per layer (LSB first, 1 = kept).
//!
//! INT8 bodies start with per-layer weight scales (f64), then per-boundary
//! activation quantizers (scale f64, zero point i32, qmin i32, qmax i32),
//! calibration ranges (min f64, max f64) and the calibration sample count
//! (u32). Dense INT8 then stores every matrix row-major as i8. Sparse INT8
//! stores per layer a one-byte encoding tag followed by either
//!
//! * CSR (tag 0): nnz u32, `fan_in + 1` row offsets u32, nnz column indices
//!   u16, nnz values i8; or
//! * bitmap (tag 1): a packed occupancy bitmap (LSB first) followed by the
//!   nonzero values i8 in row-major order,
//!
//! whichever is smaller for that layer.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::compress::{ActivationRanges, QuantParams, QuantizedModel};
use crate::neuralnet::{Activation, MlpModel};
use crate::{Error, Result};

use super::BitWidths;

pub const MLPZ_MAGIC: &[u8; 4] = b"MLPZ";
pub const MLPZ_VERSION: u16 = 1;
pub const MLPZ_HEADER_LEN: usize = 16;

const VARIANT_DENSE_FP32: u8 = 0;
const VARIANT_DENSE_INT8: u8 = 1;
const VARIANT_SPARSE_INT8: u8 = 2;
const FLAG_MASKS: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantLayout {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerEncoding {
    Csr,
    Bitmap,
}

impl LayerEncoding {
    /// Smaller of the two encodings for a `rows x cols` matrix with `nnz`
    /// nonzeros.
    pub fn choose(rows: usize, cols: usize, nnz: usize) -> Self {
        let csr = 4 + 4 * (rows + 1) + 3 * nnz;
        let bitmap = (rows * cols).div_ceil(8) + nnz;
        if csr < bitmap {
            LayerEncoding::Csr
        } else {
            LayerEncoding::Bitmap
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelFile {
    Dense(MlpModel<f32>),
    Quantized(QuantizedModel),
}

fn header(variant: u8, activation: Activation, flags: u8, bits: BitWidths, dims: &[usize]) -> Result<Vec<u8>> {
    let n_dims = u16::try_from(dims.len()).map_err(|_| Error::input("too many layers"))?;
    let mut buf = Vec::with_capacity(MLPZ_HEADER_LEN + 4 * dims.len());
    buf.extend_from_slice(MLPZ_MAGIC);
    buf.extend_from_slice(&MLPZ_VERSION.to_le_bytes());
    buf.push(variant);
    buf.push(activation.code());
    buf.push(flags);
    for b in [bits.input, bits.activation, bits.weight, bits.output] {
        buf.push(u8::try_from(b).map_err(|_| Error::input("bit width above 255"))?);
    }
    buf.push(0);
    buf.extend_from_slice(&n_dims.to_le_bytes());
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::input("layer too wide"))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    Ok(buf)
}

fn push_bitmap(buf: &mut Vec<u8>, bits: impl Iterator<Item = bool>) {
    let mut byte = 0u8;
    let mut n = 0;
    for b in bits {
        if b {
            byte |= 1 << (n % 8);
        }
        n += 1;
        if n % 8 == 0 {
            buf.push(byte);
            byte = 0;
        }
    }
    if n % 8 != 0 {
        buf.push(byte);
    }
}

pub fn serialize_dense(model: &MlpModel<f32>) -> Result<Vec<u8>> {
    let flags = if model.masks.is_some() { FLAG_MASKS } else { 0 };
    let mut buf = header(VARIANT_DENSE_FP32, model.activation, flags, BitWidths::FP32, &model.dims)?;
    buf.reserve(4 * model.n_weights());
    for w in &model.weights {
        for &x in w.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    if let Some(masks) = &model.masks {
        for m in masks {
            push_bitmap(&mut buf, m.iter().copied());
        }
    }
    Ok(buf)
}

pub fn serialize_quantized(model: &QuantizedModel, layout: QuantLayout) -> Result<Vec<u8>> {
    let bits = BitWidths {
        input: model.input_bits as u32,
        ..BitWidths::INT8
    };
    let variant = match layout {
        QuantLayout::Dense => VARIANT_DENSE_INT8,
        QuantLayout::Sparse => VARIANT_SPARSE_INT8,
    };
    let mut buf = header(variant, model.activation, 0, bits, &model.dims)?;
    for qp in &model.weight_qparams {
        buf.extend_from_slice(&qp.scale.to_le_bytes());
    }
    for qp in &model.act_qparams {
        buf.extend_from_slice(&qp.scale.to_le_bytes());
        buf.extend_from_slice(&qp.zero_point.to_le_bytes());
        buf.extend_from_slice(&qp.qmin.to_le_bytes());
        buf.extend_from_slice(&qp.qmax.to_le_bytes());
    }
    for &(lo, hi) in &model.act_ranges.ranges {
        buf.extend_from_slice(&lo.to_le_bytes());
        buf.extend_from_slice(&hi.to_le_bytes());
    }
    let n_samples = u32::try_from(model.act_ranges.n_samples)
        .map_err(|_| Error::input("calibration sample count too large"))?;
    buf.extend_from_slice(&n_samples.to_le_bytes());
    for w in &model.int_weights {
        match layout {
            QuantLayout::Dense => buf.extend(w.iter().map(|&q| q as u8)),
            QuantLayout::Sparse => push_sparse(&mut buf, w)?,
        }
    }
    Ok(buf)
}

fn push_sparse(buf: &mut Vec<u8>, w: &Array2<i8>) -> Result<()> {
    let (rows, cols) = w.dim();
    let nnz = w.iter().filter(|&&q| q != 0).count();
    match LayerEncoding::choose(rows, cols, nnz) {
        LayerEncoding::Csr => {
            if cols > u16::MAX as usize + 1 {
                return Err(Error::input(format!("{cols} columns exceed CSR index width")));
            }
            buf.push(0);
            buf.extend_from_slice(&(nnz as u32).to_le_bytes());
            let mut offset = 0u32;
            buf.extend_from_slice(&offset.to_le_bytes());
            for row in w.rows() {
                offset += row.iter().filter(|&&q| q != 0).count() as u32;
                buf.extend_from_slice(&offset.to_le_bytes());
            }
            for row in w.rows() {
                for (j, &q) in row.iter().enumerate() {
                    if q != 0 {
                        buf.extend_from_slice(&(j as u16).to_le_bytes());
                    }
                }
            }
            buf.extend(w.iter().filter(|&&q| q != 0).map(|&q| q as u8));
        }
        LayerEncoding::Bitmap => {
            buf.push(1);
            push_bitmap(buf, w.iter().map(|&q| q != 0));
            buf.extend(w.iter().filter(|&&q| q != 0).map(|&q| q as u8));
        }
    }
    Ok(())
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::format("truncated model file"))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bitmap(&mut self, n: usize) -> Result<Vec<bool>> {
        let bytes = self.take(n.div_ceil(8))?;
        Ok((0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
    }
}

pub fn deserialize_model(data: &[u8]) -> Result<ModelFile> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4)? != MLPZ_MAGIC {
        return Err(Error::format("not an .mlpz model file"));
    }
    let version = r.u16()?;
    if version != MLPZ_VERSION {
        return Err(Error::format(format!("unsupported .mlpz version {version}")));
    }
    let variant = r.u8()?;
    let activation = Activation::from_code(r.u8()?).map_err(|e| Error::format(e.to_string()))?;
    let flags = r.u8()?;
    let bits = r.take(4)?.to_vec();
    r.u8()?;
    let n_dims = r.u16()? as usize;
    let dims = (0..n_dims)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::format(format!("invalid layer sizes {dims:?}")));
    }
    let shapes: Vec<(usize, usize)> = dims.windows(2).map(|p| (p[0], p[1])).collect();
    let l = shapes.len();

    let model = match variant {
        VARIANT_DENSE_FP32 => {
            let mut weights = Vec::with_capacity(l);
            for &(a, b) in &shapes {
                let raw = r.take(4 * a * b)?;
                let vals = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                weights.push(Array2::from_shape_vec((a, b), vals).expect("shape"));
            }
            let mut model = MlpModel::from_weights(weights, activation)?;
            if flags & FLAG_MASKS != 0 {
                let masks = shapes
                    .iter()
                    .map(|&(a, b)| {
                        r.bitmap(a * b)
                            .map(|v| Array2::from_shape_vec((a, b), v).expect("shape"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                model.masks = Some(masks);
            }
            ModelFile::Dense(model)
        }
        VARIANT_DENSE_INT8 | VARIANT_SPARSE_INT8 => {
            let weight_qparams = (0..l)
                .map(|_| r.f64().map(QuantParams::symmetric_i8_from_scale))
                .collect::<Result<Vec<_>>>()?;
            let mut act_qparams = Vec::with_capacity(l + 1);
            for _ in 0..=l {
                act_qparams.push(QuantParams {
                    scale: r.f64()?,
                    zero_point: r.i32()?,
                    qmin: r.i32()?,
                    qmax: r.i32()?,
                });
            }
            let mut ranges = Vec::with_capacity(l + 1);
            for _ in 0..=l {
                ranges.push((r.f64()?, r.f64()?));
            }
            let n_samples = r.u32()? as usize;
            let mut int_weights = Vec::with_capacity(l);
            for &(a, b) in &shapes {
                let w = if variant == VARIANT_DENSE_INT8 {
                    r.take(a * b)?.iter().map(|&x| x as i8).collect()
                } else {
                    read_sparse(&mut r, a, b)?
                };
                int_weights.push(Array2::from_shape_vec((a, b), w).expect("shape"));
            }
            let n: usize = int_weights.iter().map(|w| w.len()).sum();
            let zeros: usize = int_weights.iter().map(|w| w.iter().filter(|&&q| q == 0).count()).sum();
            ModelFile::Quantized(QuantizedModel {
                dims,
                activation,
                int_weights,
                weight_qparams,
                act_qparams,
                act_ranges: ActivationRanges { ranges, n_samples },
                input_bits: bits[0],
                sparsity: zeros as f64 / n as f64,
            })
        }
        v => return Err(Error::format(format!("unknown model variant {v}"))),
    };
    if r.pos != data.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after model",
            data.len() - r.pos
        )));
    }
    Ok(model)
}

fn read_sparse(r: &mut Reader<'_>, rows: usize, cols: usize) -> Result<Vec<i8>> {
    let mut out = vec![0i8; rows * cols];
    match r.u8()? {
        0 => {
            let nnz = r.u32()? as usize;
            let offsets = (0..=rows).map(|_| r.u32().map(|o| o as usize)).collect::<Result<Vec<_>>>()?;
            if offsets[0] != 0 || offsets[rows] != nnz || offsets.windows(2).any(|p| p[0] > p[1]) {
                return Err(Error::format("corrupt CSR row offsets"));
            }
            let cols_idx = (0..nnz).map(|_| r.u16().map(|c| c as usize)).collect::<Result<Vec<_>>>()?;
            let vals = r.take(nnz)?;
            for i in 0..rows {
                for p in offsets[i]..offsets[i + 1] {
                    let j = cols_idx[p];
                    if j >= cols {
                        return Err(Error::format("CSR column index out of range"));
                    }
                    out[i * cols + j] = vals[p] as i8;
                }
            }
        }
        1 => {
            let occupied = r.bitmap(rows * cols)?;
            let nnz = occupied.iter().filter(|&&b| b).count();
            let vals = r.take(nnz)?;
            let mut it = vals.iter();
            for (slot, &occ) in out.iter_mut().zip(&occupied) {
                if occ {
                    *slot = *it.next().unwrap() as i8;
                }
            }
        }
        t => return Err(Error::format(format!("unknown layer encoding {t}"))),
    }
    Ok(out)
}

pub fn write_model(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    deserialize_model(&fs::read(path)?)
}

/// Byte size of a model file, after checking that it parses.
pub fn model_size(path: impl AsRef<Path>) -> Result<u64> {
    let bytes = fs::read(path)?;
    deserialize_model(&bytes)?;
    Ok(bytes.len() as u64)
}
