use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::neuralnet::{Activation, Equalizer, Float, MlpModel};
use crate::{Error, Result};

pub const DEFAULT_CALIBRATION_SAMPLES: usize = 100;

/// Affine quantizer `q = clamp(round(x / scale + zero_point), qmin, qmax)`.
/// Rounding is half away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale: f64,
    pub zero_point: i32,
    pub qmin: i32,
    pub qmax: i32,
}

impl QuantParams {
    /// Symmetric 8-bit quantizer covering `[-max_abs, max_abs]`. A zero range
    /// falls back to unit scale.
    pub fn symmetric_i8(max_abs: f64) -> Self {
        let scale = if max_abs > 0.0 && max_abs.is_finite() {
            max_abs / 127.0
        } else {
            1.0
        };
        Self {
            scale,
            zero_point: 0,
            qmin: -127,
            qmax: 127,
        }
    }

    pub fn symmetric_i8_from_scale(scale: f64) -> Self {
        Self {
            scale,
            ..Self::symmetric_i8(0.0)
        }
    }
}

pub fn quantize_value(x: f64, qp: &QuantParams) -> i32 {
    let q = (x / qp.scale + qp.zero_point as f64).round();
    q.clamp(qp.qmin as f64, qp.qmax as f64) as i32
}

pub fn dequantize_value(q: i32, qp: &QuantParams) -> f64 {
    qp.scale * (q - qp.zero_point) as f64
}

/// Observed `(min, max)` at every layer boundary: the network input, each
/// hidden activation and the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationRanges {
    pub ranges: Vec<(f64, f64)>,
    pub n_samples: usize,
}

impl ActivationRanges {
    pub fn max_abs(&self, boundary: usize) -> f64 {
        let (lo, hi) = self.ranges[boundary];
        lo.abs().max(hi.abs())
    }
}

/// Runs the first `n_samples` rows of `inputs` through the FP model and records
/// per-boundary extrema.
pub fn calibrate_activations<F: Float>(
    model: &MlpModel<F>,
    inputs: ArrayView2<'_, F>,
    n_samples: usize,
) -> Result<ActivationRanges> {
    let n = n_samples.min(inputs.nrows());
    if n == 0 {
        return Err(Error::input("calibration set is empty"));
    }
    let trace = model.forward_trace(inputs.slice(ndarray::s![..n, ..]))?;
    let mut ranges = Vec::with_capacity(trace.len());
    for a in &trace {
        let (lo, hi) = a.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            let v = v.as_f64();
            (lo.min(v), hi.max(v))
        });
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Numeric("non-finite activation during calibration".into()));
        }
        ranges.push((lo, hi));
    }
    Ok(ActivationRanges { ranges, n_samples: n })
}

/// INT8 weights with per-tensor scales, INT8 activations between layers. The
/// network input stays full precision (`input_bits = 32`).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub dims: Vec<usize>,
    pub activation: Activation,
    /// `(fan_in, fan_out)` per layer, like the FP weights.
    pub int_weights: Vec<Array2<i8>>,
    pub weight_qparams: Vec<QuantParams>,
    /// One quantizer per boundary; index 0 (the input) is recorded but unused.
    pub act_qparams: Vec<QuantParams>,
    pub act_ranges: ActivationRanges,
    pub input_bits: u8,
    pub sparsity: f64,
}

impl QuantizedModel {
    pub fn n_layers(&self) -> usize {
        self.int_weights.len()
    }

    pub fn n_weights(&self) -> usize {
        self.int_weights.iter().map(|w| w.len()).sum()
    }

    pub fn nonzero_weights(&self) -> usize {
        self.int_weights
            .iter()
            .map(|w| w.iter().filter(|&&q| q != 0).count())
            .sum()
    }

    /// Floating-point model holding the dequantized weights.
    pub fn dequantized<F: Float>(&self) -> MlpModel<F> {
        let weights = self
            .int_weights
            .iter()
            .zip(&self.weight_qparams)
            .map(|(w, qp)| w.mapv(|q| F::from_f64_lossy(dequantize_value(q as i32, qp))))
            .collect();
        MlpModel::from_weights(weights, self.activation).expect("validated dims")
    }

    fn check(&self) -> Result<()> {
        let l = self.n_layers();
        if l == 0 || self.dims.len() != l + 1 {
            return Err(Error::format("quantized model has inconsistent layers"));
        }
        if self.weight_qparams.len() != l || self.act_qparams.len() != l + 1 {
            return Err(Error::format("quantized model has inconsistent scales"));
        }
        for (k, w) in self.int_weights.iter().enumerate() {
            if w.dim() != (self.dims[k], self.dims[k + 1]) {
                return Err(Error::format(format!("layer {k} has shape {:?}", w.dim())));
            }
        }
        Ok(())
    }
}

/// Post-training quantization: `s_w = max|W| / 127` per layer and
/// `s_a = max(|min|, |max|) / 127` per calibrated boundary.
pub fn quantize_ptq<F: Float>(
    model: &MlpModel<F>,
    ranges: &ActivationRanges,
) -> Result<QuantizedModel> {
    let l = model.n_layers();
    if ranges.ranges.len() != l + 1 {
        return Err(Error::input(format!(
            "{} calibrated boundaries for a {l}-layer model",
            ranges.ranges.len()
        )));
    }
    for k in 1..l {
        let worst = model.dims[k] as i64 * 127 * 127;
        if worst > i32::MAX as i64 {
            return Err(Error::input(format!(
                "layer {k} fan-in {} overflows a 32-bit accumulator",
                model.dims[k]
            )));
        }
    }
    let mut int_weights = Vec::with_capacity(l);
    let mut weight_qparams = Vec::with_capacity(l);
    for w in &model.weights {
        let max_abs = w.iter().fold(0.0f64, |m, &x| m.max(x.as_f64().abs()));
        let qp = QuantParams::symmetric_i8(max_abs);
        int_weights.push(w.mapv(|x| quantize_value(x.as_f64(), &qp) as i8));
        weight_qparams.push(qp);
    }
    let act_qparams = (0..=l)
        .map(|b| QuantParams::symmetric_i8(ranges.max_abs(b)))
        .collect();
    let zeros: usize = int_weights
        .iter()
        .map(|w| w.iter().filter(|&&q| q == 0).count())
        .sum();
    let n: usize = int_weights.iter().map(|w| w.len()).sum();
    Ok(QuantizedModel {
        dims: model.dims.clone(),
        activation: model.activation,
        int_weights,
        weight_qparams,
        act_qparams,
        act_ranges: ranges.clone(),
        input_bits: 32,
        sparsity: zeros as f64 / n as f64,
    })
}

/// Largest fan-in whose INT8 dot products stay below 2^24, so an f32 GEMM over
/// integer-valued operands returns the exact integer accumulator.
const EXACT_F32_FAN_IN: usize = (1 << 24) / (127 * 127);

fn quantize_f32(x: f32, scale: f32, qp: &QuantParams) -> f32 {
    (x / scale + qp.zero_point as f32)
        .round()
        .clamp(qp.qmin as f32, qp.qmax as f32)
}

fn int_matmul(a: &Array2<f32>, w: &Array2<i8>) -> Array2<f32> {
    if w.nrows() <= EXACT_F32_FAN_IN {
        return a.dot(&w.mapv(|q| q as f32));
    }
    let wt = w.t().as_standard_layout().mapv(|q| q as i32);
    let mut out = Array2::<f32>::zeros((a.nrows(), w.ncols()));
    for (r, mut o) in a.rows().into_iter().zip(out.rows_mut()) {
        let qa: Vec<i32> = r.iter().map(|&v| v as i32).collect();
        for (j, col) in wt.rows().into_iter().enumerate() {
            let acc: i32 = qa.iter().zip(col.iter()).map(|(&x, &y)| x * y).sum();
            o[j] = acc as f32;
        }
    }
    out
}

/// Integer inference. The first layer multiplies the full-precision input by
/// the INT8 weights; every later layer takes INT8 activations, accumulates
/// exactly and rescales by `s_w * s_a`. Hidden outputs go through the
/// activation and are requantized; the output is quantized and dequantized
/// with the calibrated output scale.
pub fn infer_int8<F: Float>(model: &QuantizedModel, batch: ArrayView2<'_, F>) -> Result<Array2<F>> {
    model.check()?;
    if batch.ncols() != model.dims[0] {
        return Err(Error::input(format!(
            "batch has {} features, model expects {}",
            batch.ncols(),
            model.dims[0]
        )));
    }
    let l = model.n_layers();
    let x0 = batch.mapv(|v| v.as_f64() as f32);
    let mut real = int_matmul(&x0, &model.int_weights[0]);
    let s0 = model.weight_qparams[0].scale as f32;
    real.mapv_inplace(|v| v * s0);

    for k in 1..l {
        let qp = &model.act_qparams[k];
        let s_a = qp.scale as f32;
        let act = model.activation;
        real.mapv_inplace(|z| quantize_f32(act.apply(z), s_a, qp));
        real = int_matmul(&real, &model.int_weights[k]);
        let rescale = (model.weight_qparams[k].scale * qp.scale) as f32;
        real.mapv_inplace(|v| v * rescale);
    }

    let qp_out = &model.act_qparams[l];
    let s_out = qp_out.scale as f32;
    Ok(real.mapv(|z| {
        let q = quantize_f32(z, s_out, qp_out);
        F::from_f64_lossy(((q - qp_out.zero_point as f32) * s_out) as f64)
    }))
}

impl<F: Float> Equalizer<F> for QuantizedModel {
    fn equalize(&self, inputs: ArrayView2<'_, F>) -> Result<Array2<F>> {
        infer_int8(self, inputs)
    }
}

#[cfg(test)]
mod tests {
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_mt::Mt64;

    use super::*;

    #[test]
    fn quantize_basics() {
        let qp = QuantParams::symmetric_i8(1.0);
        assert_eq!(quantize_value(1.0, &qp), 127);
        assert_eq!(quantize_value(-1.0, &qp), -127);
        assert_eq!(quantize_value(5.0, &qp), 127);
        assert_eq!(quantize_value(-5.0, &qp), -127);
        assert_eq!(quantize_value(0.0, &qp), 0);
        // Half away from zero.
        let unit = QuantParams::symmetric_i8(127.0);
        assert_eq!(quantize_value(2.5, &unit), 3);
        assert_eq!(quantize_value(-2.5, &unit), -3);
        assert_eq!(QuantParams::symmetric_i8(0.0).scale, 1.0);
    }

    proptest! {
        #[test]
        fn roundtrip_error_bounded(max_abs in 1e-3f64..1e3, frac in -1.0f64..1.0) {
            let qp = QuantParams::symmetric_i8(max_abs);
            let x = frac * max_abs;
            let q = quantize_value(x, &qp);
            prop_assert!((-127..=127).contains(&q));
            let err = (dequantize_value(q, &qp) - x).abs();
            prop_assert!(err <= qp.scale / 2.0 * (1.0 + 1e-9));
        }

        #[test]
        fn clipping_outside_range(max_abs in 1e-3f64..1e3, over in 1.0f64..10.0) {
            let qp = QuantParams::symmetric_i8(max_abs);
            prop_assert_eq!(quantize_value(max_abs * over, &qp), 127);
            prop_assert_eq!(quantize_value(-max_abs * over, &qp), -127);
        }
    }

    fn random_inputs(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = Mt64::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn ptq_scales_and_sparsity() {
        let m = MlpModel::<f64>::from_weights(
            vec![array![[0.5, -0.25], [0.0, 0.1]], array![[0.0, 0.0], [0.0, 0.0]]],
            Activation::Tanh,
        )
        .unwrap();
        let x = random_inputs(10, 2, 1);
        let r = calibrate_activations(&m, x.view(), 100).unwrap();
        assert_eq!(r.n_samples, 10);
        assert_eq!(r.ranges.len(), 3);
        let q = quantize_ptq(&m, &r).unwrap();
        assert!((q.weight_qparams[0].scale - 0.5 / 127.0).abs() < 1e-15);
        assert_eq!(q.weight_qparams[1].scale, 1.0);
        assert_eq!(q.int_weights[0], array![[127i8, -64], [0, 25]]);
        assert!((q.sparsity - 5.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn calibration_rejects_empty() {
        let m = MlpModel::<f64>::glorot(&[3, 4, 2], Activation::Tanh, 1).unwrap();
        let x = Array2::<f64>::zeros((0, 3));
        assert!(calibrate_activations(&m, x.view(), 100).is_err());
    }

    #[test]
    fn int8_tracks_float_model() {
        let m = MlpModel::<f64>::glorot(&[16, 32, 6, 32, 2], Activation::Tanh, 4).unwrap();
        let x = random_inputs(500, 16, 2);
        let r = calibrate_activations(&m, x.view(), 500).unwrap();
        let q = quantize_ptq(&m, &r).unwrap();
        let y_fp = m.forward(x.view()).unwrap();
        let y_q = infer_int8(&q, x.view()).unwrap();
        let scale = y_fp.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let worst = (&y_fp - &y_q).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(worst < 0.05 * scale, "worst {worst} vs scale {scale}");
    }

    /// Integer reference with explicit loops.
    #[test]
    fn int8_matches_reference_loops() {
        let m = MlpModel::<f64>::glorot(&[5, 7, 3, 2], Activation::Tanh, 6).unwrap();
        let x = random_inputs(20, 5, 3);
        let r = calibrate_activations(&m, x.view(), 20).unwrap();
        let q = quantize_ptq(&m, &r).unwrap();
        let got = infer_int8(&q, x.view()).unwrap();
        for b in 0..20 {
            let mut real: Vec<f32> = (0..7)
                .map(|j| {
                    (0..5)
                        .map(|i| x[[b, i]] as f32 * q.int_weights[0][[i, j]] as f32)
                        .sum::<f32>()
                        * q.weight_qparams[0].scale as f32
                })
                .collect();
            for k in 1..3 {
                let qa: Vec<i32> = real
                    .iter()
                    .map(|&z| quantize_value(z.tanh() as f64, &q.act_qparams[k]))
                    .collect();
                real = (0..q.dims[k + 1])
                    .map(|j| {
                        let acc: i32 = (0..q.dims[k])
                            .map(|i| qa[i] * q.int_weights[k][[i, j]] as i32)
                            .sum();
                        acc as f32 * (q.weight_qparams[k].scale * q.act_qparams[k].scale) as f32
                    })
                    .collect();
            }
            for j in 0..2 {
                let qp = &q.act_qparams[3];
                let want = dequantize_value(quantize_value(real[j] as f64, qp), qp);
                // f32 tanh and scaling may move a value across a rounding
                // boundary: allow one output step.
                assert!((got[[b, j]] - want).abs() <= qp.scale * 1.0001, "row {b} col {j}");
            }
        }
    }

    #[test]
    fn integer_accumulation_is_exact() {
        for fan_in in [EXACT_F32_FAN_IN, EXACT_F32_FAN_IN + 1] {
            let mut rng = Mt64::seed_from_u64(fan_in as u64);
            let a = Array2::from_shape_fn((3, fan_in), |_| rng.random_range(-127i32..=127) as f32);
            let w = Array2::from_shape_fn((fan_in, 4), |_| rng.random_range(-127i32..=127) as i8);
            let got = int_matmul(&a, &w);
            for r in 0..3 {
                for c in 0..4 {
                    let want: i64 = (0..fan_in).map(|i| a[[r, i]] as i64 * w[[i, c]] as i64).sum();
                    assert_eq!(got[[r, c]] as i64, want);
                }
            }
        }
        // At the f32 limit the worst-case sum is still exact.
        let full = Array2::<f32>::from_elem((1, EXACT_F32_FAN_IN), 127.0);
        let wmax = Array2::<i8>::from_elem((EXACT_F32_FAN_IN, 1), 127);
        assert_eq!(int_matmul(&full, &wmax)[[0, 0]] as i64, 127 * 127 * EXACT_F32_FAN_IN as i64);
    }

    #[test]
    fn pruned_zeros_stay_zero() {
        let m = MlpModel::<f64>::glorot(&[10, 12, 2], Activation::Tanh, 2).unwrap();
        let p = crate::compress::prune_magnitude(&m, 0.6).unwrap();
        let x = random_inputs(50, 10, 5);
        let r = calibrate_activations(&p, x.view(), 100).unwrap();
        let q = quantize_ptq(&p, &r).unwrap();
        for (w, qw) in p.weights.iter().zip(&q.int_weights) {
            for (&a, &b) in w.iter().zip(qw.iter()) {
                if a == 0.0 {
                    assert_eq!(b, 0);
                }
            }
        }
        assert!(q.sparsity >= p.sparsity());
    }

    #[test]
    fn dequantized_model_is_close() {
        let m = MlpModel::<f64>::glorot(&[6, 5, 2], Activation::Tanh, 9).unwrap();
        let x = random_inputs(4, 6, 1);
        let q = quantize_ptq(&m, &calibrate_activations(&m, x.view(), 4).unwrap()).unwrap();
        let d: MlpModel<f64> = q.dequantized();
        for (a, b) in m.weights.iter().zip(&d.weights) {
            for (&x, &y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= q.weight_qparams[0].scale.max(q.weight_qparams[1].scale));
            }
        }
    }
}
