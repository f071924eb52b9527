//! Bias-free multilayer perceptron equalizer.
//!
//! The network maps a window of `M = 2N + 1` received dual-polarization symbols
//! (4 real features each) to the real and imaginary parts of the central
//! transmitted symbol of one polarization:
//!
//! `y = W_L^T act(... act(W_2^T act(W_1^T x)))`
//!
//! Hidden layers use `tanh`; the output layer is linear. Weight matrices are
//! stored as `(fan_in, fan_out)` so a batch `X` of shape `(B, fan_in)` maps to
//! `X W`. Optional binary masks mark pruned weights.

mod dataset;
mod eval;
mod train;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{Array2, ArrayView2, Zip};
use num_traits::FromPrimitive;
use rand::SeedableRng;
use rand_distr::{Distribution, Uniform};
use rand_mt::Mt64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use dataset::{build_windows, WindowedDataset, FEATURES_PER_SYMBOL};
pub use eval::{evaluate_dataset, evaluate_q, outputs_to_symbols, Equalizer};
pub use train::{train, Adam, EpochRecord, TrainConfig, TrainHistory, Trainer};

/// Layer sizes of the equalizer for `N = 10` neighbours.
pub const DEFAULT_DIMS: [usize; 5] = [84, 500, 10, 500, 2];

/// Scalar type the network runs in.
pub trait Float:
    num_traits::Float
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + FromPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap()
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap()
    }

    fn tanh_act(self) -> Self {
        self.tanh()
    }
}

impl Float for f32 {
    /// Branch-free rational approximation (odd 13/6 polynomial ratio on the
    /// input clamped to +-7.9053), within 5e-7 of `tanh`; vectorizes where
    /// libm's `tanhf` does not.
    #[inline]
    fn tanh_act(self) -> Self {
        const CLAMP: f32 = 7.905_311;
        const A: [f32; 7] = [
            4.893_524_6e-3,
            6.372_619_3e-4,
            1.485_722_4e-5,
            5.122_297e-8,
            -8.604_671_5e-11,
            2.000_188e-13,
            -2.760_768_5e-16,
        ];
        const B: [f32; 4] = [4.893_525e-3, 2.268_434_6e-3, 1.185_347e-4, 1.198_258_4e-6];
        let x = self.max(-CLAMP).min(CLAMP);
        let x2 = x * x;
        let mut p = A[6];
        for &a in A[..6].iter().rev() {
            p = p * x2 + a;
        }
        let q = ((B[3] * x2 + B[2]) * x2 + B[1]) * x2 + B[0];
        x * p / q
    }
}

impl Float for f64 {}

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    /// Linear hidden layers; used for least-squares sanity checks.
    Identity,
}

impl Activation {
    pub fn apply<F: Float>(self, x: F) -> F {
        match self {
            Activation::Tanh => x.tanh_act(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative_from_output<F: Float>(self, a: F) -> F {
        match self {
            Activation::Tanh => F::one() - a * a,
            Activation::Identity => F::one(),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Identity => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Identity),
            _ => Err(Error::format(format!("unknown activation code {code}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<F = f32> {
    pub dims: Vec<usize>,
    pub weights: Vec<Array2<F>>,
    pub activation: Activation,
    /// `true` marks a kept weight. Masked weights are held at exactly zero.
    pub masks: Option<Vec<Array2<bool>>>,
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::input(format!("invalid layer sizes {dims:?}")));
    }
    Ok(())
}

impl<F: Float> MlpModel<F> {
    pub fn zeros(dims: &[usize], activation: Activation) -> Result<Self> {
        validate_dims(dims)?;
        let weights = dims
            .windows(2)
            .map(|w| Array2::zeros((w[0], w[1])))
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            weights,
            activation,
            masks: None,
        })
    }

    /// Glorot-uniform initialization, `U(-r, r)` with `r = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(dims, activation)?;
        let mut rng = Mt64::seed_from_u64(seed);
        for w in &mut model.weights {
            let (fan_in, fan_out) = w.dim();
            let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-r, r).expect("finite range");
            w.iter_mut()
                .for_each(|x| *x = F::from_f64_lossy(dist.sample(&mut rng)));
        }
        Ok(model)
    }

    pub fn from_weights(weights: Vec<Array2<F>>, activation: Activation) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::input("model needs at least one layer"));
        }
        let mut dims = vec![weights[0].nrows()];
        for (k, w) in weights.iter().enumerate() {
            if w.nrows() != *dims.last().unwrap() {
                return Err(Error::input(format!(
                    "layer {k} has fan-in {} but previous layer emits {}",
                    w.nrows(),
                    dims.last().unwrap()
                )));
            }
            dims.push(w.ncols());
        }
        validate_dims(&dims)?;
        Ok(Self {
            dims,
            weights,
            activation,
            masks: None,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.dims[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn n_weights(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    /// Fraction of weights equal to zero.
    pub fn sparsity(&self) -> f64 {
        let zeros: usize = self
            .weights
            .iter()
            .map(|w| w.iter().filter(|x| x.is_zero()).count())
            .sum();
        zeros as f64 / self.n_weights() as f64
    }

    pub fn layer_sparsity(&self, layer: usize) -> f64 {
        let w = &self.weights[layer];
        w.iter().filter(|x| x.is_zero()).count() as f64 / w.len() as f64
    }

    /// Writes zeros at every masked position.
    pub fn apply_masks(&mut self) {
        if let Some(masks) = &self.masks {
            for (w, m) in self.weights.iter_mut().zip(masks) {
                Zip::from(w).and(m).for_each(|x, &keep| {
                    if !keep {
                        *x = F::zero();
                    }
                });
            }
        }
    }

    fn effective_weights(&self, layer: usize) -> std::borrow::Cow<'_, Array2<F>> {
        match &self.masks {
            None => std::borrow::Cow::Borrowed(&self.weights[layer]),
            Some(masks) => {
                let mut w = self.weights[layer].clone();
                Zip::from(&mut w).and(&masks[layer]).for_each(|x, &keep| {
                    if !keep {
                        *x = F::zero();
                    }
                });
                std::borrow::Cow::Owned(w)
            }
        }
    }

    fn check_batch(&self, batch: &ArrayView2<'_, F>) -> Result<()> {
        if batch.ncols() != self.n_inputs() {
            return Err(Error::input(format!(
                "batch width {} does not match model input {}",
                batch.ncols(),
                self.n_inputs()
            )));
        }
        Ok(())
    }

    /// Network output for a `(B, n_inputs)` batch.
    pub fn forward(&self, batch: ArrayView2<'_, F>) -> Result<Array2<F>> {
        self.check_batch(&batch)?;
        let last = self.n_layers() - 1;
        let mut a = batch.dot(self.effective_weights(0).as_ref());
        if last > 0 {
            a.mapv_inplace(|v| self.activation.apply(v));
        }
        for k in 1..=last {
            a = a.dot(self.effective_weights(k).as_ref());
            if k < last {
                a.mapv_inplace(|v| self.activation.apply(v));
            }
        }
        Ok(a)
    }

    /// Layer inputs `a_0 = x, a_1, ..., a_L = y` for one batch.
    pub fn forward_trace(&self, batch: ArrayView2<'_, F>) -> Result<Vec<Array2<F>>> {
        self.check_batch(&batch)?;
        let last = self.n_layers() - 1;
        let mut acts = Vec::with_capacity(self.n_layers() + 1);
        acts.push(batch.to_owned());
        for k in 0..=last {
            let mut z = acts[k].dot(self.effective_weights(k).as_ref());
            if k < last {
                z.mapv_inplace(|v| self.activation.apply(v));
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Mean squared error over all outputs of the batch and its gradient with
    /// respect to every weight. Gradients at masked positions are zero.
    pub fn loss_and_gradients(
        &self,
        batch: ArrayView2<'_, F>,
        targets: ArrayView2<'_, F>,
    ) -> Result<(F, Vec<Array2<F>>)> {
        if targets.dim() != (batch.nrows(), self.n_outputs()) {
            return Err(Error::input(format!(
                "target shape {:?} does not match ({}, {})",
                targets.dim(),
                batch.nrows(),
                self.n_outputs()
            )));
        }
        let acts = self.forward_trace(batch)?;
        let out = acts.last().unwrap();
        let count = F::from_usize(out.len()).unwrap();
        let mut delta = out - &targets;
        let loss = delta.iter().map(|&d| d * d).sum::<F>() / count;
        let scale = F::from_f64_lossy(2.0) / count;
        delta.mapv_inplace(|d| d * scale);

        let mut grads = vec![Array2::zeros((0, 0)); self.n_layers()];
        for k in (0..self.n_layers()).rev() {
            grads[k] = acts[k].t().dot(&delta);
            if k > 0 {
                let w = self.effective_weights(k);
                let mut back = delta.dot(&w.t());
                let act = self.activation;
                Zip::from(&mut back)
                    .and(&acts[k])
                    .for_each(|b, &a| *b = *b * act.derivative_from_output(a));
                delta = back;
            }
        }
        if let Some(masks) = &self.masks {
            for (g, m) in grads.iter_mut().zip(masks) {
                Zip::from(g).and(m).for_each(|x, &keep| {
                    if !keep {
                        *x = F::zero();
                    }
                });
            }
        }
        Ok((loss, grads))
    }

    /// Converts the weights to another float type.
    pub fn cast<G: Float>(&self) -> MlpModel<G> {
        MlpModel {
            dims: self.dims.clone(),
            weights: self
                .weights
                .iter()
                .map(|w| w.mapv(|x| G::from_f64_lossy(x.as_f64())))
                .collect(),
            activation: self.activation,
            masks: self.masks.clone(),
        }
    }
}
