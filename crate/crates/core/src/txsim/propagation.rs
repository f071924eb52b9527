use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{angular_frequencies, DualPolWaveform, FiberParams};
use crate::{Error, Result};

/// Symmetric split-step Fourier solver for the Manakov equation over one span.
///
/// Each step of length `dz` applies half of the linear operator
/// `exp((i beta2 w^2 / 2 - alpha / 2) dz / 2)` in the frequency domain, the
/// nonlinear rotation `exp(i gamma_eff (|h|^2 + |v|^2) dz)` to both
/// polarizations, then the second linear half. Adjacent linear halves of
/// consecutive steps are fused into one full-step multiplication.
pub struct SplitStep {
    len: usize,
    steps: usize,
    nl_coeff: f64,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl SplitStep {
    pub fn new(len: usize, sample_rate_hz: f64, fiber: &FiberParams) -> Result<Self> {
        fiber.validate()?;
        if !len.is_power_of_two() {
            return Err(Error::input(format!(
                "waveform length {len} is not a power of two; pad before propagation"
            )));
        }
        let dz = fiber.step_km * 1e3;
        let beta2 = fiber.beta2();
        let alpha = fiber.alpha_per_m();
        let norm = 1.0 / len as f64;
        let omega = angular_frequencies(len, sample_rate_hz);
        let operator = |length: f64| -> Vec<Complex64> {
            omega
                .iter()
                .map(|w| {
                    Complex64::new(-alpha / 2.0 * length, beta2 / 2.0 * w * w * length).exp() * norm
                })
                .collect()
        };
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(len);
        let ifft = planner.plan_fft_inverse(len);
        let scratch_len = fft
            .get_inplace_scratch_len()
            .max(ifft.get_inplace_scratch_len());
        Ok(Self {
            len,
            steps: fiber.steps_per_span(),
            nl_coeff: fiber.effective_gamma_per_w_m() * dz,
            half: operator(dz / 2.0),
            full: operator(dz),
            fft,
            ifft,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        })
    }

    fn linear(&mut self, x: &mut [Complex64], full: bool) {
        self.fft.process_with_scratch(x, &mut self.scratch);
        let op = if full { &self.full } else { &self.half };
        x.iter_mut().zip(op).for_each(|(s, o)| *s *= o);
        self.ifft.process_with_scratch(x, &mut self.scratch);
    }

    fn nonlinear(&self, h: &mut [Complex64], v: &mut [Complex64]) {
        for (a, b) in h.iter_mut().zip(v.iter_mut()) {
            let phi = self.nl_coeff * (a.norm_sqr() + b.norm_sqr());
            let rot = Complex64::from_polar(1.0, phi);
            *a *= rot;
            *b *= rot;
        }
    }

    /// Propagates `w` in place through one span.
    pub fn propagate_span(&mut self, w: &mut DualPolWaveform) -> Result<()> {
        if w.len() != self.len {
            return Err(Error::input(format!(
                "waveform length {} does not match solver length {}",
                w.len(),
                self.len
            )));
        }
        if !w.is_finite() {
            return Err(Error::Numeric("non-finite sample entering fiber span".into()));
        }
        let (mut h, mut v) = (std::mem::take(&mut w.h), std::mem::take(&mut w.v));
        self.linear(&mut h, false);
        self.linear(&mut v, false);
        for step in 0..self.steps {
            self.nonlinear(&mut h, &mut v);
            let full = step + 1 < self.steps;
            self.linear(&mut h, full);
            self.linear(&mut v, full);
        }
        w.h = h;
        w.v = v;
        if !w.is_finite() {
            return Err(Error::Numeric("non-finite sample leaving fiber span".into()));
        }
        Ok(())
    }
}

/// Propagates a waveform through one fiber span of `p`.
pub fn ssfm_span(w: &DualPolWaveform, p: &FiberParams) -> Result<DualPolWaveform> {
    let mut solver = SplitStep::new(w.len(), w.sample_rate_hz, p)?;
    let mut out = w.clone();
    solver.propagate_span(&mut out)?;
    Ok(out)
}
