//! Transmitter and fiber-link simulation.
//!
//! Two independent PRBS streams are Gray-mapped onto 64-QAM, shaped by a
//! root-raised-cosine filter and launched on the H and V polarizations. The
//! field is propagated span by span with a symmetric split-step Fourier solver
//! of the Manakov equation; an EDFA after each span restores the span loss and
//! adds ASE noise.
//!
//! All waveforms are treated as one period of a periodic signal: filtering,
//! dispersion and compensation are circular over the waveform length.

mod amplifier;
mod link;
mod prbs;
mod propagation;
mod pulse;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use amplifier::{amplify_edfa, ase_psd_per_pol};
pub use link::{launch, simulate_link, LinkOutput};
pub use prbs::{generate_prbs, Prbs};
pub use propagation::{ssfm_span, SplitStep};
pub use pulse::{rrc_taps, shape_rrc, shape_rrc_padded};

pub use crate::qam::map_qam64;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Planck constant (J s).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Single-mode fiber and link layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FiberParams {
    pub alpha_db_per_km: f64,
    pub dispersion_ps_nm_km: f64,
    pub gamma_w_km: f64,
    pub span_km: f64,
    pub n_spans: usize,
    pub step_km: f64,
    pub carrier_wavelength_nm: f64,
    /// Multiply `gamma` by 8/9 in the nonlinear step. Disable when `gamma`
    /// already denotes the polarization-averaged coefficient.
    pub manakov_factor: bool,
}

impl FiberParams {
    /// Standard single-mode fiber, 20 x 50 km, 1 km steps.
    pub fn ssmf() -> Self {
        Self {
            alpha_db_per_km: 0.2,
            dispersion_ps_nm_km: 17.0,
            gamma_w_km: 1.2,
            span_km: 50.0,
            n_spans: 20,
            step_km: 1.0,
            carrier_wavelength_nm: 1550.0,
            manakov_factor: true,
        }
    }

    /// TrueWave Classic fiber on the same layout.
    pub fn twc() -> Self {
        Self {
            alpha_db_per_km: 0.23,
            dispersion_ps_nm_km: 2.8,
            gamma_w_km: 2.5,
            ..Self::ssmf()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_db_per_km >= 0.0) {
            return Err(Error::config("fiber attenuation must be >= 0"));
        }
        if !(self.span_km > 0.0) || !(self.step_km > 0.0) {
            return Err(Error::config("span and step lengths must be > 0"));
        }
        let ratio = self.span_km / self.step_km;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Error::config(format!(
                "step {} km does not divide span {} km",
                self.step_km, self.span_km
            )));
        }
        if !(self.carrier_wavelength_nm > 0.0) {
            return Err(Error::config("carrier wavelength must be > 0"));
        }
        if !self.gamma_w_km.is_finite() || !self.dispersion_ps_nm_km.is_finite() {
            return Err(Error::config("fiber coefficients must be finite"));
        }
        Ok(())
    }

    pub fn steps_per_span(&self) -> usize {
        (self.span_km / self.step_km).round() as usize
    }

    pub fn total_length_km(&self) -> f64 {
        self.span_km * self.n_spans as f64
    }

    pub fn span_loss_db(&self) -> f64 {
        self.alpha_db_per_km * self.span_km
    }

    /// Power attenuation coefficient (1/m).
    pub fn alpha_per_m(&self) -> f64 {
        self.alpha_db_per_km * std::f64::consts::LN_10 / 10.0 / 1e3
    }

    /// Group-velocity dispersion beta2 = -D lambda^2 / (2 pi c), in s^2/m.
    pub fn beta2(&self) -> f64 {
        let d_si = self.dispersion_ps_nm_km * 1e-6; // ps/(nm km) -> s/m^2
        let lambda = self.carrier_wavelength_nm * 1e-9;
        -d_si * lambda * lambda / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT)
    }

    /// Nonlinear coefficient applied in the split step (1/(W m)).
    pub fn effective_gamma_per_w_m(&self) -> f64 {
        let factor = if self.manakov_factor { 8.0 / 9.0 } else { 1.0 };
        factor * self.gamma_w_km / 1e3
    }

    pub fn carrier_frequency_hz(&self) -> f64 {
        SPEED_OF_LIGHT / (self.carrier_wavelength_nm * 1e-9)
    }
}

impl Default for FiberParams {
    fn default() -> Self {
        Self::ssmf()
    }
}

/// Transmitter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TxConfig {
    pub baud_rate_gbd: f64,
    pub sps: usize,
    pub rolloff: f64,
    pub mod_order: u32,
    pub launch_power_dbm: f64,
    pub prbs_order: u32,
    pub seed: u64,
    /// RRC filter length in symbols; the filter has `span * sps + 1` taps.
    pub filter_span_symbols: usize,
}

impl Default for TxConfig {
    fn default() -> Self {
        Self {
            baud_rate_gbd: 30.0,
            sps: 8,
            rolloff: 0.1,
            mod_order: 64,
            launch_power_dbm: 1.0,
            prbs_order: 32,
            seed: 1,
            filter_span_symbols: 256,
        }
    }
}

impl TxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sps < 2 {
            return Err(Error::config("samples per symbol must be >= 2"));
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::config("roll-off must lie in [0, 1]"));
        }
        if self.mod_order != 64 {
            return Err(Error::config(format!(
                "unsupported modulation order {} (only 64-QAM)",
                self.mod_order
            )));
        }
        if !(self.baud_rate_gbd > 0.0) {
            return Err(Error::config("baud rate must be > 0"));
        }
        if self.filter_span_symbols == 0 || self.filter_span_symbols % 2 != 0 {
            return Err(Error::config("RRC filter span must be even and > 0"));
        }
        if !self.launch_power_dbm.is_finite() {
            return Err(Error::config("launch power must be finite"));
        }
        prbs::taps(self.prbs_order)?;
        Ok(())
    }

    pub fn baud_rate_hz(&self) -> f64 {
        self.baud_rate_gbd * 1e9
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.baud_rate_hz() * self.sps as f64
    }

    /// Group delay of one RRC filter, in samples.
    pub fn filter_delay_samples(&self) -> usize {
        self.filter_span_symbols * self.sps / 2
    }

    /// Group delay of the transmit and matched filters together, in samples.
    pub fn total_filter_delay_samples(&self) -> usize {
        2 * self.filter_delay_samples()
    }

    pub fn launch_power_w(&self) -> f64 {
        dbm_to_w(self.launch_power_dbm)
    }
}

/// EDFA settings. `nf_db = -inf` disables ASE noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmplifierParams {
    pub gain_db: f64,
    pub nf_db: f64,
    pub seed: u64,
    pub carrier_wavelength_nm: f64,
}

impl Default for AmplifierParams {
    fn default() -> Self {
        Self::for_span(&FiberParams::ssmf(), 4.5, 2)
    }
}

impl AmplifierParams {
    /// Amplifier whose gain exactly compensates one span of `fiber`.
    pub fn for_span(fiber: &FiberParams, nf_db: f64, seed: u64) -> Self {
        Self {
            gain_db: fiber.span_loss_db(),
            nf_db,
            seed,
            carrier_wavelength_nm: fiber.carrier_wavelength_nm,
        }
    }

    pub fn noiseless(gain_db: f64) -> Self {
        Self {
            gain_db,
            nf_db: f64::NEG_INFINITY,
            seed: 0,
            carrier_wavelength_nm: 1550.0,
        }
    }

    pub fn noise_enabled(&self) -> bool {
        self.nf_db != f64::NEG_INFINITY
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain_db >= 0.0) || !self.gain_db.is_finite() {
            return Err(Error::config(format!("amplifier gain {} dB must be >= 0", self.gain_db)));
        }
        if self.noise_enabled() && !(self.nf_db > 0.0 && self.nf_db.is_finite()) {
            return Err(Error::config(format!("noise figure {} dB must be > 0", self.nf_db)));
        }
        if !(self.carrier_wavelength_nm > 0.0) {
            return Err(Error::config("carrier wavelength must be > 0"));
        }
        Ok(())
    }

    pub fn gain_linear(&self) -> f64 {
        10f64.powf(self.gain_db / 10.0)
    }

    pub fn carrier_frequency_hz(&self) -> f64 {
        SPEED_OF_LIGHT / (self.carrier_wavelength_nm * 1e-9)
    }
}

/// Dual-polarization complex baseband field, in sqrt(W).
#[derive(Debug, Clone, PartialEq)]
pub struct DualPolWaveform {
    pub h: Vec<Complex64>,
    pub v: Vec<Complex64>,
    pub sample_rate_hz: f64,
    pub launch_power_dbm: f64,
}

impl DualPolWaveform {
    pub fn new(
        h: Vec<Complex64>,
        v: Vec<Complex64>,
        sample_rate_hz: f64,
        launch_power_dbm: f64,
    ) -> Result<Self> {
        if h.is_empty() || h.len() != v.len() {
            return Err(Error::input(format!(
                "polarization lengths must be equal and non-zero (h={}, v={})",
                h.len(),
                v.len()
            )));
        }
        if !(sample_rate_hz > 0.0) {
            return Err(Error::input("sample rate must be > 0"));
        }
        Ok(Self {
            h,
            v,
            sample_rate_hz,
            launch_power_dbm,
        })
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Sum of |h|^2 + |v|^2 over all samples.
    pub fn energy(&self) -> f64 {
        self.h.iter().chain(&self.v).map(|s| s.norm_sqr()).sum()
    }

    /// Mean total power over both polarizations (W).
    pub fn mean_power_w(&self) -> f64 {
        self.energy() / self.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.h
            .iter()
            .chain(&self.v)
            .all(|s| s.re.is_finite() && s.im.is_finite())
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let scale = |x: &[Complex64]| x.iter().map(|&s| s * factor).collect();
        Self {
            h: scale(&self.h),
            v: scale(&self.v),
            ..self.clone()
        }
    }

    pub fn swapped(&self) -> Self {
        Self {
            h: self.v.clone(),
            v: self.h.clone(),
            ..self.clone()
        }
    }
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

/// Angular frequency of each FFT bin for a grid of `len` samples at `sample_rate_hz`.
pub fn angular_frequencies(len: usize, sample_rate_hz: f64) -> Vec<f64> {
    let df = sample_rate_hz / len as f64;
    (0..len)
        .map(|k| {
            let signed = if k < len.div_ceil(2) {
                k as f64
            } else {
                k as f64 - len as f64
            };
            2.0 * std::f64::consts::PI * signed * df
        })
        .collect()
}
