use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_mt::Mt64;

use super::{AmplifierParams, DualPolWaveform, PLANCK};
use crate::Result;

/// One-sided ASE power spectral density per polarization (W/Hz):
/// `S = (G - 1) h nu n_sp` with `n_sp = NF G / (2 (G - 1))`, i.e. `NF G h nu / 2`.
pub fn ase_psd_per_pol(a: &AmplifierParams) -> f64 {
    if !a.noise_enabled() {
        return 0.0;
    }
    let nf = 10f64.powf(a.nf_db / 10.0);
    let g = a.gain_linear();
    nf * g * PLANCK * a.carrier_frequency_hz() / 2.0
}

/// Scales the field by `sqrt(G)` and adds circular Gaussian ASE noise of
/// variance `S * sample_rate` to each polarization. The noise realization is
/// a pure function of `a.seed` (MT19937-64).
pub fn amplify_edfa(w: &DualPolWaveform, a: &AmplifierParams) -> Result<DualPolWaveform> {
    a.validate()?;
    let gain = a.gain_linear().sqrt();
    let mut out = w.scaled(Complex64::new(gain, 0.0));
    let variance = ase_psd_per_pol(a) * w.sample_rate_hz;
    if variance > 0.0 {
        let sigma = (variance / 2.0).sqrt();
        let mut rng = Mt64::seed_from_u64(a.seed);
        for s in out.h.iter_mut().chain(out.v.iter_mut()) {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *s += Complex64::new(re * sigma, im * sigma);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    fn zeros(len: usize, fs: f64) -> DualPolWaveform {
        let z = vec![Complex64::new(0.0, 0.0); len];
        DualPolWaveform::new(z.clone(), z, fs, 0.0).unwrap()
    }

    #[test]
    fn noiseless_is_pure_gain() {
        let x = vec![Complex64::new(1.0, -2.0), Complex64::new(0.5, 0.25)];
        let w = DualPolWaveform::new(x.clone(), x.clone(), 1e9, 0.0).unwrap();
        let out = amplify_edfa(&w, &AmplifierParams::noiseless(10.0)).unwrap();
        let g = 10f64.sqrt();
        for (o, i) in out.h.iter().zip(&x) {
            assert!((o - i * g).norm() < 1e-15);
        }
    }

    #[test]
    fn noise_variance_matches_closed_form() {
        let fs = 240e9;
        let a = AmplifierParams {
            gain_db: 10.0,
            nf_db: 4.5,
            seed: 42,
            carrier_wavelength_nm: 1550.0,
        };
        let out = amplify_edfa(&zeros(1_000_000, fs), &a).unwrap();
        let expected = ase_psd_per_pol(&a) * fs;
        // Independent closed form from the (G-1) h nu n_sp expression.
        let g = 10.0;
        let nf = 10f64.powf(0.45);
        let nu = 299_792_458.0 / 1550e-9;
        let n_sp = nf * g / (2.0 * (g - 1.0));
        let closed = (g - 1.0) * PLANCK * nu * n_sp * fs;
        assert!((expected / closed - 1.0).abs() < 1e-12);
        for pol in [&out.h, &out.v] {
            let measured = pol.iter().map(|s| s.norm_sqr()).sum::<f64>() / pol.len() as f64;
            assert!((measured / expected - 1.0).abs() < 0.02, "{measured} vs {expected}");
        }
    }

    #[test]
    fn same_seed_same_noise() {
        let a = AmplifierParams {
            seed: 7,
            ..AmplifierParams::default()
        };
        let w = zeros(1024, 240e9);
        assert_eq!(amplify_edfa(&w, &a).unwrap(), amplify_edfa(&w, &a).unwrap());
        let b = AmplifierParams { seed: 8, ..a };
        assert_ne!(amplify_edfa(&w, &a).unwrap(), amplify_edfa(&w, &b).unwrap());
    }

    #[test]
    fn negative_gain_rejected() {
        let a = AmplifierParams {
            gain_db: -3.0,
            ..AmplifierParams::default()
        };
        assert!(matches!(amplify_edfa(&zeros(4, 1.0), &a), Err(Error::Config(_))));
    }
}
