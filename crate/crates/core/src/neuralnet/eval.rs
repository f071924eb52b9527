use ndarray::{s, Array2, ArrayView2};
use num_complex::Complex64;

use super::{build_windows, Float, MlpModel, WindowedDataset};
use crate::dsp::{Polarization, QualityMetrics, SymbolBlock};
use crate::{Error, Result};

const EVAL_CHUNK: usize = 8192;

/// Anything that maps window features to `(Re, Im)` symbol estimates.
pub trait Equalizer<F: Float> {
    fn equalize(&self, inputs: ArrayView2<'_, F>) -> Result<Array2<F>>;
}

impl<F: Float> Equalizer<F> for MlpModel<F> {
    fn equalize(&self, inputs: ArrayView2<'_, F>) -> Result<Array2<F>> {
        self.forward(inputs)
    }
}

fn equalize_chunked<F: Float, E: Equalizer<F> + ?Sized>(
    eq: &E,
    inputs: ArrayView2<'_, F>,
) -> Result<Array2<F>> {
    let rows = inputs.nrows();
    let mut out: Option<Array2<F>> = None;
    let mut start = 0;
    while start < rows {
        let end = (start + EVAL_CHUNK).min(rows);
        let y = eq.equalize(inputs.slice(s![start..end, ..]))?;
        let buf = out.get_or_insert_with(|| Array2::zeros((rows, y.ncols())));
        buf.slice_mut(s![start..end, ..]).assign(&y);
        start = end;
    }
    out.ok_or_else(|| Error::input("empty dataset"))
}

pub fn outputs_to_symbols<F: Float>(outputs: &Array2<F>) -> Vec<Complex64> {
    outputs
        .rows()
        .into_iter()
        .map(|r| Complex64::new(r[0].as_f64(), r[1].as_f64()))
        .collect()
}

/// BER/Q of an equalizer's hard decisions against the dataset targets.
pub fn evaluate_dataset<F: Float, E: Equalizer<F> + ?Sized>(
    eq: &E,
    data: &WindowedDataset<F>,
) -> Result<QualityMetrics> {
    let y = equalize_chunked(eq, data.inputs.view())?;
    if y.ncols() != 2 {
        return Err(Error::input(format!("equalizer emits {} outputs, expected 2", y.ncols())));
    }
    QualityMetrics::measure(&outputs_to_symbols(&y), &outputs_to_symbols(&data.targets))
}

/// Equalizes every full window of `block` on one polarization and reports the
/// metrics of the recovered central symbols (indices `N .. len - N`).
pub fn evaluate_q<F: Float, E: Equalizer<F> + ?Sized>(
    eq: &E,
    block: &SymbolBlock,
    n_neighbors: usize,
    polarization: Polarization,
) -> Result<QualityMetrics> {
    let data = build_windows::<F>(block, n_neighbors, polarization)?;
    evaluate_dataset(eq, &data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qam;

    /// Returns the central received symbol of the selected polarization.
    struct PassThrough {
        n: usize,
        pol: Polarization,
    }

    impl Equalizer<f64> for PassThrough {
        fn equalize(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
            let base = 4 * self.n + if self.pol == Polarization::H { 0 } else { 2 };
            Ok(inputs.slice(s![.., base..base + 2]).to_owned())
        }
    }

    #[test]
    fn pass_through_matches_linear_metrics() {
        let len = 400;
        let tx: Vec<Complex64> = (0..len).map(|i| qam::point((i * 37 % 64) as u8)).collect();
        let noise = |i: usize| Complex64::new(((i * 7919) % 97) as f64 / 97.0 - 0.5, ((i * 104729) % 89) as f64 / 89.0 - 0.5) * 0.8;
        let rx: Vec<Complex64> = tx.iter().enumerate().map(|(i, s)| s + noise(i)).collect();
        let block = SymbolBlock::new(tx.clone(), tx.clone(), rx.clone(), tx.clone(), 0.0).unwrap();
        let n = 10;
        let eq = PassThrough { n, pol: Polarization::H };
        let q = evaluate_q::<f64, _>(&eq, &block, n, Polarization::H).unwrap();
        let le = block.metrics(Polarization::H, n..len - n).unwrap();
        assert_eq!(q, le);
        assert!(q.ber > 0.0);
    }
}
