use ndarray::Array2;

use super::Float;
use crate::dsp::{Polarization, SymbolBlock};
use crate::{Error, Result};

/// Real features per received symbol: `Re h, Im h, Re v, Im v`.
pub const FEATURES_PER_SYMBOL: usize = 4;

/// Sliding windows of received symbols and the transmitted central symbol.
///
/// Row `k` holds the received symbols `k .. k + 2N` (central symbol `k + N`)
/// flattened symbol by symbol, and the target `(Re, Im)` of `tx[k + N]` on the
/// chosen polarization.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset<F = f32> {
    pub inputs: Array2<F>,
    pub targets: Array2<F>,
    pub n_neighbors: usize,
    pub polarization: Polarization,
}

impl<F: Float> WindowedDataset<F> {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn memory(&self) -> usize {
        2 * self.n_neighbors + 1
    }

    /// Index in the source block of the symbol predicted by row 0.
    pub fn first_center(&self) -> usize {
        self.n_neighbors
    }

    /// The first `n` windows.
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            inputs: self.inputs.slice(ndarray::s![..n, ..]).to_owned(),
            targets: self.targets.slice(ndarray::s![..n, ..]).to_owned(),
            n_neighbors: self.n_neighbors,
            polarization: self.polarization,
        }
    }
}

pub fn build_windows<F: Float>(
    block: &SymbolBlock,
    n_neighbors: usize,
    polarization: Polarization,
) -> Result<WindowedDataset<F>> {
    let m = 2 * n_neighbors + 1;
    let len = block.len();
    if len < m {
        return Err(Error::input(format!(
            "block of {len} symbols is shorter than a window of {m}"
        )));
    }
    let rows = len - 2 * n_neighbors;
    let f = F::from_f64_lossy;
    let inputs = Array2::from_shape_fn((rows, m * FEATURES_PER_SYMBOL), |(k, col)| {
        let idx = k + col / FEATURES_PER_SYMBOL;
        match col % FEATURES_PER_SYMBOL {
            0 => f(block.rx_h[idx].re),
            1 => f(block.rx_h[idx].im),
            2 => f(block.rx_v[idx].re),
            _ => f(block.rx_v[idx].im),
        }
    });
    let tx = block.tx(polarization);
    let targets = Array2::from_shape_fn((rows, 2), |(k, c)| {
        let s = tx[k + n_neighbors];
        if c == 0 {
            f(s.re)
        } else {
            f(s.im)
        }
    });
    Ok(WindowedDataset {
        inputs,
        targets,
        n_neighbors,
        polarization,
    })
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;

    use super::*;

    fn indexed_block(len: usize) -> SymbolBlock {
        let seq = |offset: f64| -> Vec<Complex64> {
            (0..len)
                .map(|i| Complex64::new(i as f64 + offset, -(i as f64) - offset))
                .collect()
        };
        SymbolBlock::new(seq(0.1), seq(0.2), seq(0.3), seq(0.4), 0.0).unwrap()
    }

    #[test]
    fn window_counts() {
        let d: WindowedDataset<f64> = build_windows(&indexed_block(21), 10, Polarization::H).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.inputs.ncols(), 84);
        let d: WindowedDataset<f64> = build_windows(&indexed_block(100), 10, Polarization::H).unwrap();
        assert_eq!(d.len(), 80);
        assert!(build_windows::<f64>(&indexed_block(20), 10, Polarization::H).is_err());
    }

    #[test]
    fn window_contents_follow_index_bookkeeping() {
        let n = 3;
        let block = indexed_block(30);
        let d: WindowedDataset<f64> = build_windows(&block, n, Polarization::V).unwrap();
        for k in 0..d.len() {
            for j in 0..2 * n + 1 {
                let src = k + j;
                let row = d.inputs.row(k);
                assert_eq!(row[4 * j], block.rx_h[src].re);
                assert_eq!(row[4 * j + 1], block.rx_h[src].im);
                assert_eq!(row[4 * j + 2], block.rx_v[src].re);
                assert_eq!(row[4 * j + 3], block.rx_v[src].im);
            }
            assert_eq!(d.targets[[k, 0]], block.tx_v[k + n].re);
            assert_eq!(d.targets[[k, 1]], block.tx_v[k + n].im);
        }
    }
}
