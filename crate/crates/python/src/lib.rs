//! Python bindings: simulation, linear DSP metrics, MLP models, pruning,
//! INT8 quantization and complexity accounting.

use ndarray::Array2;
use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mlpeq::complexity::{self, BitWidths, ModelFile, QuantLayout};
use mlpeq::compress::{self, QuantizedModel};
use mlpeq::dsp::{self, Polarization, SymbolBlock};
use mlpeq::neuralnet::{self, Activation, MlpModel, TrainConfig};
use mlpeq::txsim::{self, AmplifierParams, FiberParams, TxConfig};

fn err(e: mlpeq::Error) -> PyErr {
    match e {
        mlpeq::Error::Io(io) => PyIOError::new_err(io.to_string()),
        mlpeq::Error::Config(_) | mlpeq::Error::Input(_) | mlpeq::Error::Format(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn pol(name: &str) -> PyResult<Polarization> {
    match name {
        "h" | "H" => Ok(Polarization::H),
        "v" | "V" => Ok(Polarization::V),
        other => Err(PyValueError::new_err(format!("polarization must be 'h' or 'v', got {other:?}"))),
    }
}

fn to_array(rows: Vec<Vec<f32>>) -> PyResult<Array2<f32>> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_rows(a: &Array2<f32>) -> Vec<Vec<f32>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Received and transmitted symbols of both polarizations after linear DSP.
#[pyclass(name = "SymbolBlock", module = "mlpeq_py")]
struct PySymbolBlock {
    inner: SymbolBlock,
}

#[pymethods]
impl PySymbolBlock {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn launch_power_dbm(&self) -> f64 {
        self.inner.launch_power_dbm
    }

    #[pyo3(signature = (polarization = "h"))]
    fn tx(&self, polarization: &str) -> PyResult<Vec<Complex64>> {
        Ok(self.inner.tx(pol(polarization)?).to_vec())
    }

    #[pyo3(signature = (polarization = "h"))]
    fn rx(&self, polarization: &str) -> PyResult<Vec<Complex64>> {
        Ok(self.inner.rx(pol(polarization)?).to_vec())
    }

    /// `(ber, q_db)` of the linear-DSP decisions, skipping `skip` symbols at
    /// each edge.
    #[pyo3(signature = (polarization = "h", skip = 0))]
    fn metrics(&self, polarization: &str, skip: usize) -> PyResult<(f64, f64)> {
        let n = self.inner.len();
        if 2 * skip >= n {
            return Err(PyValueError::new_err("skip leaves no symbols"));
        }
        let m = self.inner.metrics(pol(polarization)?, skip..n - skip).map_err(err)?;
        Ok((m.ber, m.q_db))
    }

    /// Window features `(B, 4 (2N + 1))` and targets `(B, 2)` as nested lists.
    #[pyo3(signature = (n_neighbors = 10, polarization = "h"))]
    fn windows(&self, n_neighbors: usize, polarization: &str) -> PyResult<(Vec<Vec<f32>>, Vec<Vec<f32>>)> {
        let d = neuralnet::build_windows::<f32>(&self.inner, n_neighbors, pol(polarization)?).map_err(err)?;
        Ok((to_rows(&d.inputs), to_rows(&d.targets)))
    }
}

/// Simulates the dual-polarization link and runs CDC, matched filtering and
/// normalization. `gamma=None` keeps the fiber's nonlinearity.
#[pyfunction]
#[pyo3(signature = (launch_power_dbm = 1.0, n_symbols = 4096, seed = 1, noise = true, n_spans = 20, gamma = None, twc = false))]
fn simulate(
    py: Python<'_>,
    launch_power_dbm: f64,
    n_symbols: usize,
    seed: u64,
    noise: bool,
    n_spans: usize,
    gamma: Option<f64>,
    twc: bool,
) -> PyResult<PySymbolBlock> {
    let mut fiber = if twc { FiberParams::twc() } else { FiberParams::ssmf() };
    fiber.n_spans = n_spans;
    if let Some(g) = gamma {
        fiber.gamma_w_km = g;
    }
    let tx = TxConfig {
        launch_power_dbm,
        seed,
        ..TxConfig::default()
    };
    let nf = if noise { 4.5 } else { f64::NEG_INFINITY };
    let amp = AmplifierParams::for_span(&fiber, nf, seed.wrapping_mul(1000).wrapping_add(7));
    let block = py
        .detach(|| -> mlpeq::Result<SymbolBlock> {
            let link = txsim::simulate_link(&tx, &fiber, &amp, n_symbols)?;
            dsp::linear_equalize(&link, &tx, &fiber)
        })
        .map_err(err)?;
    Ok(PySymbolBlock { inner: block })
}

/// Bias-free tanh MLP with FP32 weights.
#[pyclass(name = "Model", module = "mlpeq_py")]
struct PyModel {
    inner: MlpModel<f32>,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (dims = vec![84, 500, 10, 500, 2], seed = 1))]
    fn new(dims: Vec<usize>, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: MlpModel::glorot(&dims, Activation::Tanh, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        match complexity::read_model(path).map_err(err)? {
            ModelFile::Dense(m) => Ok(Self { inner: m }),
            ModelFile::Quantized(_) => Err(PyValueError::new_err("file holds an INT8 model; use QuantizedModel.load")),
        }
    }

    fn save(&self, path: &str) -> PyResult<usize> {
        let bytes = complexity::serialize_dense(&self.inner).map_err(err)?;
        complexity::write_model(path, &bytes).map_err(err)?;
        Ok(bytes.len())
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims.clone()
    }

    #[getter]
    fn n_weights(&self) -> usize {
        self.inner.n_weights()
    }

    #[getter]
    fn sparsity(&self) -> f64 {
        self.inner.sparsity()
    }

    fn weights(&self, layer: usize) -> PyResult<Vec<Vec<f32>>> {
        self.inner
            .weights
            .get(layer)
            .map(to_rows)
            .ok_or_else(|| PyValueError::new_err("no such layer"))
    }

    fn forward(&self, rows: Vec<Vec<f32>>) -> PyResult<Vec<Vec<f32>>> {
        let x = to_array(rows)?;
        Ok(to_rows(&self.inner.forward(x.view()).map_err(err)?))
    }

    /// Trains in place on the windows of `train`, evaluating on `test`;
    /// returns the per-epoch `(train_mse, test_q_db)` history.
    #[pyo3(signature = (train, test, epochs = 10, batch_size = 2048, lr = 1e-3, n_neighbors = 10, polarization = "h", seed = 11))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        &mut self,
        py: Python<'_>,
        train: &PySymbolBlock,
        test: &PySymbolBlock,
        epochs: usize,
        batch_size: usize,
        lr: f64,
        n_neighbors: usize,
        polarization: &str,
        seed: u64,
    ) -> PyResult<Vec<(f64, f64)>> {
        let p = pol(polarization)?;
        let cfg = TrainConfig {
            lr,
            max_epochs: epochs,
            patience_epochs: epochs.saturating_sub(1),
            batch_size,
            seed,
            ..TrainConfig::default()
        };
        let model = self.inner.clone();
        let (trained, history) = py
            .detach(|| -> mlpeq::Result<_> {
                let tr = neuralnet::build_windows::<f32>(&train.inner, n_neighbors, p)?;
                let te = neuralnet::build_windows::<f32>(&test.inner, n_neighbors, p)?;
                neuralnet::train(model, &tr, &te, &cfg)
            })
            .map_err(err)?;
        self.inner = trained;
        Ok(history.records.iter().map(|r| (r.train_mse, r.test_q_db)).collect())
    }

    /// `(ber, q_db)` on the windows of `block`.
    #[pyo3(signature = (block, n_neighbors = 10, polarization = "h"))]
    fn evaluate(&self, block: &PySymbolBlock, n_neighbors: usize, polarization: &str) -> PyResult<(f64, f64)> {
        let m = neuralnet::evaluate_q::<f32, _>(&self.inner, &block.inner, n_neighbors, pol(polarization)?)
            .map_err(err)?;
        Ok((m.ber, m.q_db))
    }

    /// Magnitude-pruned copy with `sparsity` of every layer masked.
    fn prune(&self, sparsity: f64) -> PyResult<PyModel> {
        Ok(PyModel {
            inner: compress::prune_magnitude(&self.inner, sparsity).map_err(err)?,
        })
    }

    /// Post-training INT8 quantization calibrated on the first `n_samples`
    /// rows.
    #[pyo3(signature = (calibration_rows, n_samples = 100))]
    fn quantize(&self, calibration_rows: Vec<Vec<f32>>, n_samples: usize) -> PyResult<PyQuantizedModel> {
        let x = to_array(calibration_rows)?;
        let ranges = compress::calibrate_activations(&self.inner, x.view(), n_samples).map_err(err)?;
        Ok(PyQuantizedModel {
            inner: compress::quantize_ptq(&self.inner, &ranges).map_err(err)?,
        })
    }
}

/// INT8 model with per-tensor symmetric scales.
#[pyclass(name = "QuantizedModel", module = "mlpeq_py")]
struct PyQuantizedModel {
    inner: QuantizedModel,
}

#[pymethods]
impl PyQuantizedModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        match complexity::read_model(path).map_err(err)? {
            ModelFile::Quantized(q) => Ok(Self { inner: q }),
            ModelFile::Dense(_) => Err(PyValueError::new_err("file holds an FP32 model; use Model.load")),
        }
    }

    #[pyo3(signature = (path, sparse = true))]
    fn save(&self, path: &str, sparse: bool) -> PyResult<usize> {
        let bytes = self.serialize(sparse)?;
        complexity::write_model(path, &bytes).map_err(err)?;
        Ok(bytes.len())
    }

    #[pyo3(signature = (sparse = true))]
    fn size_bytes(&self, sparse: bool) -> PyResult<usize> {
        Ok(self.serialize(sparse)?.len())
    }

    #[getter]
    fn sparsity(&self) -> f64 {
        self.inner.sparsity
    }

    #[getter]
    fn weight_scales(&self) -> Vec<f64> {
        self.inner.weight_qparams.iter().map(|q| q.scale).collect()
    }

    fn int_weights(&self, layer: usize) -> PyResult<Vec<Vec<i8>>> {
        self.inner
            .int_weights
            .get(layer)
            .map(|w| w.rows().into_iter().map(|r| r.to_vec()).collect())
            .ok_or_else(|| PyValueError::new_err("no such layer"))
    }

    fn infer(&self, rows: Vec<Vec<f32>>) -> PyResult<Vec<Vec<f32>>> {
        let x = to_array(rows)?;
        Ok(to_rows(&compress::infer_int8::<f32>(&self.inner, x.view()).map_err(err)?))
    }

    #[pyo3(signature = (block, n_neighbors = 10, polarization = "h"))]
    fn evaluate(&self, block: &PySymbolBlock, n_neighbors: usize, polarization: &str) -> PyResult<(f64, f64)> {
        let m = neuralnet::evaluate_q::<f32, _>(&self.inner, &block.inner, n_neighbors, pol(polarization)?)
            .map_err(err)?;
        Ok((m.ber, m.q_db))
    }
}

impl PyQuantizedModel {
    fn serialize(&self, sparse: bool) -> PyResult<Vec<u8>> {
        let layout = if sparse { QuantLayout::Sparse } else { QuantLayout::Dense };
        complexity::serialize_quantized(&self.inner, layout).map_err(err)
    }
}

#[pyfunction]
fn ber_to_q(ber: f64) -> PyResult<f64> {
    dsp::ber_to_q(ber).map_err(err)
}

#[pyfunction]
fn q_to_ber(q_db: f64) -> f64 {
    dsp::q_to_ber(q_db)
}

#[pyfunction]
fn compute_ber(rx: Vec<Complex64>, tx: Vec<Complex64>) -> PyResult<f64> {
    dsp::compute_ber(&rx, &tx).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (dims, input_bits = 32, activation_bits = 32, weight_bits = 32, pruned_fraction = 0.0))]
fn bops_mlp(dims: Vec<usize>, input_bits: u32, activation_bits: u32, weight_bits: u32, pruned_fraction: f64) -> PyResult<f64> {
    let b = BitWidths {
        input: input_bits,
        activation: activation_bits,
        weight: weight_bits,
        output: activation_bits,
    };
    complexity::bops_mlp(&dims, &b, pruned_fraction).map_err(err)
}

#[pyfunction]
fn reduction_pct(current: f64, baseline: f64) -> PyResult<f64> {
    complexity::reduction_pct(current, baseline).map_err(err)
}

/// Symmetric INT8 code of `x` for a tensor whose largest magnitude is
/// `max_abs`.
#[pyfunction]
fn quantize_value(x: f64, max_abs: f64) -> i32 {
    compress::quantize_value(x, &compress::QuantParams::symmetric_i8(max_abs))
}

#[pymodule]
fn mlpeq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySymbolBlock>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyQuantizedModel>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(ber_to_q, m)?)?;
    m.add_function(wrap_pyfunction!(q_to_ber, m)?)?;
    m.add_function(wrap_pyfunction!(compute_ber, m)?)?;
    m.add_function(wrap_pyfunction!(bops_mlp, m)?)?;
    m.add_function(wrap_pyfunction!(reduction_pct, m)?)?;
    m.add_function(wrap_pyfunction!(quantize_value, m)?)?;
    Ok(())
}
