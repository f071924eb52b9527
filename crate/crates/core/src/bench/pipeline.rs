use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::report::{emit_report, ComplexityRow, PipelineResults, QRow, Stage};
use super::{bench_latency, latency_inputs, ExperimentConfig};
use crate::complexity::{
    deserialize_model, serialize_dense, serialize_quantized, BitWidths, ComplexityReport, ModelFile,
    QuantLayout,
};
use crate::compress::{
    calibrate_activations, prune_with_finetune, quantize_ptq, PruneSchedule, QuantizedModel,
};
use crate::dsp::{linear_equalize, Polarization, SymbolBlock};
use crate::io::{decode_symbols, encode_symbols};
use crate::neuralnet::{
    build_windows, evaluate_dataset, train, Activation, MlpModel, TrainConfig, WindowedDataset,
};
use crate::txsim::{simulate_link, AmplifierParams, TxConfig};
use crate::{Error, Result};

/// How far a run goes. Later stages include the earlier ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PipelineStage {
    Simulate,
    Train,
    Prune,
    Quantize,
    Bench,
}

const CONFIG_SNAPSHOT: &str = "run_config.json";

fn power_tag(p: f64) -> String {
    format!("p{p:+.2}dBm")
}

fn sparsity_tag(s: f64) -> String {
    format!("s{:03}", (s * 100.0).round() as u32)
}

/// Writes through a temporary file so an interrupted run never leaves a
/// truncated checkpoint behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn in_stage<T>(cfg: &ExperimentConfig, stage: String, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    log::info!("{stage}: start");
    let out = f().map_err(|e| Error::Stage {
        stage: stage.clone(),
        seeds: cfg.seed_label(),
        source: Box::new(e),
    })?;
    log::info!("{stage}: done in {:.1} s", t.elapsed().as_secs_f64());
    Ok(out)
}

/// Simulates the link and the linear DSP chain for one launch power.
pub fn simulate_block(cfg: &ExperimentConfig, power_dbm: f64, data_seed: u64, n_symbols: usize) -> Result<SymbolBlock> {
    let tx = TxConfig {
        launch_power_dbm: power_dbm,
        seed: data_seed,
        ..cfg.tx.clone()
    };
    let nf = if cfg.amplifier.noise { cfg.amplifier.nf_db } else { f64::NEG_INFINITY };
    let amp = AmplifierParams::for_span(&cfg.fiber, nf, data_seed.wrapping_mul(1000).wrapping_add(7));
    let link = simulate_link(&tx, &cfg.fiber, &amp, n_symbols)?;
    Ok(linear_equalize(&link, &tx, &cfg.fiber)?.to_f32_precision())
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    dir: PathBuf,
    results: PipelineResults,
}

impl Run<'_> {
    fn path(&self, sub: &str, name: String) -> PathBuf {
        self.dir.join(sub).join(name)
    }

    /// Drops stale checkpoints when the model-affecting part of the config
    /// changed since the last run in this directory.
    fn prepare(&self) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let mut key = self.cfg.clone();
        key.output_dir = PathBuf::new();
        key.latency = Default::default();
        let snapshot = key.to_json()?;
        let path = self.dir.join(CONFIG_SNAPSHOT);
        if fs::read_to_string(&path).ok().as_deref() != Some(snapshot.as_str()) {
            for sub in ["data", "models", "history"] {
                let d = self.dir.join(sub);
                if d.exists() {
                    log::info!("config changed, clearing {}", d.display());
                    fs::remove_dir_all(&d)?;
                }
            }
            write_atomic(&path, snapshot.as_bytes())?;
        }
        Ok(())
    }

    fn block(&self, power: f64, split: &str, seed: u64, n: usize) -> Result<SymbolBlock> {
        let path = self.path("data", format!("{}_{split}.symb", power_tag(power)));
        if path.exists() {
            let (mut block, _) = decode_symbols(&fs::read(&path)?)?;
            block.launch_power_dbm = power;
            return Ok(block);
        }
        let block = simulate_block(self.cfg, power, seed, n)?;
        write_atomic(&path, &encode_symbols(&block, self.cfg.tx.baud_rate_hz()))?;
        Ok(block)
    }

    fn load_dense(path: &Path) -> Result<Option<MlpModel<f32>>> {
        if !path.exists() {
            return Ok(None);
        }
        match deserialize_model(&fs::read(path)?)? {
            ModelFile::Dense(m) => Ok(Some(m)),
            ModelFile::Quantized(_) => Err(Error::format(format!("{} is not an FP32 model", path.display()))),
        }
    }

    fn load_quantized(path: &Path) -> Result<Option<QuantizedModel>> {
        if !path.exists() {
            return Ok(None);
        }
        match deserialize_model(&fs::read(path)?)? {
            ModelFile::Quantized(m) => Ok(Some(m)),
            ModelFile::Dense(_) => Err(Error::format(format!("{} is not an INT8 model", path.display()))),
        }
    }

    /// Stores the smaller of the dense and sparse INT8 layouts.
    fn save_quantized(path: &Path, q: &QuantizedModel) -> Result<u64> {
        let dense = serialize_quantized(q, QuantLayout::Dense)?;
        let sparse = serialize_quantized(q, QuantLayout::Sparse)?;
        let bytes = if sparse.len() < dense.len() { sparse } else { dense };
        write_atomic(path, &bytes)?;
        Ok(bytes.len() as u64)
    }

    fn quantize(&self, model: &MlpModel<f32>, calib: &WindowedDataset<f32>) -> Result<QuantizedModel> {
        let ranges = calibrate_activations(model, calib.inputs.view(), self.cfg.calibration_samples)?;
        quantize_ptq(model, &ranges)
    }

    fn push_q(&mut self, power: f64, pol: Polarization, sparsity: f64, stage: Stage, ber: f64, q_db: f64) {
        log::info!("{} {} s={sparsity} {stage:?}: Q = {q_db:.3} dB (BER {ber:.3e})", power_tag(power), pol.name());
        self.results.q_rows.push(QRow {
            power_dbm: power,
            polarization: pol,
            sparsity,
            stage,
            ber,
            q_db,
        });
    }

    fn run_power(&mut self, power: f64, until: PipelineStage, bench: bool) -> Result<()> {
        let cfg = self.cfg;
        let ptag = power_tag(power);
        let (train_blk, test_blk) = in_stage(cfg, format!("simulate {ptag}"), || {
            Ok((
                self.block(power, "train", cfg.seeds.train_data, cfg.n_symbols_train)?,
                self.block(power, "test", cfg.seeds.test_data, cfg.n_symbols_test)?,
            ))
        })?;
        let n = cfg.n_neighbors;
        for (pi, &pol) in cfg.polarizations.iter().enumerate() {
            let le = in_stage(cfg, format!("dsp {ptag} {}", pol.name()), || {
                test_blk.metrics(pol, n..test_blk.len() - n)
            })?;
            self.push_q(power, pol, 0.0, Stage::Le, le.ber, le.q_db);
            if until < PipelineStage::Train {
                continue;
            }
            let train_set = build_windows::<f32>(&train_blk, n, pol)?;
            let test_set = build_windows::<f32>(&test_blk, n, pol)?;
            let stem = format!("{ptag}_{}", pol.name());

            let fp_path = self.path("models", format!("{stem}_fp32.mlpz"));
            let fp32 = in_stage(cfg, format!("train {stem}"), || {
                if let Some(m) = Self::load_dense(&fp_path)? {
                    return Ok(m);
                }
                let init = MlpModel::<f32>::glorot(&cfg.dims, Activation::Tanh, cfg.seeds.init.wrapping_add(pi as u64))?;
                let tcfg = TrainConfig {
                    seed: cfg.seeds.shuffle,
                    ..cfg.train.clone()
                };
                let (model, history) = train(init, &train_set, &test_set, &tcfg)?;
                let mut csv = Vec::new();
                history.write_csv(&mut csv)?;
                write_atomic(&self.path("history", format!("{stem}_train.csv")), &csv)?;
                write_atomic(&fp_path, &serialize_dense(&model)?)?;
                Ok(model)
            })?;
            let m = evaluate_dataset(&fp32, &test_set)?;
            self.push_q(power, pol, 0.0, Stage::Fp32, m.ber, m.q_db);
            let fp_bytes = fs::metadata(&fp_path)?.len();
            let report_complexity = pi == 0;

            let mut int8_models: Vec<(String, QuantizedModel)> = Vec::new();
            if report_complexity {
                self.results.complexity.push(ComplexityRow::from_report(
                    Some(power),
                    &ComplexityReport::new("FP32", &cfg.dims, BitWidths::FP32, 0.0, fp_bytes, fp_bytes)?,
                ));
                if cfg.quantize && until >= PipelineStage::Quantize {
                    let path = self.path("models", format!("{stem}_{}_int8.mlpz", sparsity_tag(0.0)));
                    let q = in_stage(cfg, format!("quantize {stem} s=0"), || {
                        if let Some(q) = Self::load_quantized(&path)? {
                            return Ok(q);
                        }
                        let q = self.quantize(&fp32, &train_set)?;
                        Self::save_quantized(&path, &q)?;
                        Ok(q)
                    })?;
                    let bytes = fs::metadata(&path)?.len();
                    self.results.complexity.push(ComplexityRow::from_report(
                        Some(power),
                        &ComplexityReport::new("INT8", &cfg.dims, BitWidths::INT8, 0.0, bytes, fp_bytes)?,
                    ));
                    int8_models.push(("INT8-s000".into(), q));
                }
            }

            if until < PipelineStage::Prune {
                continue;
            }
            for (si, &s) in cfg.sparsities.iter().enumerate() {
                let stag = sparsity_tag(s);
                let pr_path = self.path("models", format!("{stem}_{stag}_pruned.mlpz"));
                let pruned = in_stage(cfg, format!("prune {stem} {stag}"), || {
                    if let Some(m) = Self::load_dense(&pr_path)? {
                        return Ok(m);
                    }
                    let sched = PruneSchedule { sf: s, ..cfg.prune.clone() };
                    let ft = TrainConfig {
                        seed: cfg.seeds.shuffle.wrapping_add(1 + si as u64),
                        ..cfg.train.clone()
                    };
                    let (model, trace) = prune_with_finetune(&fp32, &sched, &train_set, &ft)?;
                    let mut csv = String::from("step,target,measured\n");
                    for e in &trace.events {
                        csv.push_str(&format!("{},{},{}\n", e.step, e.target, e.measured));
                    }
                    write_atomic(&self.path("history", format!("{stem}_{stag}_prune.csv")), csv.as_bytes())?;
                    write_atomic(&pr_path, &serialize_dense(&model)?)?;
                    Ok(model)
                })?;
                let m = evaluate_dataset(&pruned, &test_set)?;
                self.push_q(power, pol, s, Stage::Pruned, m.ber, m.q_db);

                if !cfg.quantize || until < PipelineStage::Quantize {
                    continue;
                }
                let q_path = self.path("models", format!("{stem}_{stag}_int8.mlpz"));
                let q = in_stage(cfg, format!("quantize {stem} {stag}"), || {
                    if let Some(q) = Self::load_quantized(&q_path)? {
                        return Ok(q);
                    }
                    let q = self.quantize(&pruned, &train_set)?;
                    Self::save_quantized(&q_path, &q)?;
                    Ok(q)
                })?;
                let m = evaluate_dataset::<f32, _>(&q, &test_set)?;
                self.push_q(power, pol, s, Stage::PrunedQuant, m.ber, m.q_db);
                if report_complexity {
                    let bytes = fs::metadata(&q_path)?.len();
                    self.results.complexity.push(ComplexityRow::from_report(
                        Some(power),
                        &ComplexityReport::new("INT8", &cfg.dims, BitWidths::INT8, s, bytes, fp_bytes)?,
                    ));
                    int8_models.push((format!("INT8-{stag}"), q));
                }
            }

            if bench && report_complexity {
                let inputs = latency_inputs(test_set.inputs.view(), cfg.latency.n_symbols)?;
                in_stage(cfg, format!("bench {stem}"), || {
                    let stats = bench_latency("FP32", &fp32, inputs.view(), &cfg.latency)?;
                    self.results.latency.push(stats);
                    for (name, q) in &int8_models {
                        let stats = bench_latency(name, q, inputs.view(), &cfg.latency)?;
                        self.results.latency.push(stats);
                    }
                    Ok(())
                })?;
            }
        }
        Ok(())
    }
}

/// Runs the experiment up to `until`, reusing any checkpoints in the output
/// directory that were produced under the same configuration, and writes the
/// reports.
pub fn run_until(cfg: &ExperimentConfig, until: PipelineStage) -> Result<PipelineResults> {
    cfg.validate()?;
    let mut run = Run {
        cfg,
        dir: cfg.output_dir.clone(),
        results: PipelineResults::default(),
    };
    run.prepare()?;
    let bench = until >= PipelineStage::Bench && cfg.latency.enabled;
    for (i, &p) in cfg.launch_powers_dbm.iter().enumerate() {
        run.run_power(p, until, bench && i == 0)?;
    }
    emit_report(&run.results, &run.dir)?;
    Ok(run.results)
}

pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineResults> {
    run_until(cfg, PipelineStage::Bench)
}

/// Complexity table from the configured shape alone: BoPs are analytic and
/// byte sizes come from serializing a Glorot-initialized model pruned to each
/// sparsity.
pub fn analytic_complexity(cfg: &ExperimentConfig) -> Result<Vec<ComplexityRow>> {
    cfg.validate()?;
    let model = MlpModel::<f32>::glorot(&cfg.dims, Activation::Tanh, cfg.seeds.init)?;
    let fp_bytes = serialize_dense(&model)?.len() as u64;
    let mut rows = vec![ComplexityRow::from_report(
        None,
        &ComplexityReport::new("FP32", &cfg.dims, BitWidths::FP32, 0.0, fp_bytes, fp_bytes)?,
    )];
    let calib = ndarray::Array2::<f32>::zeros((1, cfg.dims[0]));
    let mut sparsities = vec![0.0];
    sparsities.extend(cfg.sparsities.iter().copied().filter(|&s| s > 0.0));
    for s in sparsities {
        let pruned = crate::compress::prune_magnitude(&model, s)?;
        let q = quantize_ptq(&pruned, &calibrate_activations(&pruned, calib.view(), 1)?)?;
        let bytes = serialize_quantized(&q, QuantLayout::Dense)?
            .len()
            .min(serialize_quantized(&q, QuantLayout::Sparse)?.len()) as u64;
        rows.push(ComplexityRow::from_report(
            None,
            &ComplexityReport::new("INT8", &cfg.dims, BitWidths::INT8, s, bytes, fp_bytes)?,
        ));
    }
    Ok(rows)
}
