use std::io::Write;

use ndarray::{Array2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_mt::Mt64;
use serde::{Deserialize, Serialize};

use super::{evaluate_dataset, Float, MlpModel, WindowedDataset};
use crate::{Error, Result};

/// Mini-batch Adam on MSE with early stopping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    /// Stop after this many consecutive epochs without a relative loss
    /// improvement of at least `min_delta`.
    pub patience_epochs: usize,
    pub min_delta: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            max_epochs: 1000,
            patience_epochs: 150,
            min_delta: 1e-5,
            batch_size: 2048,
            seed: 11,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::config("learning rate must be > 0"));
        }
        if self.max_epochs == 0 || self.patience_epochs >= self.max_epochs {
            return Err(Error::config(format!(
                "patience ({}) must be below max_epochs ({})",
                self.patience_epochs, self.max_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be > 0"));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::config("min_delta must be >= 0"));
        }
        Ok(())
    }
}

/// Adam with `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8` and bias correction.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    lr: F,
    beta1: F,
    beta2: F,
    eps: F,
    t: i32,
    m: Vec<Array2<F>>,
    v: Vec<Array2<F>>,
}

impl<F: Float> Adam<F> {
    pub fn new(model: &MlpModel<F>, lr: f64) -> Self {
        let zeros = || model.weights.iter().map(|w| Array2::zeros(w.dim())).collect();
        Self {
            lr: F::from_f64_lossy(lr),
            beta1: F::from_f64_lossy(0.9),
            beta2: F::from_f64_lossy(0.999),
            eps: F::from_f64_lossy(1e-8),
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> usize {
        self.t as usize
    }

    pub fn step(&mut self, weights: &mut [Array2<F>], grads: &[Array2<F>]) {
        self.t += 1;
        let one = F::one();
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        let c1 = one - b1.powi(self.t);
        let c2 = one - b2.powi(self.t);
        for ((w, g), (m, v)) in weights
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            Zip::from(w)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}

/// Epoch driver shared by plain training and pruning fine-tuning.
///
/// Each epoch shuffles the row order with a generator seeded once from
/// `cfg.seed` and walks it in mini-batches; masks are re-applied after every
/// optimizer step so pruned weights stay at zero.
pub struct Trainer<F> {
    cfg: TrainConfig,
    adam: Adam<F>,
    rng: Mt64,
    order: Vec<usize>,
}

impl<F: Float> Trainer<F> {
    pub fn new(model: &MlpModel<F>, cfg: &TrainConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            adam: Adam::new(model, cfg.lr),
            rng: Mt64::seed_from_u64(cfg.seed),
            order: Vec::new(),
        }
    }

    /// Optimizer steps taken so far.
    pub fn steps(&self) -> usize {
        self.adam.steps()
    }

    pub fn batches_per_epoch(&self, data_len: usize) -> usize {
        data_len.div_ceil(self.cfg.batch_size)
    }

    /// Runs one epoch and returns the mean batch loss. `before_step` sees the
    /// global step index before each gradient evaluation.
    pub fn run_epoch(
        &mut self,
        model: &mut MlpModel<F>,
        data: &WindowedDataset<F>,
        mut before_step: impl FnMut(usize, &mut MlpModel<F>),
    ) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::input("training set is empty"));
        }
        if self.order.len() != data.len() {
            self.order = (0..data.len()).collect();
        }
        self.order.shuffle(&mut self.rng);
        let mut weighted = 0.0;
        let order = std::mem::take(&mut self.order);
        for chunk in order.chunks(self.cfg.batch_size) {
            let step = self.steps();
            before_step(step, model);
            let x = data.inputs.select(Axis(0), chunk);
            let y = data.targets.select(Axis(0), chunk);
            let (loss, grads) = model.loss_and_gradients(x.view(), y.view())?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                self.order = order;
                return Err(Error::Divergence {
                    unit: "step",
                    index: step,
                    loss,
                });
            }
            self.adam.step(&mut model.weights, &grads);
            model.apply_masks();
            weighted += loss * chunk.len() as f64;
        }
        self.order = order;
        Ok(weighted / data.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_ber: f64,
    pub test_q_db: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.records.len()
    }

    /// CSV with header `epoch,train_mse,test_ber,test_q_db`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_mse", "test_ber", "test_q_db"])?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                format!("{:.9e}", r.train_mse),
                format!("{:.9e}", r.test_ber),
                format!("{:.4}", r.test_q_db),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains `model` until `max_epochs` or until the training loss stalls for
/// `patience_epochs` epochs, recording the test-set BER after every epoch.
pub fn train<F: Float>(
    mut model: MlpModel<F>,
    train_set: &WindowedDataset<F>,
    test_set: &WindowedDataset<F>,
    cfg: &TrainConfig,
) -> Result<(MlpModel<F>, TrainHistory)> {
    cfg.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::input("training and test sets must be non-empty"));
    }
    let mut trainer = Trainer::new(&model, cfg);
    let mut history = TrainHistory::default();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        let loss = trainer
            .run_epoch(&mut model, train_set, |_, _| {})
            .map_err(|e| match e {
                Error::Divergence { loss, .. } => Error::Divergence {
                    unit: "epoch",
                    index: epoch,
                    loss,
                },
                other => other,
            })?;
        let metrics = evaluate_dataset(&model, test_set)?;
        history.records.push(EpochRecord {
            epoch,
            train_mse: loss,
            test_ber: metrics.ber,
            test_q_db: metrics.q_db,
        });
        log::debug!("epoch {epoch}: mse {loss:.6e}, test BER {:.4e}", metrics.ber);
        if loss < best * (1.0 - cfg.min_delta) {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience_epochs {
                history.stopped_early = true;
                break;
            }
        }
    }
    Ok((model, history))
}
