use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::neuralnet::{Float, MlpModel, TrainConfig, Trainer, WindowedDataset};
use crate::{Error, Result};

/// Polynomial-decay sparsity schedule, re-evaluated every `prune_every_steps`
/// optimizer steps over `total_epochs` epochs of fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneSchedule {
    pub s0: f64,
    pub sf: f64,
    pub power: f64,
    pub prune_every_steps: usize,
    pub total_epochs: usize,
}

impl Default for PruneSchedule {
    fn default() -> Self {
        Self {
            s0: 0.0,
            sf: 0.6,
            power: 3.0,
            prune_every_steps: 50,
            total_epochs: 300,
        }
    }
}

impl PruneSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.s0 && self.s0 <= self.sf && self.sf < 1.0) {
            return Err(Error::config(format!(
                "need 0 <= s0 ({}) <= sf ({}) < 1",
                self.s0, self.sf
            )));
        }
        if !(self.power > 0.0) {
            return Err(Error::config("schedule power must be > 0"));
        }
        if self.prune_every_steps == 0 || self.total_epochs == 0 {
            return Err(Error::config("pruning cadence and duration must be > 0"));
        }
        Ok(())
    }
}

/// `s(t) = sf + (s0 - sf) (1 - t/T)^power`, held constant between multiples of
/// `prune_every_steps`; `t >= T` yields `sf`.
pub fn target_sparsity(step: usize, sched: &PruneSchedule, total_steps: usize) -> f64 {
    if total_steps == 0 || step >= total_steps {
        return sched.sf;
    }
    let held = step - step % sched.prune_every_steps;
    let progress = held as f64 / total_steps as f64;
    sched.sf + (sched.s0 - sched.sf) * (1.0 - progress).powf(sched.power)
}

/// Masks the `floor(sparsity * count)` smallest-magnitude weights of every
/// layer. Ties are broken in favour of pruning weights that are already
/// masked, then by row-major index, so a pruned weight is never revived by a
/// later call at a higher sparsity.
pub fn prune_magnitude<F: Float>(model: &MlpModel<F>, sparsity: f64) -> Result<MlpModel<F>> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::input(format!("sparsity {sparsity} outside [0, 1)")));
    }
    let mut out = model.clone();
    let mut masks = Vec::with_capacity(model.n_layers());
    for (k, w) in model.weights.iter().enumerate() {
        let count = w.len();
        let n_prune = (sparsity * count as f64).floor() as usize;
        let prev: Vec<bool> = match &model.masks {
            Some(m) => m[k].iter().copied().collect(),
            None => vec![true; count],
        };
        let flat: Vec<F> = w.iter().copied().collect();
        let mut order: Vec<usize> = (0..count).collect();
        order.sort_by(|&a, &b| {
            flat[a]
                .abs()
                .partial_cmp(&flat[b].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(prev[a].cmp(&prev[b]))
                .then(a.cmp(&b))
        });
        let mut keep = vec![true; count];
        for &i in &order[..n_prune] {
            keep[i] = false;
        }
        masks.push(Array2::from_shape_vec(w.dim(), keep).expect("mask shape"));
    }
    out.masks = Some(masks);
    out.apply_masks();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneEvent {
    pub step: usize,
    pub target: f64,
    pub measured: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PruneTrace {
    pub events: Vec<PruneEvent>,
    pub epoch_losses: Vec<f64>,
}

/// Fine-tunes a trained model for `sched.total_epochs` epochs while raising its
/// sparsity along the schedule. Pruning happens before every optimizer step
/// whose index is a multiple of `prune_every_steps`; a final pruning pass at
/// `sf` follows the last epoch. The Adam state starts fresh.
pub fn prune_with_finetune<F: Float>(
    model: &MlpModel<F>,
    sched: &PruneSchedule,
    data: &WindowedDataset<F>,
    train_cfg: &TrainConfig,
) -> Result<(MlpModel<F>, PruneTrace)> {
    sched.validate()?;
    train_cfg.validate()?;
    if data.is_empty() {
        return Err(Error::input("fine-tuning set is empty"));
    }
    let mut current = prune_magnitude(model, sched.s0)?;
    let mut trainer = Trainer::new(&current, train_cfg);
    let total_steps = sched.total_epochs * trainer.batches_per_epoch(data.len());
    let mut trace = PruneTrace::default();
    let mut failure: Option<Error> = None;
    for _ in 0..sched.total_epochs {
        let loss = trainer.run_epoch(&mut current, data, |step, m| {
            if failure.is_some() || step % sched.prune_every_steps != 0 {
                return;
            }
            let target = target_sparsity(step, sched, total_steps);
            match prune_magnitude(m, target) {
                Ok(pruned) => {
                    *m = pruned;
                    trace.events.push(PruneEvent {
                        step,
                        target,
                        measured: m.sparsity(),
                    });
                }
                Err(e) => failure = Some(e),
            }
        })?;
        if let Some(e) = failure.take() {
            return Err(e);
        }
        trace.epoch_losses.push(loss);
    }
    current = prune_magnitude(&current, sched.sf)?;
    trace.events.push(PruneEvent {
        step: total_steps,
        target: sched.sf,
        measured: current.sparsity(),
    });
    Ok((current, trace))
}

#[cfg(test)]
mod tests {
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_mt::Mt64;

    use super::*;
    use crate::dsp::Polarization;
    use crate::neuralnet::Activation;

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let sched = PruneSchedule {
            prune_every_steps: 1,
            ..PruneSchedule::default()
        };
        assert_eq!(target_sparsity(0, &sched, 1000), 0.0);
        assert_eq!(target_sparsity(1000, &sched, 1000), 0.6);
        // 0.6 * (1 - 0.5^3) = 0.525
        assert!((target_sparsity(500, &sched, 1000) - 0.525).abs() < 1e-12);
    }

    #[test]
    fn schedule_holds_between_prune_steps() {
        let sched = PruneSchedule::default();
        let at = target_sparsity(100, &sched, 1000);
        for t in 100..150 {
            assert_eq!(target_sparsity(t, &sched, 1000), at);
        }
        let mut last = 0.0;
        for t in 0..=1000 {
            let s = target_sparsity(t, &sched, 1000);
            assert!(s >= last);
            last = s;
        }
    }

    #[test]
    fn zero_sparsity_keeps_everything() {
        let m = MlpModel::<f64>::glorot(&[5, 4, 2], Activation::Tanh, 1).unwrap();
        let p = prune_magnitude(&m, 0.0).unwrap();
        assert!(p.masks.as_ref().unwrap().iter().all(|mk| mk.iter().all(|&k| k)));
        assert_eq!(p.weights, m.weights);
    }

    #[test]
    fn prunes_smallest_magnitudes() {
        let m = MlpModel::<f64>::from_weights(vec![array![[3.0, -1.0], [0.5, 2.0]]], Activation::Tanh)
            .unwrap();
        let p = prune_magnitude(&m, 0.5).unwrap();
        assert_eq!(p.weights[0], array![[3.0, 0.0], [0.0, 2.0]]);
        assert!(prune_magnitude(&m, 1.0).is_err());
    }

    #[test]
    fn ties_break_by_index() {
        let m = MlpModel::<f64>::from_weights(vec![array![[1.0, 1.0, 1.0, 1.0]]], Activation::Tanh)
            .unwrap();
        let p = prune_magnitude(&m, 0.5).unwrap();
        assert_eq!(p.weights[0], array![[0.0, 0.0, 1.0, 1.0]]);
    }

    #[test]
    fn pruning_order_property() {
        let m = MlpModel::<f64>::glorot(&[30, 20, 10, 2], Activation::Tanh, 8).unwrap();
        for s in [0.1, 0.37, 0.6, 0.9] {
            let p = prune_magnitude(&m, s).unwrap();
            let masks = p.masks.as_ref().unwrap();
            for k in 0..m.n_layers() {
                let count = m.weights[k].len();
                let pruned = masks[k].iter().filter(|&&keep| !keep).count();
                assert_eq!(pruned, (s * count as f64).floor() as usize);
                assert!((p.layer_sparsity(k) - s).abs() <= 1.0 / count as f64);
                let mut min_kept = f64::INFINITY;
                let mut max_pruned: f64 = 0.0;
                for (w, &keep) in m.weights[k].iter().zip(masks[k].iter()) {
                    if keep {
                        min_kept = min_kept.min(w.abs());
                    } else {
                        max_pruned = max_pruned.max(w.abs());
                    }
                }
                assert!(min_kept >= max_pruned);
            }
        }
    }

    #[test]
    fn repruning_never_revives() {
        let m = MlpModel::<f64>::glorot(&[12, 8, 2], Activation::Tanh, 3).unwrap();
        let mut p = prune_magnitude(&m, 0.3).unwrap();
        // Make an unmasked weight exactly zero; it ties with the masked ones.
        p.weights[0][[11, 7]] = 0.0;
        let before = p.masks.clone().unwrap();
        let q = prune_magnitude(&p, 0.3).unwrap();
        let after = q.masks.unwrap();
        for (b, a) in before.iter().zip(&after) {
            for (&kb, &ka) in b.iter().zip(a.iter()) {
                assert!(kb || !ka, "pruned weight revived");
            }
        }
    }

    fn toy_data(rows: usize) -> WindowedDataset<f64> {
        let mut rng = Mt64::seed_from_u64(17);
        let x = Array2::from_shape_fn((rows, 6), |_| rng.random::<f64>() - 0.5);
        let y = Array2::from_shape_fn((rows, 2), |(i, j)| x[[i, j]] * 0.8 - x[[i, j + 2]] * 0.3);
        WindowedDataset {
            inputs: x,
            targets: y,
            n_neighbors: 0,
            polarization: Polarization::H,
        }
    }

    #[test]
    fn finetune_reaches_final_sparsity_monotonically() {
        let data = toy_data(256);
        let m = MlpModel::<f64>::glorot(&[6, 16, 2], Activation::Tanh, 5).unwrap();
        let sched = PruneSchedule {
            sf: 0.6,
            prune_every_steps: 4,
            total_epochs: 10,
            ..PruneSchedule::default()
        };
        let cfg = TrainConfig {
            batch_size: 32,
            ..TrainConfig::default()
        };
        let (p, trace) = prune_with_finetune(&m, &sched, &data, &cfg).unwrap();
        for k in 0..p.n_layers() {
            let count = p.weights[k].len();
            let pruned = p.masks.as_ref().unwrap()[k].iter().filter(|&&x| !x).count();
            assert_eq!(pruned, (0.6 * count as f64).floor() as usize);
        }
        let targets: Vec<f64> = trace.events.iter().map(|e| e.target).collect();
        assert!(targets.windows(2).all(|w| w[0] <= w[1]));
        let measured: Vec<f64> = trace.events.iter().map(|e| e.measured).collect();
        assert!(measured.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(trace.events.first().unwrap().step, 0);
        assert_eq!(trace.epoch_losses.len(), 10);
    }

    #[test]
    fn finetune_with_zero_target_keeps_dense_masks() {
        let data = toy_data(64);
        let m = MlpModel::<f64>::glorot(&[6, 8, 2], Activation::Tanh, 5).unwrap();
        let sched = PruneSchedule {
            sf: 0.0,
            total_epochs: 3,
            ..PruneSchedule::default()
        };
        let cfg = TrainConfig {
            batch_size: 16,
            ..TrainConfig::default()
        };
        let (p, _) = prune_with_finetune(&m, &sched, &data, &cfg).unwrap();
        assert!(p.masks.as_ref().unwrap().iter().all(|mk| mk.iter().all(|&k| k)));
        assert_ne!(p.weights, m.weights);
    }
}
