//! Mini-batch Adam training with patience-based early stopping, plus
//! MSE/MAE evaluation on the standardized scale.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::WindowSet;
use crate::model::Model;
use crate::rng::Rng;
use crate::tensor::{Gradients, Tensor};
use crate::{Error, Result};

fn default_lr() -> f64 {
    1e-3
}

fn default_batch() -> usize {
    128
}

fn default_epochs() -> usize {
    30
}

fn default_patience() -> usize {
    5
}

fn default_seed() -> u64 {
    42
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_lr(),
            batch_size: default_batch(),
            max_epochs: default_epochs(),
            patience: default_patience(),
            seed: default_seed(),
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size, patience, and max_epochs must be ≥ 1".into()));
        }
        Ok(())
    }
}

// ── Adam ────────────────────────────────────────────────────────────

/// Adam with bias correction; β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    moments: Option<Vec<(Vec<f64>, Vec<f64>)>>,
}

impl Adam {
    pub fn new() -> Adam {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, moments: None }
    }

    /// One update over the full parameter list (order must be stable
    /// across calls). Parameters without a recorded gradient see a zero
    /// gradient.
    pub fn step(
        &mut self,
        params: &mut [(String, &mut Tensor)],
        grads: &Gradients,
        lr: f64,
    ) -> Result<()> {
        if self.moments.is_none() {
            self.moments = Some(
                params
                    .iter()
                    .map(|(_, p)| (vec![0.0; p.numel()], vec![0.0; p.numel()]))
                    .collect(),
            );
        }
        let moments = self.moments.as_mut().unwrap();
        if moments.len() != params.len() {
            return Err(Error::Config("optimizer state does not match parameter list".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((name, param), (m, v)) in params.iter_mut().zip(moments.iter_mut()) {
            let zero;
            let g: &[f64] = match grads.wrt(param) {
                Some(g) => g,
                None => {
                    zero = vec![0.0; param.numel()];
                    &zero
                }
            };
            if let Some(bad) = g.iter().find(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {} contains {}", name, bad)));
            }
            let mut data = param.data().to_vec();
            for i in 0..data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            let shape = param.shape().to_vec();
            **param = Tensor::from_vec(data, &shape)?;
        }
        Ok(())
    }
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new()
    }
}

// ── Early stopping ──────────────────────────────────────────────────

/// Stops after `patience` consecutive epochs without strict improvement.
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    wait: usize,
    pub best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> EarlyStopping {
        EarlyStopping { patience, best: f64::INFINITY, wait: 0, best_epoch: 0 }
    }

    /// Records one epoch's validation loss; returns true when it improved.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.wait = 0;
            true
        } else {
            self.wait += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.wait >= self.patience
    }
}

// ── Training and evaluation ─────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub seconds_per_epoch: f64,
}

/// MSE/MAE over every (window, channel, horizon-step) triple.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub mse: f64,
    pub mae: f64,
    pub per_horizon_mse: Vec<f64>,
}

/// Full report emitted by the pipeline. Wall-clock timing is kept out of
/// the serialized form so identical runs serialize identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub mae: f64,
    pub per_horizon_mse: Vec<f64>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    #[serde(skip)]
    pub train_seconds_per_epoch: f64,
    pub history: Vec<EpochStats>,
}

/// Trains in place and restores the best-validation parameters.
pub fn train(
    model: &mut Model,
    train_windows: &WindowSet,
    val_windows: &WindowSet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_windows.is_empty() || val_windows.is_empty() {
        return Err(Error::Data("train and val splits must contain at least one window".into()));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut adam = Adam::new();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_snapshot = model.snapshot();
    let mut history = Vec::new();
    let mut indices: Vec<usize> = (0..train_windows.len()).collect();
    let started = Instant::now();

    let mut epochs_run = 0;
    for epoch in 1..=cfg.max_epochs {
        let epoch_start = Instant::now();
        if cfg.shuffle {
            rng.shuffle(&mut indices);
        }
        let mut loss_sum = 0.0;
        let mut weight_sum = 0.0;
        for chunk in indices.chunks(cfg.batch_size) {
            let batch = train_windows.batch(chunk)?;
            let pred = model.forward(&batch.inputs, true, &mut rng)?;
            let loss = pred.mse(&batch.targets)?;
            let loss_value = loss.item()?;
            if !loss_value.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss {} at epoch {}, windows starting at {:?}",
                    loss_value,
                    epoch,
                    &batch.window_starts[..batch.window_starts.len().min(4)]
                )));
            }
            let grads = loss.backward()?;
            let mut params = model.named_params_mut();
            adam.step(&mut params, &grads, cfg.learning_rate)?;
            loss_sum += loss_value * chunk.len() as f64;
            weight_sum += chunk.len() as f64;
        }
        let train_loss = loss_sum / weight_sum;
        let val_loss = evaluate(model, val_windows, cfg.batch_size)?.mse;
        epochs_run = epoch;
        if stopper.observe(epoch, val_loss) {
            best_snapshot = model.snapshot();
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            seconds: epoch_start.elapsed().as_secs_f64(),
        });
        if stopper.should_stop() {
            break;
        }
    }
    model.restore(&best_snapshot);
    Ok(TrainOutcome {
        history,
        best_epoch: stopper.best_epoch,
        epochs_run,
        seconds_per_epoch: started.elapsed().as_secs_f64() / epochs_run.max(1) as f64,
    })
}

/// Running error accumulator shared by evaluation call sites.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    horizon: usize,
    sq_sum: f64,
    abs_sum: f64,
    per_h: Vec<f64>,
    count: usize,
}

impl MetricAccumulator {
    pub fn new(horizon: usize) -> MetricAccumulator {
        MetricAccumulator { horizon, sq_sum: 0.0, abs_sum: 0.0, per_h: vec![0.0; horizon], count: 0 }
    }

    /// Accumulates one flat (prediction, target) pair; elements are laid
    /// out with the horizon as the fastest axis.
    pub fn update(&mut self, pred: &[f64], target: &[f64]) {
        debug_assert_eq!(pred.len(), target.len());
        for (i, (&p, &t)) in pred.iter().zip(target).enumerate() {
            let d = p - t;
            self.sq_sum += d * d;
            self.abs_sum += d.abs();
            self.per_h[i % self.horizon] += d * d;
        }
        self.count += pred.len();
    }

    pub fn finish(self) -> Result<EvalMetrics> {
        if self.count == 0 {
            return Err(Error::Data("cannot evaluate an empty split".into()));
        }
        let n = self.count as f64;
        let rows = n / self.horizon as f64;
        Ok(EvalMetrics {
            mse: self.sq_sum / n,
            mae: self.abs_sum / n,
            per_horizon_mse: self.per_h.into_iter().map(|s| s / rows).collect(),
        })
    }
}

/// Deterministic evaluation with dropout disabled.
pub fn evaluate(model: &Model, windows: &WindowSet, batch_size: usize) -> Result<EvalMetrics> {
    if windows.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }
    let mut rng = Rng::new(0); // unused: dropout is off in eval mode
    let mut acc = MetricAccumulator::new(windows.horizon);
    let indices: Vec<usize> = (0..windows.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = windows.batch(chunk)?;
        let pred = model.forward(&batch.inputs, false, &mut rng)?;
        acc.update(pred.data(), batch.targets.data());
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SeriesMatrix;
    use crate::model::{Model, ModelConfig};
    use crate::synth::{generate, SynthKind, SynthSpec};

    fn tiny_config(c: usize, l: usize, h: usize) -> ModelConfig {
        ModelConfig {
            n_channels: c,
            lookback: l,
            horizon: h,
            n_transformer_layers: 0,
            n_mlp_layers: 0,
            d_model: 8,
            n_heads: 2,
            dropout: 0.0,
            channel_independent: true,
            grouping: None,
            revin_affine: true,
            raw_only: false,
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_fixed_point() {
        let mut p = Tensor::from_vec(vec![1.5, -2.0], &[2]).unwrap();
        let before = p.data().to_vec();
        // a loss that never touches p → no recorded gradient → zeros
        let unrelated = Tensor::scalar(4.0).sum_all();
        let grads = unrelated.backward().unwrap();
        let mut adam = Adam::new();
        let mut params = vec![("p".to_string(), &mut p)];
        adam.step(&mut params, &grads, 0.1).unwrap();
        assert_eq!(p.data(), before.as_slice());
    }

    #[test]
    fn adam_first_step_matches_hand_evaluation() {
        let mut p = Tensor::from_vec(vec![0.7], &[1]).unwrap();
        let loss = p.sum_all(); // dL/dp = 1
        let grads = loss.backward().unwrap();
        let mut adam = Adam::new();
        let mut params = vec![("p".to_string(), &mut p)];
        adam.step(&mut params, &grads, 0.1).unwrap();
        let expected = 0.7 - 0.1 * (1.0 / (1.0 + 1e-8));
        assert!((p.data()[0] - expected).abs() < 1e-15, "{} vs {}", p.data()[0], expected);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut p = Tensor::from_vec(vec![5.0], &[1]).unwrap();
        let target = Tensor::from_vec(vec![3.0], &[1]).unwrap();
        let mut adam = Adam::new();
        let loss_at = |p: &Tensor| p.mse(&target).unwrap().item().unwrap();
        let l0 = loss_at(&p);
        for _ in 0..2 {
            let loss = p.mse(&target).unwrap();
            let grads = loss.backward().unwrap();
            let mut params = vec![("p".to_string(), &mut p)];
            adam.step(&mut params, &grads, 0.1).unwrap();
        }
        assert!(loss_at(&p) < l0);
    }

    #[test]
    fn adam_rejects_non_finite_gradient_naming_parameter() {
        let mut p = Tensor::from_vec(vec![1.0], &[1]).unwrap();
        let inf = Tensor::from_vec(vec![f64::INFINITY], &[1]).unwrap();
        let loss = p.mul(&inf).unwrap().sum_all();
        let grads = loss.backward().unwrap();
        let mut adam = Adam::new();
        let mut params = vec![("weights.w".to_string(), &mut p)];
        let err = adam.step(&mut params, &grads, 0.1).unwrap_err().to_string();
        assert!(err.contains("weights.w"), "{}", err);
    }

    #[test]
    fn early_stopping_trace() {
        let vals = [1.0, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95];
        let mut stopper = EarlyStopping::new(5);
        let mut stopped_after = 0;
        for (i, &v) in vals.iter().enumerate() {
            stopper.observe(i + 1, v);
            if stopper.should_stop() {
                stopped_after = i + 1;
                break;
            }
        }
        assert_eq!(stopped_after, 7);
        assert_eq!(stopper.best_epoch, 2);
    }

    #[test]
    fn metric_accumulator_single_point() {
        let mut acc = MetricAccumulator::new(1);
        acc.update(&[0.0], &[3.0]);
        let m = acc.finish().unwrap();
        assert_eq!(m.mse, 9.0);
        assert_eq!(m.mae, 3.0);
    }

    #[test]
    fn metric_accumulator_perfect_fit() {
        let mut acc = MetricAccumulator::new(4);
        acc.update(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]);
        let m = acc.finish().unwrap();
        assert_eq!(m.mse, 0.0);
        assert_eq!(m.mae, 0.0);
        assert_eq!(m.per_horizon_mse, vec![0.0; 4]);
    }

    #[test]
    fn mae_bounded_by_rmse() {
        let mut rng = Rng::new(61);
        for _ in 0..50 {
            let mut acc = MetricAccumulator::new(5);
            let pred: Vec<f64> = (0..40).map(|_| rng.normal(0.0, 2.0)).collect();
            let target: Vec<f64> = (0..40).map(|_| rng.normal(0.0, 2.0)).collect();
            acc.update(&pred, &target);
            let m = acc.finish().unwrap();
            assert!(m.mae <= m.mse.sqrt() + 1e-12, "mae {} rmse {}", m.mae, m.mse.sqrt());
        }
    }

    fn sinusoid_series() -> SeriesMatrix {
        generate(&SynthSpec {
            kind: SynthKind::Sinusoids,
            n_channels: 2,
            length: 240,
            noise_std: 0.0,
            seed: 5,
        })
        .unwrap()
    }

    #[test]
    fn max_epochs_one_runs_exactly_one_epoch() {
        let series = sinusoid_series();
        let train_ws = WindowSet::new(&series, 24, 8, 1);
        let cfg = TrainConfig { max_epochs: 1, batch_size: 32, ..TrainConfig::default() };
        let mut model = Model::new(tiny_config(2, 24, 8), &mut Rng::new(cfg.seed)).unwrap();
        let outcome = train(&mut model, &train_ws, &train_ws, &cfg).unwrap();
        assert_eq!(outcome.epochs_run, 1);
        assert_eq!(outcome.history.len(), 1);
    }

    #[test]
    fn restored_parameters_match_best_epoch() {
        let series = sinusoid_series();
        let train_ws = WindowSet::new(&series, 24, 8, 1);
        let cfg = TrainConfig {
            max_epochs: 6,
            batch_size: 32,
            patience: 2,
            learning_rate: 5e-3,
            ..TrainConfig::default()
        };
        let mut model = Model::new(tiny_config(2, 24, 8), &mut Rng::new(cfg.seed)).unwrap();
        let outcome = train(&mut model, &train_ws, &train_ws, &cfg).unwrap();
        let best = outcome
            .history
            .iter()
            .map(|e| e.val_loss)
            .fold(f64::INFINITY, f64::min);
        // the restored model evaluates to the best recorded val loss
        let val = evaluate(&model, &train_ws, 32).unwrap().mse;
        assert!((val - best).abs() < 1e-12, "restored {} vs best {}", val, best);
    }

    #[test]
    fn vanishing_learning_rate_approaches_untrained_loss() {
        let series = sinusoid_series();
        let train_ws = WindowSet::new(&series, 24, 8, 1);
        let cfg = TrainConfig {
            max_epochs: 1,
            batch_size: 32,
            learning_rate: 1e-12,
            ..TrainConfig::default()
        };
        let mut model = Model::new(tiny_config(2, 24, 8), &mut Rng::new(cfg.seed)).unwrap();
        let frozen = Model { config: model.config.clone(), params: model.params.clone() };
        let outcome = train(&mut model, &train_ws, &train_ws, &cfg).unwrap();

        // replay the same shuffled batch order with frozen parameters
        let mut rng = Rng::new(cfg.seed);
        let mut indices: Vec<usize> = (0..train_ws.len()).collect();
        rng.shuffle(&mut indices);
        let mut loss_sum = 0.0;
        let mut weight = 0.0;
        for chunk in indices.chunks(cfg.batch_size) {
            let batch = train_ws.batch(chunk).unwrap();
            let pred = frozen.forward(&batch.inputs, true, &mut rng).unwrap();
            loss_sum += pred.mse(&batch.targets).unwrap().item().unwrap() * chunk.len() as f64;
            weight += chunk.len() as f64;
        }
        let untrained = loss_sum / weight;
        assert!(
            (outcome.history[0].train_loss - untrained).abs() < 1e-6,
            "{} vs {}",
            outcome.history[0].train_loss,
            untrained
        );
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let series = sinusoid_series();
        let run = || {
            let train_ws = WindowSet::new(&series, 24, 8, 1);
            let cfg = TrainConfig {
                max_epochs: 3,
                batch_size: 32,
                learning_rate: 1e-3,
                ..TrainConfig::default()
            };
            let mut model = Model::new(tiny_config(2, 24, 8), &mut Rng::new(cfg.seed)).unwrap();
            let outcome = train(&mut model, &train_ws, &train_ws, &cfg).unwrap();
            outcome
                .history
                .iter()
                .flat_map(|e| [e.train_loss.to_bits(), e.val_loss.to_bits()])
                .collect::<Vec<u64>>()
        };
        assert_eq!(run(), run());
    }
}
