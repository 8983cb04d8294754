//! Mini-batch training with Adam.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetSplit, Label, Window};
use crate::error::{Error, Result};
use crate::network::{
    backward, cross_entropy_loss, forward_batch, predict_batch, Dropout, LstmModel, ParamSet,
    TensorId,
};
use crate::rng;

const SHUFFLE_STREAM: u64 = 0x5487;
const DROPOUT_STREAM: u64 = 0xd50f;

/// Stop once the epoch train loss has improved by less than `min_delta`
/// for `patience` consecutive epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub min_delta: f64,
    pub patience: usize,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            min_delta: 1e-4,
            patience: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub early_stop: Option<EarlyStop>,
    /// Rescale the batch gradient when its global L2 norm exceeds this value.
    pub clip_global_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            epochs: 30,
            seed: 42,
            shuffle: true,
            early_stop: Some(EarlyStop::default()),
            clip_global_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return bad(format!("{name} must lie in [0, 1), got {beta}"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the number of updates applied.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ParamSet,
    pub v: ParamSet,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, applied elementwise to every tensor.
///
/// Nothing is modified if a shape mismatches or a gradient is non-finite.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) || !params.same_shape(&state.v) {
        return Err(Error::Shape("parameters, gradients and moments differ in shape".into()));
    }
    if let Some(id) = TensorId::ALL
        .into_iter()
        .find(|&id| grads.tensor(id).iter().any(|g| !g.is_finite()))
    {
        return Err(Error::Numeric {
            tensor: id.name().into(),
        });
    }
    state.t += 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let correction1 = 1.0 - b1.powi(state.t as i32);
    let correction2 = 1.0 - b2.powi(state.t as i32);
    for id in TensorId::ALL {
        let g = grads.tensor(id);
        let m = state.m.tensor_mut(id);
        for (m, g) in m.iter_mut().zip(g) {
            *m = b1 * *m + (1.0 - b1) * g;
        }
        let v = state.v.tensor_mut(id);
        for (v, g) in v.iter_mut().zip(g) {
            *v = b2 * *v + (1.0 - b2) * g * g;
        }
        let (m, v) = (state.m.tensor(id), state.v.tensor(id));
        for ((p, m), v) in params.tensor_mut(id).iter_mut().zip(m).zip(v) {
            let m_hat = m / correction1;
            let v_hat = v / correction2;
            *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}

/// Per-epoch metrics. Train figures are averaged over the epoch's batches in
/// training mode; test figures come from an inference pass after the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochMetrics>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_acc,test_loss,test_acc";

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e.epoch, e.train_loss, e.train_acc, e.test_loss, e.test_acc
            );
        }
        s
    }
}

/// Hooks run around every optimizer update.
pub trait StepHook {
    fn before_step(&self, _grads: &mut ParamSet) {}
    fn after_step(&self, _params: &mut ParamSet) {}
}

/// No-op hook for plain training.
pub struct NoHook;

impl StepHook for NoHook {}

/// Mean loss and accuracy (argmax) over a set of windows in inference mode.
pub fn evaluate_loss(model: &LstmModel, windows: &[Window]) -> Result<(f64, f64)> {
    if windows.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let views: Vec<&[[f64; 6]]> = windows.iter().map(|w| w.values.as_slice()).collect();
    let probs = predict_batch(model, &views)?;
    let (mut loss, mut correct) = (0.0, 0usize);
    for (p, w) in probs.iter().zip(windows) {
        loss += cross_entropy_loss(p, &one_hot(w.label));
        correct += usize::from(argmax(p) == w.label.index());
    }
    let n = windows.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

pub(crate) fn one_hot(label: Label) -> [f64; 2] {
    let mut y = [0.0; 2];
    y[label.index()] = 1.0;
    y
}

fn argmax(p: &[f64; 2]) -> usize {
    usize::from(p[1] > p[0])
}

fn clip(grads: &mut ParamSet, max_norm: f64) {
    let norm = TensorId::ALL
        .iter()
        .flat_map(|&id| grads.tensor(id))
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for id in TensorId::ALL {
            grads.tensor_mut(id).iter_mut().for_each(|g| *g *= scale);
        }
    }
}

/// Trains a copy of `model` on `split.train`.
pub fn train(model: &LstmModel, split: &DatasetSplit, config: &TrainConfig) -> Result<(LstmModel, TrainHistory)> {
    train_with_hook(model, split, config, &NoHook)
}

/// Training loop shared by plain training and mask-preserving fine-tuning.
///
/// Each epoch visits every training window exactly once in an order drawn
/// from `(seed, epoch)`; the final batch may be short. Single-threaded and
/// bitwise reproducible for a given seed.
pub fn train_with_hook(
    model: &LstmModel,
    split: &DatasetSplit,
    config: &TrainConfig,
    hook: &dyn StepHook,
) -> Result<(LstmModel, TrainHistory)> {
    config.validate()?;
    model.check()?;
    let mut model = model.clone();
    let mut history = TrainHistory::default();
    if config.epochs == 0 {
        return Ok((model, history));
    }
    if split.train.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let mut state = AdamState::new(&model.params);
    let mut best = f64::INFINITY;
    let mut stale = 0usize;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..split.train.len()).collect();
        if config.shuffle {
            order.shuffle(&mut rng::stream(config.seed, SHUFFLE_STREAM, epoch as u64));
        }
        let mut dropout_rng = rng::stream(config.seed, DROPOUT_STREAM, epoch as u64);
        let (mut loss_sum, mut correct) = (0.0, 0usize);

        for batch in order.chunks(config.batch_size) {
            let views: Vec<&[[f64; 6]]> = batch.iter().map(|&i| split.train[i].values.as_slice()).collect();
            let labels: Vec<Label> = batch.iter().map(|&i| split.train[i].label).collect();
            let trace = forward_batch(&model, &views, Dropout::Sample(&mut dropout_rng))?;
            for (b, label) in labels.iter().enumerate() {
                let p = trace.probabilities(b);
                loss_sum += cross_entropy_loss(&p, &one_hot(*label));
                correct += usize::from(argmax(&p) == label.index());
            }
            let mut grads = backward(&model, &trace, &labels)?;
            if let Some(max_norm) = config.clip_global_norm {
                clip(&mut grads, max_norm);
            }
            hook.before_step(&mut grads);
            adam_step(&mut model.params, &grads, &mut state, config)?;
            hook.after_step(&mut model.params);
        }

        let n = split.train.len() as f64;
        let (test_loss, test_acc) = evaluate_loss(&model, &split.test)?;
        let metrics = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / n,
            train_acc: correct as f64 / n,
            test_loss,
            test_acc,
        };
        log::info!(
            "epoch {:>3}: train loss {:.5} acc {:.4} | test loss {:.5} acc {:.4}",
            metrics.epoch,
            metrics.train_loss,
            metrics.train_acc,
            metrics.test_loss,
            metrics.test_acc
        );
        history.epochs.push(metrics);

        if let Some(rule) = config.early_stop {
            if best - metrics.train_loss < rule.min_delta {
                stale += 1;
            } else {
                stale = 0;
            }
            best = best.min(metrics.train_loss);
            if stale >= rule.patience {
                log::info!("early stop after epoch {}", epoch + 1);
                break;
            }
        }
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Architecture;

    fn scalar_params(value: f64) -> ParamSet {
        let arch = Architecture {
            window: 1,
            units: [1, 1],
            ..Architecture::default()
        };
        let mut p = ParamSet::zeros(&arch);
        p.fill(value);
        p
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut params = scalar_params(0.0);
        let grads = scalar_params(2.0);
        let mut state = AdamState::new(&params);
        let config = TrainConfig::default();
        adam_step(&mut params, &grads, &mut state, &config).unwrap();
        assert_eq!(state.t, 1);
        // m̂ = g, v̂ = g², so Δ = −α·g/(|g| + ε)
        let want = -1e-3 * 2.0 / (2.0 + 1e-8);
        for id in TensorId::ALL {
            for p in params.tensor(id) {
                assert!((p - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_steps_with_unit_gradient() {
        let mut params = scalar_params(0.0);
        let grads = scalar_params(1.0);
        let mut state = AdamState::new(&params);
        let config = TrainConfig::default();
        adam_step(&mut params, &grads, &mut state, &config).unwrap();
        let after_one = params.tensor(TensorId::HeadBias)[0];
        adam_step(&mut params, &grads, &mut state, &config).unwrap();
        let m = state.m.tensor(TensorId::HeadBias)[0];
        let v = state.v.tensor(TensorId::HeadBias)[0];
        assert!((m - 0.19).abs() < 1e-15);
        assert!((v - 0.001999).abs() < 1e-15);
        let delta = params.tensor(TensorId::HeadBias)[0] - after_one;
        assert!((delta + 1e-3).abs() < 1e-10, "{delta}");
        assert_eq!(state.t, 2);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut params = scalar_params(0.7);
        let before = params.clone();
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &scalar_params(0.0), &mut state, &TrainConfig::default()).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn non_finite_gradient_names_the_tensor() {
        let mut params = scalar_params(0.0);
        let mut grads = scalar_params(0.0);
        grads.tensor_mut(TensorId::Layer2Recurrent)[0] = f64::NAN;
        let mut state = AdamState::new(&params);
        match adam_step(&mut params, &grads, &mut state, &TrainConfig::default()) {
            Err(Error::Numeric { tensor }) => assert_eq!(tensor, "layer2.recurrent_weights"),
            other => panic!("{other:?}"),
        }
        assert_eq!(state.t, 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = scalar_params(0.0);
        let grads = ParamSet::zeros(&Architecture::default());
        let mut state = AdamState::new(&params);
        assert!(matches!(
            adam_step(&mut params, &grads, &mut state, &TrainConfig::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn config_validation() {
        let c = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            beta2: 1.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn history_csv_header() {
        let h = TrainHistory {
            epochs: vec![EpochMetrics {
                epoch: 1,
                train_loss: 0.5,
                train_acc: 0.75,
                test_loss: 0.25,
                test_acc: 1.0,
            }],
        };
        assert_eq!(h.to_csv(), "epoch,train_loss,train_acc,test_loss,test_acc\n1,0.5,0.75,0.25,1\n");
    }
}
