#![allow(dead_code)]

use fallwatch::data::Label;
use fallwatch::network::{
    backward_scaled, cross_entropy_loss, forward_batch, Architecture, Dropout, DropoutMasks, LstmModel,
    ParamSet, TensorId,
};
use fallwatch::rng;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Seeded 6→5→4→2 model with random biases so every tensor carries signal.
pub fn toy_model(seed: u64, window: usize, dropout: f64) -> LstmModel {
    let arch = Architecture {
        window,
        features: 6,
        units: [5, 4],
        classes: 2,
    };
    let mut model = LstmModel::new(arch, dropout, seed).unwrap();
    let mut r = rng::seeded(seed ^ 0xb1a5);
    for id in [TensorId::Layer1Bias, TensorId::Layer2Bias, TensorId::HeadBias] {
        for b in model.params.tensor_mut(id) {
            *b = r.random_range(-0.5..0.5);
        }
    }
    model
}

pub fn random_windows(seed: u64, count: usize, len: usize) -> Vec<Vec<[f64; 6]>> {
    let mut r = rng::seeded(seed);
    (0..count)
        .map(|_| {
            (0..len)
                .map(|_| std::array::from_fn(|_| StandardNormal.sample(&mut r)))
                .collect()
        })
        .collect()
}

fn mean_loss(model: &LstmModel, windows: &[&[[f64; 6]]], labels: &[Label], masks: &Option<DropoutMasks>) -> f64 {
    let dropout = match masks {
        Some(m) => Dropout::Fixed(m.clone()),
        None => Dropout::Off,
    };
    let trace = forward_batch(model, windows, dropout).unwrap();
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(b, l)| {
            let mut y = [0.0; 2];
            y[l.index()] = 1.0;
            cross_entropy_loss(&trace.probabilities(b), &y)
        })
        .sum();
    total / labels.len() as f64
}

/// Worst per-element relative error between the analytic gradient and
/// central differences, with the tensor and index where it occurs.
pub struct GradCheck {
    pub worst: f64,
    pub at: (TensorId, usize),
    pub checked: usize,
}

pub fn gradient_check(
    model: &LstmModel,
    windows: &[Vec<[f64; 6]>],
    labels: &[Label],
    masks: Option<DropoutMasks>,
) -> GradCheck {
    let views: Vec<&[[f64; 6]]> = windows.iter().map(|w| w.as_slice()).collect();
    let dropout = match &masks {
        Some(m) => Dropout::Fixed(m.clone()),
        None => Dropout::Off,
    };
    let trace = forward_batch(model, &views, dropout).unwrap();
    let analytic: ParamSet = backward_scaled(model, &trace, labels, 1.0).unwrap();

    let mut probe = model.clone();
    let mut out = GradCheck {
        worst: 0.0,
        at: (TensorId::Layer1Input, 0),
        checked: 0,
    };
    for id in TensorId::ALL {
        for i in 0..model.params.tensor(id).len() {
            let orig = model.params.tensor(id)[i];
            probe.params.tensor_mut(id)[i] = orig + FD_STEP;
            let up = mean_loss(&probe, &views, labels, &masks);
            probe.params.tensor_mut(id)[i] = orig - FD_STEP;
            let down = mean_loss(&probe, &views, labels, &masks);
            probe.params.tensor_mut(id)[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let g = analytic.tensor(id)[i];
            let rel = (g - numeric).abs() / (g.abs() + numeric.abs()).max(1e-8);
            if rel > out.worst {
                out.worst = rel;
                out.at = (id, i);
            }
            out.checked += 1;
        }
    }
    out
}

/// Dropout masks for a batch, drawn at the model's rate.
pub fn sample_masks(model: &LstmModel, windows: &[Vec<[f64; 6]>], seed: u64) -> DropoutMasks {
    let views: Vec<&[[f64; 6]]> = windows.iter().map(|w| w.as_slice()).collect();
    let mut r = rng::seeded(seed);
    forward_batch(model, &views, Dropout::Sample(&mut r))
        .unwrap()
        .masks
        .unwrap()
}
