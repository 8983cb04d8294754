use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array3, Axis};
use rand::Rng as _;

use super::{check_dropout, sigmoid, LstmLayerParams, LstmModel, CLASSES, GATES};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::signal::CHANNELS;

/// Cached activations of one LSTM layer over a batch, laid out `(time, batch, ·)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// Activated gates `[i | f | g | o]`, `(T, B, 4H)`.
    pub gates: Array3<f64>,
    pub cell: Array3<f64>,
    pub hidden: Array3<f64>,
}

/// Inverted-dropout masks: kept elements hold `1/(1-rate)`, dropped ones 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    /// Applied to the layer-1 output sequence, `(T, B, H1)`.
    pub after_layer1: Array3<f64>,
    /// Applied to the final layer-2 hidden state, `(B, H2)`.
    pub after_layer2: Array2<f64>,
}

/// How dropout behaves during a forward pass.
pub enum Dropout<'a> {
    /// Inference mode.
    Off,
    /// Training mode, masks drawn from the generator at the model's rate.
    Sample(&'a mut Rng),
    /// Training mode with caller-supplied masks.
    Fixed(DropoutMasks),
}

/// Everything backpropagation needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `(T, B, features)`
    pub inputs: Array3<f64>,
    pub layer1: LayerTrace,
    /// Layer-1 output after dropout, `(T, B, H1)`.
    pub layer2_inputs: Array3<f64>,
    pub layer2: LayerTrace,
    /// Final layer-2 hidden state after dropout, `(B, H2)`.
    pub features: Array2<f64>,
    pub masks: Option<DropoutMasks>,
    pub logits: Array2<f64>,
    pub probabilities: Array2<f64>,
}

impl ForwardTrace {
    pub fn batch(&self) -> usize {
        self.probabilities.nrows()
    }

    pub fn probabilities(&self, b: usize) -> [f64; CLASSES] {
        [self.probabilities[[b, 0]], self.probabilities[[b, 1]]]
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `−Σ y·ln p` with `p` clamped to `[1e-12, 1]`.
pub fn cross_entropy_loss(probabilities: &[f64], one_hot: &[f64]) -> f64 {
    probabilities
        .iter()
        .zip(one_hot)
        .map(|(p, y)| -y * p.clamp(1e-12, 1.0).ln())
        .sum()
}

/// Inverted-dropout mask of `len` elements.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    check_dropout(rate)?;
    if rate == 0.0 {
        return Ok(vec![1.0; len]);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok((0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect())
}

fn lstm_layer_forward(params: &LstmLayerParams, inputs: &Array3<f64>) -> LayerTrace {
    let (steps, batch, input) = inputs.dim();
    let h = params.hidden();
    let width = GATES * h;

    // Input projections for every step at once.
    let flat = inputs
        .view()
        .into_shape_with_order((steps * batch, input))
        .expect("inputs are contiguous");
    let mut pre = Array2::<f64>::zeros((steps * batch, width));
    general_mat_mul(1.0, &flat, &params.input_weights.t(), 0.0, &mut pre);
    let mut gates = pre
        .into_shape_with_order((steps, batch, width))
        .expect("contiguous");
    let mut cell = Array3::<f64>::zeros((steps, batch, h));
    let mut hidden = Array3::<f64>::zeros((steps, batch, h));
    let bias = params.bias.as_slice().expect("contiguous bias");

    for t in 0..steps {
        let mut z = gates.index_axis_mut(Axis(0), t);
        if t > 0 {
            general_mat_mul(
                1.0,
                &hidden.index_axis(Axis(0), t - 1),
                &params.recurrent_weights.t(),
                1.0,
                &mut z,
            );
        }
        let z = z.as_slice_mut().expect("contiguous gates");
        let c_all = cell.as_slice_mut().expect("contiguous cell");
        let (c_before, c_rest) = c_all.split_at_mut(t * batch * h);
        let c_prev = (t > 0).then(|| &c_before[(t - 1) * batch * h..]);
        let c_now = &mut c_rest[..batch * h];
        let h_now = &mut hidden
            .index_axis_mut(Axis(0), t)
            .into_slice()
            .expect("contiguous hidden")[..];
        for b in 0..batch {
            let zr = &mut z[b * width..(b + 1) * width];
            for (v, bias) in zr.iter_mut().zip(bias) {
                *v += bias;
            }
            let (zi, rest) = zr.split_at_mut(h);
            let (zf, rest) = rest.split_at_mut(h);
            let (zg, zo) = rest.split_at_mut(h);
            for j in 0..h {
                let i = sigmoid(zi[j]);
                let f = sigmoid(zf[j]);
                let g = zg[j].tanh();
                let o = sigmoid(zo[j]);
                zi[j] = i;
                zf[j] = f;
                zg[j] = g;
                zo[j] = o;
                let cp = c_prev.map_or(0.0, |c| c[b * h + j]);
                let c = f * cp + i * g;
                c_now[b * h + j] = c;
                h_now[b * h + j] = o * c.tanh();
            }
        }
    }
    LayerTrace {
        gates,
        cell,
        hidden,
    }
}

fn check_window(model: &LstmModel, window: &[[f64; CHANNELS]]) -> Result<()> {
    if window.len() != model.arch.window {
        return Err(Error::Shape(format!(
            "window has {} rows, model expects {}",
            window.len(),
            model.arch.window
        )));
    }
    if window.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("window contains non-finite values".into()));
    }
    Ok(())
}

/// Forward pass over a batch of normalized windows.
pub fn forward_batch(
    model: &LstmModel,
    windows: &[&[[f64; CHANNELS]]],
    dropout: Dropout<'_>,
) -> Result<ForwardTrace> {
    if windows.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    for w in windows {
        check_window(model, w)?;
    }
    let batch = windows.len();
    let steps = model.arch.window;
    let [h1, h2] = model.arch.units;
    let inputs = Array3::from_shape_fn((steps, batch, CHANNELS), |(t, b, c)| windows[b][t][c]);

    let masks = match dropout {
        Dropout::Off => None,
        Dropout::Fixed(m) => {
            if m.after_layer1.dim() != (steps, batch, h1) || m.after_layer2.dim() != (batch, h2) {
                return Err(Error::Shape("dropout masks do not match the batch".into()));
            }
            Some(m)
        }
        Dropout::Sample(rng) => {
            let rate = model.dropout_rate;
            let m1 = dropout_mask(steps * batch * h1, rate, rng)?;
            let m2 = dropout_mask(batch * h2, rate, rng)?;
            Some(DropoutMasks {
                after_layer1: Array3::from_shape_vec((steps, batch, h1), m1).expect("sized"),
                after_layer2: Array2::from_shape_vec((batch, h2), m2).expect("sized"),
            })
        }
    };

    let layer1 = lstm_layer_forward(&model.params.layer1, &inputs);
    let layer2_inputs = match &masks {
        Some(m) => &layer1.hidden * &m.after_layer1,
        None => layer1.hidden.clone(),
    };
    let layer2 = lstm_layer_forward(&model.params.layer2, &layer2_inputs);
    let last = layer2.hidden.index_axis(Axis(0), steps - 1);
    let features = match &masks {
        Some(m) => &last * &m.after_layer2,
        None => last.to_owned(),
    };

    let head = &model.params.head;
    let mut logits = Array2::<f64>::zeros((batch, CLASSES));
    general_mat_mul(1.0, &features, &head.weights.t(), 0.0, &mut logits);
    logits += &head.bias;
    let mut probabilities = logits.clone();
    for mut row in probabilities.rows_mut() {
        let p = softmax(row.as_slice().expect("contiguous"));
        row.iter_mut().zip(p).for_each(|(r, v)| *r = v);
    }

    Ok(ForwardTrace {
        inputs,
        layer1,
        layer2_inputs,
        layer2,
        features,
        masks,
        logits,
        probabilities,
    })
}

/// Forward pass over a single window. Returns `[P(non-fall), P(fall)]`.
pub fn forward(
    model: &LstmModel,
    window: &[[f64; CHANNELS]],
    dropout: Dropout<'_>,
) -> Result<([f64; CLASSES], ForwardTrace)> {
    let trace = forward_batch(model, &[window], dropout)?;
    Ok((trace.probabilities(0), trace))
}

/// Inference-mode class probabilities for one window.
///
/// Both batch evaluation and the streaming runtime go through this function.
pub fn predict(model: &LstmModel, window: &[[f64; CHANNELS]]) -> Result<[f64; CLASSES]> {
    forward(model, window, Dropout::Off).map(|(p, _)| p)
}

/// Inference over many windows in chunks; used for per-epoch monitoring.
pub fn predict_batch(model: &LstmModel, windows: &[&[[f64; CHANNELS]]]) -> Result<Vec<[f64; CLASSES]>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(64) {
        let trace = forward_batch(model, chunk, Dropout::Off)?;
        out.extend((0..chunk.len()).map(|b| trace.probabilities(b)));
    }
    Ok(out)
}
