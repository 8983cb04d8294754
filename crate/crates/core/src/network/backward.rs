//! Backpropagation through time for the stacked LSTM.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Array3, Axis};

use super::{ForwardTrace, LayerTrace, LstmLayerParams, LstmModel, ParamSet, CLASSES, GATES};
use crate::data::Label;
use crate::error::{Error, Result};

/// Gradient of the batch-mean cross-entropy with respect to every parameter.
pub fn backward(model: &LstmModel, trace: &ForwardTrace, labels: &[Label]) -> Result<ParamSet> {
    backward_scaled(model, trace, labels, 1.0)
}

/// Gradient of `scale ×` the batch-mean cross-entropy.
///
/// The softmax/cross-entropy pair contributes `p − y` at the logits; the
/// probability clamp used when reporting the loss is not differentiated.
pub fn backward_scaled(
    model: &LstmModel,
    trace: &ForwardTrace,
    labels: &[Label],
    scale: f64,
) -> Result<ParamSet> {
    let batch = trace.batch();
    let steps = model.arch.window;
    let [h1, h2] = model.arch.units;
    if labels.len() != batch {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if trace.layer1.gates.dim() != (steps, batch, GATES * h1)
        || trace.layer2.gates.dim() != (steps, batch, GATES * h2)
        || trace.features.dim() != (batch, h2)
    {
        return Err(Error::Shape("trace was not produced by this model".into()));
    }

    let mut grads = model.params.zeros_like();

    // Head.
    let mut d_logits = trace.probabilities.clone();
    for (b, label) in labels.iter().enumerate() {
        d_logits[[b, label.index()]] -= 1.0;
    }
    d_logits *= scale / batch as f64;
    general_mat_mul(1.0, &d_logits.t(), &trace.features, 0.0, &mut grads.head.weights);
    grads.head.bias = d_logits.sum_axis(Axis(0));
    let mut d_features = Array2::<f64>::zeros((batch, h2));
    general_mat_mul(1.0, &d_logits, &model.params.head.weights, 0.0, &mut d_features);
    if let Some(m) = &trace.masks {
        d_features *= &m.after_layer2;
    }
    debug_assert_eq!(d_logits.ncols(), CLASSES);

    // Layer 2 receives gradient only at its final step.
    let mut d_h2 = Array3::<f64>::zeros((steps, batch, h2));
    d_h2.index_axis_mut(Axis(0), steps - 1).assign(&d_features);
    let d_layer2_inputs = layer_backward(
        &model.params.layer2,
        &trace.layer2_inputs,
        &trace.layer2,
        &d_h2,
        &mut grads.layer2,
        true,
    )
    .expect("input gradient requested");

    let mut d_h1 = d_layer2_inputs;
    if let Some(m) = &trace.masks {
        d_h1 *= &m.after_layer1;
    }
    layer_backward(
        &model.params.layer1,
        &trace.inputs,
        &trace.layer1,
        &d_h1,
        &mut grads.layer1,
        false,
    );
    Ok(grads)
}

/// Backpropagates `d_hidden` (gradient arriving at every step's output)
/// through one layer, accumulating into `grads`. Returns the gradient with
/// respect to the layer inputs when `want_inputs` is set.
fn layer_backward(
    params: &LstmLayerParams,
    inputs: &Array3<f64>,
    trace: &LayerTrace,
    d_hidden: &Array3<f64>,
    grads: &mut LstmLayerParams,
    want_inputs: bool,
) -> Option<Array3<f64>> {
    let (steps, batch, input) = inputs.dim();
    let h = params.hidden();
    let width = GATES * h;

    let mut d_gates = Array3::<f64>::zeros((steps, batch, width));
    let mut dh_next = Array2::<f64>::zeros((batch, h));
    let mut dc_next = vec![0.0; batch * h];

    let gates = trace.gates.as_slice().expect("contiguous");
    let cell = trace.cell.as_slice().expect("contiguous");
    let d_hidden = d_hidden.as_slice().expect("contiguous");

    for t in (0..steps).rev() {
        {
            let dz = d_gates
                .index_axis_mut(Axis(0), t)
                .into_slice()
                .expect("contiguous");
            let dh_rec = dh_next.as_slice().expect("contiguous");
            for b in 0..batch {
                let row = (t * batch + b) * width;
                let g_row = &gates[row..row + width];
                let dz_row = &mut dz[b * width..(b + 1) * width];
                for j in 0..h {
                    let idx = (t * batch + b) * h + j;
                    let (i, f, g, o) = (g_row[j], g_row[h + j], g_row[2 * h + j], g_row[3 * h + j]);
                    let c = cell[idx];
                    let c_prev = if t > 0 { cell[idx - batch * h] } else { 0.0 };
                    let tc = c.tanh();
                    let dh = d_hidden[idx] + dh_rec[b * h + j];
                    let dc = dc_next[b * h + j] + dh * o * (1.0 - tc * tc);
                    dz_row[j] = dc * g * i * (1.0 - i);
                    dz_row[h + j] = dc * c_prev * f * (1.0 - f);
                    dz_row[2 * h + j] = dc * i * (1.0 - g * g);
                    dz_row[3 * h + j] = dh * tc * o * (1.0 - o);
                    dc_next[b * h + j] = dc * f;
                }
            }
        }
        if t > 0 {
            general_mat_mul(
                1.0,
                &d_gates.index_axis(Axis(0), t),
                &params.recurrent_weights,
                0.0,
                &mut dh_next,
            );
        }
    }

    let dz_flat = d_gates
        .view()
        .into_shape_with_order((steps * batch, width))
        .expect("contiguous");
    let x_flat = inputs
        .view()
        .into_shape_with_order((steps * batch, input))
        .expect("contiguous");
    general_mat_mul(1.0, &dz_flat.t(), &x_flat, 1.0, &mut grads.input_weights);
    if steps > 1 {
        let dz_later = d_gates
            .slice(s![1.., .., ..])
            .into_shape_with_order(((steps - 1) * batch, width))
            .expect("contiguous");
        let h_earlier = trace
            .hidden
            .slice(s![..steps - 1, .., ..])
            .into_shape_with_order(((steps - 1) * batch, h))
            .expect("contiguous");
        general_mat_mul(1.0, &dz_later.t(), &h_earlier, 1.0, &mut grads.recurrent_weights);
    }
    grads.bias += &dz_flat.sum_axis(Axis(0));

    want_inputs.then(|| {
        let mut dx = Array2::<f64>::zeros((steps * batch, input));
        general_mat_mul(1.0, &dz_flat, &params.input_weights, 0.0, &mut dx);
        dx.into_shape_with_order((steps, batch, input))
            .expect("contiguous")
    })
}
