use super::{LstmLayerParams, GATES};
use crate::error::{Error, Result};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One LSTM time step with a forget gate and no peepholes:
///
/// ```text
/// i = σ(Wᵢx + Uᵢh + bᵢ)   f = σ(W_f x + U_f h + b_f)
/// g = tanh(W_g x + U_g h + b_g)   o = σ(W_o x + U_o h + b_o)
/// c = f⊙c_prev + i⊙g      h = o⊙tanh(c)
/// ```
///
/// Returns `(h, c)`. This is the unbatched reference form; training uses the
/// batched kernels in `forward`, which are checked against it.
pub fn lstm_cell_step(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: &LstmLayerParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let hidden = params.hidden();
    if x.len() != params.input() || h_prev.len() != hidden || c_prev.len() != hidden {
        return Err(Error::Shape(format!(
            "cell expects x[{}], h[{hidden}], c[{hidden}]; got x[{}], h[{}], c[{}]",
            params.input(),
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let z: Vec<f64> = (0..GATES * hidden)
        .map(|r| {
            let wx: f64 = params.input_weights.row(r).iter().zip(x).map(|(w, v)| w * v).sum();
            let uh: f64 = params
                .recurrent_weights
                .row(r)
                .iter()
                .zip(h_prev)
                .map(|(u, v)| u * v)
                .sum();
            wx + uh + params.bias[r]
        })
        .collect();
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    for j in 0..hidden {
        let i = sigmoid(z[j]);
        let f = sigmoid(z[hidden + j]);
        let g = z[2 * hidden + j].tanh();
        let o = sigmoid(z[3 * hidden + j]);
        c[j] = f * c_prev[j] + i * g;
        h[j] = o * c[j].tanh();
    }
    Ok((h, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_cell_stays_zero() {
        let p = LstmLayerParams::zeros(3, 4);
        let (h, c) = lstm_cell_step(&[0.0; 3], &[0.0; 4], &[0.0; 4], &p).unwrap();
        assert_eq!(h, vec![0.0; 4]);
        assert_eq!(c, vec![0.0; 4]);
    }

    #[test]
    fn saturated_forget_gate_carries_the_cell() {
        let mut p = LstmLayerParams::zeros(1, 1);
        // gate order: input, forget, candidate, output
        p.bias[0] = 50.0;
        p.bias[1] = 50.0;
        let (h, c) = lstm_cell_step(&[0.0], &[0.0], &[0.3], &p).unwrap();
        // i≈1, f≈1, g=0, o=0.5: c = 0.3, h = 0.5·tanh(0.3)
        let want_h = 0.5 * 0.3f64.tanh();
        assert!((c[0] - 0.3).abs() < 1e-12);
        assert!((h[0] - want_h).abs() < 1e-12);
        assert!((h[0] - 0.1457).abs() < 1e-4);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = LstmLayerParams::zeros(3, 4);
        assert!(matches!(
            lstm_cell_step(&[0.0; 2], &[0.0; 4], &[0.0; 4], &p),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}
