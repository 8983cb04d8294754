//! Stacked LSTM classifier: two recurrent layers with dropout and a dense
//! softmax head over {non-fall, fall}.
//!
//! Gate blocks are stored stacked in the order input, forget, candidate,
//! output; every weight matrix is `4·hidden × fan_in`.

mod backward;
mod cell;
mod forward;

use ndarray::{Array1, Array2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::{NormParams, PreprocessConfig, CHANNELS};

pub use backward::{backward, backward_scaled};
pub use cell::{lstm_cell_step, sigmoid};
pub use forward::{
    cross_entropy_loss, dropout_mask, forward, forward_batch, predict, predict_batch, softmax,
    Dropout, DropoutMasks, ForwardTrace, LayerTrace,
};

pub const GATES: usize = 4;
pub const CLASSES: usize = 2;

/// Shape of the network and its input windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub window: usize,
    pub features: usize,
    pub units: [usize; 2],
    pub classes: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            window: 50,
            features: CHANNELS,
            units: [64, 32],
            classes: CLASSES,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.features != CHANNELS {
            return Err(Error::Dimension(format!(
                "features must be {CHANNELS}, got {}",
                self.features
            )));
        }
        if self.classes != CLASSES {
            return Err(Error::Dimension(format!(
                "classes must be {CLASSES}, got {}",
                self.classes
            )));
        }
        if self.window == 0 || self.units.contains(&0) {
            return Err(Error::Dimension("window and unit counts must be positive".into()));
        }
        Ok(())
    }

    /// Multiply-accumulates of one dense forward pass over a window.
    pub fn dense_macs(&self) -> u64 {
        let [h1, h2] = self.units.map(|u| u as u64);
        let t = self.window as u64;
        let f = self.features as u64;
        t * GATES as u64 * (h1 * (f + h1) + h2 * (h1 + h2)) + self.classes as u64 * h2
    }
}

/// Weights of one LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    /// `4·hidden × input`
    pub input_weights: Array2<f64>,
    /// `4·hidden × hidden`
    pub recurrent_weights: Array2<f64>,
    /// `4·hidden`
    pub bias: Array1<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input_weights: Array2::zeros((GATES * hidden, input)),
            recurrent_weights: Array2::zeros((GATES * hidden, hidden)),
            bias: Array1::zeros(GATES * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.recurrent_weights.ncols()
    }

    pub fn input(&self) -> usize {
        self.input_weights.ncols()
    }

    fn check(&self, name: &str, input: usize, hidden: usize) -> Result<()> {
        let ok = self.input_weights.dim() == (GATES * hidden, input)
            && self.recurrent_weights.dim() == (GATES * hidden, hidden)
            && self.bias.len() == GATES * hidden;
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{name}: expected {input}→{hidden} weights, found W {:?}, U {:?}, b {}",
                self.input_weights.dim(),
                self.recurrent_weights.dim(),
                self.bias.len()
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `classes × input`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Identifies one parameter tensor of a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TensorId {
    Layer1Input,
    Layer1Recurrent,
    Layer1Bias,
    Layer2Input,
    Layer2Recurrent,
    Layer2Bias,
    HeadWeights,
    HeadBias,
}

impl TensorId {
    pub const ALL: [TensorId; 8] = [
        TensorId::Layer1Input,
        TensorId::Layer1Recurrent,
        TensorId::Layer1Bias,
        TensorId::Layer2Input,
        TensorId::Layer2Recurrent,
        TensorId::Layer2Bias,
        TensorId::HeadWeights,
        TensorId::HeadBias,
    ];

    /// Weight matrices subject to pruning; biases are excluded.
    pub const PRUNABLE: [TensorId; 5] = [
        TensorId::Layer1Input,
        TensorId::Layer1Recurrent,
        TensorId::Layer2Input,
        TensorId::Layer2Recurrent,
        TensorId::HeadWeights,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TensorId::Layer1Input => "layer1.input_weights",
            TensorId::Layer1Recurrent => "layer1.recurrent_weights",
            TensorId::Layer1Bias => "layer1.bias",
            TensorId::Layer2Input => "layer2.input_weights",
            TensorId::Layer2Recurrent => "layer2.recurrent_weights",
            TensorId::Layer2Bias => "layer2.bias",
            TensorId::HeadWeights => "head.weights",
            TensorId::HeadBias => "head.bias",
        }
    }
}

/// Every trainable tensor of the network. Also used for gradients and
/// optimizer moments, which share the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub layer1: LstmLayerParams,
    pub layer2: LstmLayerParams,
    pub head: DenseParams,
}

impl ParamSet {
    pub fn zeros(arch: &Architecture) -> Self {
        let [h1, h2] = arch.units;
        Self {
            layer1: LstmLayerParams::zeros(arch.features, h1),
            layer2: LstmLayerParams::zeros(h1, h2),
            head: DenseParams {
                weights: Array2::zeros((arch.classes, h2)),
                bias: Array1::zeros(arch.classes),
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn fill(&mut self, value: f64) {
        for id in TensorId::ALL {
            self.tensor_mut(id).fill(value);
        }
    }

    pub fn tensor(&self, id: TensorId) -> &[f64] {
        let slice = match id {
            TensorId::Layer1Input => self.layer1.input_weights.as_slice(),
            TensorId::Layer1Recurrent => self.layer1.recurrent_weights.as_slice(),
            TensorId::Layer1Bias => self.layer1.bias.as_slice(),
            TensorId::Layer2Input => self.layer2.input_weights.as_slice(),
            TensorId::Layer2Recurrent => self.layer2.recurrent_weights.as_slice(),
            TensorId::Layer2Bias => self.layer2.bias.as_slice(),
            TensorId::HeadWeights => self.head.weights.as_slice(),
            TensorId::HeadBias => self.head.bias.as_slice(),
        };
        slice.expect("parameters are stored in standard layout")
    }

    pub fn tensor_mut(&mut self, id: TensorId) -> &mut [f64] {
        let slice = match id {
            TensorId::Layer1Input => self.layer1.input_weights.as_slice_mut(),
            TensorId::Layer1Recurrent => self.layer1.recurrent_weights.as_slice_mut(),
            TensorId::Layer1Bias => self.layer1.bias.as_slice_mut(),
            TensorId::Layer2Input => self.layer2.input_weights.as_slice_mut(),
            TensorId::Layer2Recurrent => self.layer2.recurrent_weights.as_slice_mut(),
            TensorId::Layer2Bias => self.layer2.bias.as_slice_mut(),
            TensorId::HeadWeights => self.head.weights.as_slice_mut(),
            TensorId::HeadBias => self.head.bias.as_slice_mut(),
        };
        slice.expect("parameters are stored in standard layout")
    }

    pub fn len(&self) -> usize {
        TensorId::ALL.iter().map(|&id| self.tensor(id).len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += scale · other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ParamSet, scale: f64) {
        for id in TensorId::ALL {
            for (a, b) in self.tensor_mut(id).iter_mut().zip(other.tensor(id)) {
                *a += scale * b;
            }
        }
    }

    pub fn same_shape(&self, other: &ParamSet) -> bool {
        TensorId::ALL
            .iter()
            .all(|&id| self.tensor(id).len() == other.tensor(id).len())
            && self.layer1.input_weights.dim() == other.layer1.input_weights.dim()
            && self.layer2.input_weights.dim() == other.layer2.input_weights.dim()
            && self.head.weights.dim() == other.head.weights.dim()
    }

    /// Checks the dimension chain `features → units[0] → units[1] → classes`.
    pub fn check(&self, arch: &Architecture) -> Result<()> {
        let [h1, h2] = arch.units;
        self.layer1.check("layer1", arch.features, h1)?;
        self.layer2.check("layer2", h1, h2)?;
        if self.head.weights.dim() != (arch.classes, h2) || self.head.bias.len() != arch.classes {
            return Err(Error::Dimension(format!(
                "head: expected {h2}→{} weights, found {:?} and bias {}",
                arch.classes,
                self.head.weights.dim(),
                self.head.bias.len()
            )));
        }
        Ok(())
    }
}

/// A complete classifier: architecture, parameters, dropout rate and the
/// preprocessing it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub arch: Architecture,
    pub params: ParamSet,
    pub dropout_rate: f64,
    pub norm_params: NormParams,
    pub preprocess: PreprocessConfig,
}

impl LstmModel {
    /// Glorot-uniform weights (exact zeros excluded), zero biases except a
    /// forget-gate bias of 1.
    pub fn new(arch: Architecture, dropout_rate: f64, seed: u64) -> Result<Self> {
        arch.validate()?;
        check_dropout(dropout_rate)?;
        let mut params = ParamSet::zeros(&arch);
        let mut rng = rng::stream(seed, 0x1417, 0);
        let mut glorot = |m: &mut Array2<f64>, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in m.iter_mut() {
                *w = loop {
                    let v = rng.random_range(-limit..limit);
                    if v != 0.0 {
                        break v;
                    }
                };
            }
        };
        for (layer, input) in [
            (&mut params.layer1, arch.features),
            (&mut params.layer2, arch.units[0]),
        ] {
            let h = layer.hidden();
            glorot(&mut layer.input_weights, input, h);
            glorot(&mut layer.recurrent_weights, h, h);
            layer.bias.slice_mut(ndarray::s![h..2 * h]).fill(1.0);
        }
        glorot(&mut params.head.weights, arch.units[1], arch.classes);
        Ok(Self {
            arch,
            params,
            dropout_rate,
            norm_params: NormParams::identity(),
            preprocess: PreprocessConfig::default(),
        })
    }

    pub fn check(&self) -> Result<()> {
        self.arch.validate()?;
        check_dropout(self.dropout_rate)?;
        self.params.check(&self.arch)
    }
}

pub(crate) fn check_dropout(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("dropout rate must lie in [0, 1), got {rate}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_architecture_chain() {
        let m = LstmModel::new(Architecture::default(), 0.2, 1).unwrap();
        assert_eq!(m.params.layer1.input_weights.dim(), (256, 6));
        assert_eq!(m.params.layer1.recurrent_weights.dim(), (256, 64));
        assert_eq!(m.params.layer2.input_weights.dim(), (128, 64));
        assert_eq!(m.params.layer2.recurrent_weights.dim(), (128, 32));
        assert_eq!(m.params.head.weights.dim(), (2, 32));
        m.check().unwrap();
    }

    #[test]
    fn init_is_seeded_and_has_no_exact_zero_weights() {
        let a = LstmModel::new(Architecture::default(), 0.2, 9).unwrap();
        let b = LstmModel::new(Architecture::default(), 0.2, 9).unwrap();
        assert_eq!(a, b);
        for id in TensorId::PRUNABLE {
            assert!(a.params.tensor(id).iter().all(|w| *w != 0.0));
        }
        let h = 64;
        let bias = &a.params.layer1.bias;
        assert!(bias.iter().take(h).all(|b| *b == 0.0));
        assert!(bias.iter().skip(h).take(h).all(|b| *b == 1.0));
    }

    #[test]
    fn dropout_rate_must_be_below_one() {
        assert!(LstmModel::new(Architecture::default(), 1.0, 0).is_err());
    }

    #[test]
    fn dense_mac_count() {
        let arch = Architecture::default();
        assert_eq!(arch.dense_macs(), 50 * 4 * (64 * 70 + 32 * 96) + 64);
    }
}
