//! Versioned JSON model files (`.fwm.json`).
//!
//! Floats are written in shortest round-trip form, so save → load → save
//! reproduces the file byte for byte.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::{Architecture, LstmModel, ParamSet, TensorId};
use crate::optim::TrainConfig;
use crate::pruning::PruneMask;
use crate::signal::{NormParams, PreprocessConfig};

pub const FORMAT_VERSION: u32 = 1;
pub const MODEL_EXTENSION: &str = ".fwm.json";

/// How a model was produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub seed: u64,
    /// SHA-256 of the training configuration as JSON.
    pub config_hash: String,
}

impl Fingerprint {
    pub fn of(config: &TrainConfig) -> Self {
        let json = serde_json::to_vec(config).expect("config serializes");
        Self {
            seed: config.seed,
            config_hash: hex::encode(Sha256::digest(json)),
        }
    }
}

/// A model together with its optional pruning mask and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: LstmModel,
    pub mask: Option<PruneMask>,
    /// Hash of the dense model a pruned model was derived from.
    pub provenance: Option<String>,
    pub fingerprint: Option<Fingerprint>,
}

impl ModelFile {
    pub fn new(model: LstmModel) -> Self {
        Self {
            model,
            mask: None,
            provenance: None,
            fingerprint: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        self.model.check()?;
        let params = &self.model.params;
        let matrix = |m: &Array2<f64>| m.rows().into_iter().map(|r| r.to_vec()).collect();
        let layer = |l: &crate::network::LstmLayerParams| LayerDoc {
            input_weights: matrix(&l.input_weights),
            recurrent_weights: matrix(&l.recurrent_weights),
            bias: l.bias.to_vec(),
        };
        let mask = self.mask.as_ref().map(|m| MaskDoc {
            target_sparsity: m.target_sparsity,
            keep: m
                .tensors()
                .map(|(id, keep)| {
                    let cols = row_len(params, id);
                    let rows = keep
                        .chunks(cols)
                        .map(|r| r.iter().map(|&k| u8::from(k)).collect())
                        .collect();
                    (id.name().to_string(), rows)
                })
                .collect(),
        });
        let doc = ModelDoc {
            format_version: FORMAT_VERSION,
            architecture: self.model.arch,
            dropout_rate: self.model.dropout_rate,
            preprocess: self.model.preprocess.clone(),
            norm_params: self.model.norm_params.clone(),
            layer1: layer(&params.layer1),
            layer2: layer(&params.layer2),
            head: HeadDoc {
                weights: matrix(&params.head.weights),
                bias: params.head.bias.to_vec(),
            },
            mask,
            provenance: self.provenance.clone(),
            fingerprint: self.fingerprint.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::Corrupt(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Corrupt(e.to_string()))?;
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Corrupt("missing format_version".into()))?;
        if found != u64::from(FORMAT_VERSION) {
            return Err(Error::Version {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                expected: FORMAT_VERSION,
            });
        }
        let doc: ModelDoc = serde_json::from_value(value).map_err(|e| Error::Corrupt(e.to_string()))?;
        doc.architecture.validate()?;
        let arch = doc.architecture;
        let [h1, h2] = arch.units;

        let layer = |name: &str, l: LayerDoc, input: usize, hidden: usize| -> Result<_> {
            let g = crate::network::GATES * hidden;
            Ok(crate::network::LstmLayerParams {
                input_weights: to_matrix(&format!("{name}.input_weights"), l.input_weights, g, input)?,
                recurrent_weights: to_matrix(&format!("{name}.recurrent_weights"), l.recurrent_weights, g, hidden)?,
                bias: to_vector(&format!("{name}.bias"), l.bias, g)?,
            })
        };
        let params = ParamSet {
            layer1: layer("layer1", doc.layer1, arch.features, h1)?,
            layer2: layer("layer2", doc.layer2, h1, h2)?,
            head: crate::network::DenseParams {
                weights: to_matrix("head.weights", doc.head.weights, arch.classes, h2)?,
                bias: to_vector("head.bias", doc.head.bias, arch.classes)?,
            },
        };
        params.check(&arch)?;
        if let Some(id) = TensorId::ALL
            .into_iter()
            .find(|&id| params.tensor(id).iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Corrupt(format!("{} holds a non-finite value", id.name())));
        }
        let model = LstmModel {
            arch,
            params,
            dropout_rate: doc.dropout_rate,
            norm_params: doc.norm_params,
            preprocess: doc.preprocess,
        };
        model.check()?;
        model.preprocess.validate()?;

        let mask = match doc.mask {
            None => None,
            Some(m) => {
                if m.keep.len() != TensorId::PRUNABLE.len() {
                    return Err(Error::Dimension(format!(
                        "mask lists {} tensors, expected {}",
                        m.keep.len(),
                        TensorId::PRUNABLE.len()
                    )));
                }
                let mut keep = Vec::new();
                for (&id, (name, rows)) in TensorId::PRUNABLE.iter().zip(m.keep) {
                    if name != id.name() {
                        return Err(Error::Corrupt(format!("mask tensor `{name}` where `{}` expected", id.name())));
                    }
                    let cols = row_len(&model.params, id);
                    if rows.iter().any(|r| r.len() != cols) {
                        return Err(Error::Dimension(format!("mask rows of {name} must have {cols} entries")));
                    }
                    let flat: Vec<bool> = rows.into_iter().flatten().map(|k| k != 0).collect();
                    keep.push(flat);
                }
                let mask = PruneMask::from_keep(&model.params, m.target_sparsity, keep)?;
                if !mask.holds(&model.params) {
                    return Err(Error::Corrupt("a masked weight is non-zero".into()));
                }
                Some(mask)
            }
        };
        Ok(Self {
            model,
            mask,
            provenance: doc.provenance,
            fingerprint: doc.fingerprint,
        })
    }
}

fn row_len(params: &ParamSet, id: TensorId) -> usize {
    match id {
        TensorId::Layer1Input => params.layer1.input_weights.ncols(),
        TensorId::Layer1Recurrent => params.layer1.recurrent_weights.ncols(),
        TensorId::Layer2Input => params.layer2.input_weights.ncols(),
        TensorId::Layer2Recurrent => params.layer2.recurrent_weights.ncols(),
        TensorId::HeadWeights => params.head.weights.ncols(),
        TensorId::Layer1Bias | TensorId::Layer2Bias | TensorId::HeadBias => 1,
    }
}

fn to_matrix(name: &str, rows: Vec<Vec<f64>>, nrows: usize, ncols: usize) -> Result<Array2<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        let found = rows.first().map_or(0, Vec::len);
        return Err(Error::Dimension(format!(
            "{name}: expected {nrows}×{ncols}, found {}×{found}",
            rows.len()
        )));
    }
    Ok(Array2::from_shape_vec((nrows, ncols), rows.into_iter().flatten().collect()).expect("sized"))
}

fn to_vector(name: &str, v: Vec<f64>, len: usize) -> Result<Array1<f64>> {
    if v.len() != len {
        return Err(Error::Dimension(format!("{name}: expected {len} entries, found {}", v.len())));
    }
    Ok(Array1::from(v))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format_version: u32,
    architecture: Architecture,
    dropout_rate: f64,
    preprocess: PreprocessConfig,
    norm_params: NormParams,
    layer1: LayerDoc,
    layer2: LayerDoc,
    head: HeadDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<MaskDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fingerprint: Option<Fingerprint>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    input_weights: Vec<Vec<f64>>,
    recurrent_weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeadDoc {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskDoc {
    target_sparsity: f64,
    /// `(tensor name, 0/1 rows)` in prunable-tensor order.
    keep: Vec<(String, Vec<Vec<u8>>)>,
}

pub fn save_model(file: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = file.to_json()?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelFile::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pruning::magnitude_prune;

    fn small() -> LstmModel {
        let arch = Architecture {
            window: 5,
            units: [4, 3],
            ..Architecture::default()
        };
        LstmModel::new(arch, 0.2, 8).unwrap()
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let c = magnitude_prune(&small(), 0.3).unwrap();
        let file = ModelFile {
            model: c.model,
            mask: Some(c.mask),
            provenance: Some(c.provenance),
            fingerprint: Some(Fingerprint::of(&TrainConfig::default())),
        };
        let a = file.to_json().unwrap();
        let loaded = ModelFile::from_json(&a).unwrap();
        assert_eq!(loaded, file);
        assert_eq!(loaded.to_json().unwrap(), a);
    }

    #[test]
    fn unknown_version_is_rejected() {
        let text = ModelFile::new(small()).to_json().unwrap();
        let bumped = text.replacen("\"format_version\": 1", "\"format_version\": 7", 1);
        assert!(matches!(
            ModelFile::from_json(&bumped),
            Err(Error::Version { found: 7, expected: 1 })
        ));
    }

    #[test]
    fn unit_metadata_mismatch_is_a_dimension_error() {
        let text = ModelFile::new(small()).to_json().unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["architecture"]["units"][1] = 2.into();
        let bad = serde_json::to_string(&v).unwrap();
        assert!(matches!(ModelFile::from_json(&bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn garbage_is_corrupt() {
        assert!(matches!(ModelFile::from_json("{not json"), Err(Error::Corrupt(_))));
        assert!(matches!(ModelFile::from_json("{}"), Err(Error::Corrupt(_))));
        let text = ModelFile::new(small()).to_json().unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v.as_object_mut().unwrap().remove("head");
        assert!(matches!(
            ModelFile::from_json(&serde_json::to_string(&v).unwrap()),
            Err(Error::Corrupt(_))
        ));
    }

    #[test]
    fn nonzero_masked_weight_is_corrupt() {
        let c = magnitude_prune(&small(), 0.5).unwrap();
        let mut file = ModelFile::new(c.model);
        file.mask = Some(c.mask.clone());
        let (id, keep) = c.mask.tensors().next().unwrap();
        let i = keep.iter().position(|&k| !k).unwrap();
        file.model.params.tensor_mut(id)[i] = 0.5;
        let text = file.to_json().unwrap();
        assert!(matches!(ModelFile::from_json(&text), Err(Error::Corrupt(_))));
    }
}
