//! Magnitude pruning, mask-preserving fine-tuning and sparsity accounting.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::network::{Architecture, LstmModel, ParamSet, TensorId};
use crate::optim::{train_with_hook, StepHook, TrainConfig, TrainHistory};
use crate::pipeline::evaluate_windows;

pub const MAX_SPARSITY: f64 = 0.9;

/// How the pruning budget is distributed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneScope {
    /// One ranking over every prunable weight.
    #[default]
    Global,
    /// The same fraction removed from each tensor separately.
    PerTensor,
}

/// Keep-flags for every prunable tensor, in [`TensorId::PRUNABLE`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneMask {
    pub target_sparsity: f64,
    keep: Vec<Vec<bool>>,
}

impl PruneMask {
    /// Mask that keeps everything.
    pub fn dense(params: &ParamSet) -> Self {
        Self {
            target_sparsity: 0.0,
            keep: TensorId::PRUNABLE
                .iter()
                .map(|&id| vec![true; params.tensor(id).len()])
                .collect(),
        }
    }

    /// Builds a mask from explicit keep-flags, checked against `params`.
    pub fn from_keep(params: &ParamSet, target_sparsity: f64, keep: Vec<Vec<bool>>) -> Result<Self> {
        check_target(target_sparsity)?;
        let mask = Self {
            target_sparsity,
            keep,
        };
        mask.check(params)?;
        Ok(mask)
    }

    pub fn keep(&self, id: TensorId) -> Option<&[bool]> {
        TensorId::PRUNABLE
            .iter()
            .position(|&p| p == id)
            .map(|i| self.keep[i].as_slice())
    }

    pub fn total(&self) -> usize {
        self.keep.iter().map(Vec::len).sum()
    }

    pub fn pruned(&self) -> usize {
        self.keep.iter().flatten().filter(|&&k| !k).count()
    }

    pub fn sparsity(&self) -> f64 {
        self.pruned() as f64 / self.total() as f64
    }

    pub fn check(&self, params: &ParamSet) -> Result<()> {
        if self.keep.len() != TensorId::PRUNABLE.len() {
            return Err(Error::Dimension(format!(
                "mask has {} tensors, expected {}",
                self.keep.len(),
                TensorId::PRUNABLE.len()
            )));
        }
        for (&id, keep) in TensorId::PRUNABLE.iter().zip(&self.keep) {
            if keep.len() != params.tensor(id).len() {
                return Err(Error::Dimension(format!(
                    "mask for {} has {} entries, tensor has {}",
                    id.name(),
                    keep.len(),
                    params.tensor(id).len()
                )));
            }
        }
        Ok(())
    }

    /// Zeroes every masked position of `params`.
    pub fn apply(&self, params: &mut ParamSet) {
        for (&id, keep) in TensorId::PRUNABLE.iter().zip(&self.keep) {
            for (v, &k) in params.tensor_mut(id).iter_mut().zip(keep) {
                if !k {
                    *v = 0.0;
                }
            }
        }
    }

    /// True when every masked position of `params` holds exactly 0.
    pub fn holds(&self, params: &ParamSet) -> bool {
        TensorId::PRUNABLE.iter().zip(&self.keep).all(|(&id, keep)| {
            params
                .tensor(id)
                .iter()
                .zip(keep)
                .all(|(&v, &k)| k || v == 0.0)
        })
    }

    /// Iterates `(tensor, keep-flags)` pairs.
    pub fn tensors(&self) -> impl Iterator<Item = (TensorId, &[bool])> {
        TensorId::PRUNABLE.iter().copied().zip(self.keep.iter().map(Vec::as_slice))
    }
}

/// A pruned model: masked weights are zero and stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedModel {
    pub model: LstmModel,
    pub mask: PruneMask,
    /// SHA-256 of the parameters the mask was computed from.
    pub provenance: String,
}

impl CompressedModel {
    pub fn check(&self) -> Result<()> {
        self.model.check()?;
        self.mask.check(&self.model.params)?;
        if !self.mask.holds(&self.model.params) {
            return Err(Error::Corrupt("a masked weight is non-zero".into()));
        }
        Ok(())
    }
}

fn check_target(target: f64) -> Result<()> {
    if (0.0..=MAX_SPARSITY).contains(&target) {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!(
            "target sparsity must lie in [0, {MAX_SPARSITY}], got {target}"
        )))
    }
}

/// Number of weights removed for a target over `n` weights: ⌈target·n⌉,
/// with a little slack so that e.g. 0.3·10 is not rounded up to 4.
pub fn prune_count(target: f64, n: usize) -> usize {
    ((target * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// SHA-256 over the architecture and every parameter in little-endian order.
pub fn params_hash(model: &LstmModel) -> String {
    let mut h = Sha256::new();
    let a = &model.arch;
    for d in [a.window, a.features, a.units[0], a.units[1], a.classes] {
        h.update((d as u64).to_le_bytes());
    }
    for id in TensorId::ALL {
        for v in model.params.tensor(id) {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Zeroes the smallest-magnitude weights across all prunable tensors.
pub fn magnitude_prune(model: &LstmModel, target_sparsity: f64) -> Result<CompressedModel> {
    magnitude_prune_scoped(model, target_sparsity, PruneScope::Global)
}

/// Magnitude pruning with a choice of global or per-tensor budget.
///
/// Ties in magnitude are broken by tensor order, then by index.
pub fn magnitude_prune_scoped(model: &LstmModel, target_sparsity: f64, scope: PruneScope) -> Result<CompressedModel> {
    check_target(target_sparsity)?;
    model.check()?;
    let params = &model.params;
    let mut keep: Vec<Vec<bool>> = TensorId::PRUNABLE
        .iter()
        .map(|&id| vec![true; params.tensor(id).len()])
        .collect();

    let mut drop_smallest = |entries: &mut Vec<(f64, usize, usize)>, count: usize| {
        entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for &(_, t, i) in entries.iter().take(count) {
            keep[t][i] = false;
        }
    };
    let entries_of = |t: usize| -> Vec<(f64, usize, usize)> {
        params
            .tensor(TensorId::PRUNABLE[t])
            .iter()
            .enumerate()
            .map(|(i, w)| (w.abs(), t, i))
            .collect()
    };
    match scope {
        PruneScope::Global => {
            let mut all: Vec<_> = (0..TensorId::PRUNABLE.len()).flat_map(entries_of).collect();
            let count = prune_count(target_sparsity, all.len());
            drop_smallest(&mut all, count);
        }
        PruneScope::PerTensor => {
            for t in 0..TensorId::PRUNABLE.len() {
                let mut entries = entries_of(t);
                let count = prune_count(target_sparsity, entries.len());
                drop_smallest(&mut entries, count);
            }
        }
    }

    let mask = PruneMask {
        target_sparsity,
        keep,
    };
    let mut pruned = model.clone();
    mask.apply(&mut pruned.params);
    Ok(CompressedModel {
        model: pruned,
        mask,
        provenance: params_hash(model),
    })
}

/// Zeroes gradients at masked positions before each update and re-asserts
/// the zeros afterwards.
pub struct MaskHook<'a>(pub &'a PruneMask);

impl StepHook for MaskHook<'_> {
    fn before_step(&self, grads: &mut ParamSet) {
        self.0.apply(grads);
    }

    fn after_step(&self, params: &mut ParamSet) {
        self.0.apply(params);
    }
}

/// Continues training a pruned model without reviving any masked weight.
pub fn finetune(
    compressed: &CompressedModel,
    split: &DatasetSplit,
    config: &TrainConfig,
) -> Result<(CompressedModel, TrainHistory)> {
    finetune_with_hook(compressed, split, config, &MaskHook(&compressed.mask))
}

/// [`finetune`] with a caller-supplied hook, which must keep the mask.
pub fn finetune_with_hook(
    compressed: &CompressedModel,
    split: &DatasetSplit,
    config: &TrainConfig,
    hook: &dyn StepHook,
) -> Result<(CompressedModel, TrainHistory)> {
    compressed.check()?;
    let (model, history) = train_with_hook(&compressed.model, split, config, hook)?;
    let out = CompressedModel {
        model,
        mask: compressed.mask.clone(),
        provenance: compressed.provenance.clone(),
    };
    out.check()?;
    Ok((out, history))
}

/// Fraction of prunable weights that are exactly zero.
pub fn sparsity(params: &ParamSet) -> f64 {
    let (zeros, total) = TensorId::PRUNABLE.iter().fold((0usize, 0usize), |(z, n), &id| {
        let t = params.tensor(id);
        (z + t.iter().filter(|&&v| v == 0.0).count(), n + t.len())
    });
    zeros as f64 / total as f64
}

/// Multiply-accumulates per window when zero weights are skipped.
pub fn sparse_macs(arch: &Architecture, params: &ParamSet) -> u64 {
    let nnz = |id: TensorId| params.tensor(id).iter().filter(|&&v| v != 0.0).count() as u64;
    let recurrent_part = [
        TensorId::Layer1Input,
        TensorId::Layer1Recurrent,
        TensorId::Layer2Input,
        TensorId::Layer2Recurrent,
    ]
    .into_iter()
    .map(nnz)
    .sum::<u64>();
    arch.window as u64 * recurrent_part + nnz(TensorId::HeadWeights)
}

/// One row of the sparsity sweep report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sparsity: f64,
    pub accuracy: f64,
    pub recall_fall: f64,
    pub specificity: f64,
    pub macs_fraction: f64,
}

pub const SWEEP_CSV_HEADER: &str = "sparsity,accuracy,recall_fall,specificity,macs_fraction";

/// Prunes `model` at each target, fine-tunes, and evaluates on `split.test`.
pub fn sweep(
    model: &LstmModel,
    split: &DatasetSplit,
    targets: &[f64],
    config: &TrainConfig,
) -> Result<Vec<(SweepRow, CompressedModel)>> {
    let dense = model.arch.dense_macs() as f64;
    targets
        .iter()
        .map(|&target| {
            let pruned = magnitude_prune(model, target)?;
            let (tuned, _) = finetune(&pruned, split, config)?;
            let (report, _) = evaluate_windows(&tuned.model, &split.test, 0.5)?;
            let row = SweepRow {
                sparsity: sparsity(&tuned.model.params),
                accuracy: report.accuracy,
                recall_fall: report.sensitivity,
                specificity: report.specificity,
                macs_fraction: sparse_macs(&tuned.model.arch, &tuned.model.params) as f64 / dense,
            };
            log::info!("sparsity {target}: {row:?}");
            Ok((row, tuned))
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.sparsity, r.accuracy, r.recall_fall, r.specificity, r.macs_fraction
        );
    }
    s
}
