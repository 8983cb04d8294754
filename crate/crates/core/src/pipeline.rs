//! Recordings to normalized train/test windows.

use std::collections::BTreeSet;

use crate::data::{
    generate_synthetic, make_windows, stratified_split, DatasetSplit, LabeledRecording, SynthConfig, Window,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, ClassReport, RocPoint};
use crate::network::{predict, LstmModel};
use crate::signal::{fit_normalizer, NormMode, NormParams, PreprocessConfig, RawSeries};

/// Test fraction mirroring a 1,898-window test set out of 10,770.
pub const DEFAULT_TEST_FRACTION: f64 = 0.176;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub norm_mode: NormMode,
    pub window_len: usize,
    pub stride: usize,
    pub test_fraction: f64,
    pub split_seed: u64,
    /// Use these statistics instead of fitting on the training side.
    pub fixed_norm: Option<NormParams>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            norm_mode: NormMode::ZScore,
            window_len: crate::data::DEFAULT_WINDOW_LEN,
            stride: crate::data::DEFAULT_STRIDE,
            test_fraction: DEFAULT_TEST_FRACTION,
            split_seed: 42,
            fixed_norm: None,
        }
    }
}

/// Normalized windows ready for training, plus the statistics used.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: DatasetSplit,
    pub norm: NormParams,
    pub preprocess: PreprocessConfig,
}

/// Filters every recording and cuts it into labeled windows.
pub fn preprocess_and_window(
    recordings: &[LabeledRecording],
    preprocess: &PreprocessConfig,
    window_len: usize,
    stride: usize,
) -> Result<(Vec<LabeledRecording>, Vec<Window>)> {
    let mut filtered = Vec::with_capacity(recordings.len());
    let mut windows = Vec::new();
    for rec in recordings {
        if rec.series.sample_rate_hz() != preprocess.sample_rate_hz {
            return Err(Error::InvalidInput(format!(
                "recording {} sampled at {} Hz, pipeline expects {} Hz",
                rec.id,
                rec.series.sample_rate_hz(),
                preprocess.sample_rate_hz
            )));
        }
        let rec = LabeledRecording {
            series: preprocess.apply(&rec.series)?,
            ..rec.clone()
        };
        windows.extend(make_windows(&rec, window_len, stride)?);
        filtered.push(rec);
    }
    Ok((filtered, windows))
}

/// Preprocess, window, split by recording, then fit normalization on the
/// training recordings only and apply it to both sides.
pub fn prepare(recordings: &[LabeledRecording], config: &PipelineConfig) -> Result<Prepared> {
    let (filtered, windows) =
        preprocess_and_window(recordings, &config.preprocess, config.window_len, config.stride)?;
    if windows.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no recording is at least {} samples long",
            config.window_len
        )));
    }
    let split = stratified_split(windows, config.test_fraction, config.split_seed)?;
    let train_ids: BTreeSet<usize> = split.train_recordings();
    let train_series: Vec<RawSeries> = filtered
        .iter()
        .filter(|r| train_ids.contains(&r.id))
        .map(|r| r.series.clone())
        .collect();
    let norm = match &config.fixed_norm {
        Some(n) => n.clone(),
        None => fit_normalizer(&train_series, config.norm_mode)?,
    };
    let split = DatasetSplit {
        train: split.train.iter().map(|w| w.normalized(&norm)).collect(),
        test: split.test.iter().map(|w| w.normalized(&norm)).collect(),
        seed: split.seed,
    };
    Ok(Prepared {
        split,
        norm,
        preprocess: config.preprocess.clone(),
    })
}

/// Synthetic generation followed by [`prepare`].
pub fn prepare_synthetic(synth: &SynthConfig, config: &PipelineConfig) -> Result<Prepared> {
    if synth.window_len != config.window_len || synth.stride != config.stride {
        return Err(Error::InvalidSpec(
            "synthetic and pipeline window settings differ".into(),
        ));
    }
    prepare(&generate_synthetic(synth), config)
}

/// P(fall) for each window, one inference-mode forward pass per window.
pub fn score_windows(model: &LstmModel, windows: &[Window]) -> Result<Vec<f64>> {
    windows.iter().map(|w| predict(model, &w.values).map(|p| p[1])).collect()
}

/// Report and ROC curve of `model` on `windows` at a decision threshold.
pub fn evaluate_windows(
    model: &LstmModel,
    windows: &[Window],
    threshold: f64,
) -> Result<(ClassReport, Vec<RocPoint>)> {
    let labels: Vec<_> = windows.iter().map(|w| w.label).collect();
    evaluate(&labels, &score_windows(model, windows)?, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ActivityCounts, Label};

    #[test]
    fn full_synthetic_split_test_size() {
        let synth = SynthConfig::default();
        let prepared = prepare_synthetic(&synth, &PipelineConfig::default()).unwrap();
        let split = &prepared.split;
        assert_eq!(split.train.len() + split.test.len(), 10_770);
        let n_test = split.test.len() as f64;
        assert!((n_test - 1898.0).abs() / 1898.0 <= 0.02, "{n_test}");

        let fall_share = |ws: &[Window]| {
            ws.iter().filter(|w| w.label == Label::Fall).count() as f64 / ws.len() as f64
        };
        let all: Vec<Window> = split.train.iter().chain(&split.test).cloned().collect();
        assert!((fall_share(&split.test) - fall_share(&all)).abs() <= 0.02);
        assert!(split.train_recordings().is_disjoint(&split.test_recordings()));
    }

    #[test]
    fn train_side_is_normalized() {
        let synth = SynthConfig {
            counts: ActivityCounts::default().scaled(0.05),
            ..SynthConfig::default()
        };
        let prepared = prepare_synthetic(&synth, &PipelineConfig::default()).unwrap();
        // Windows overlap, so window statistics are close to but not exactly
        // the per-recording fit.
        for c in 0..6 {
            let vals: Vec<f64> = prepared.split.train.iter().flat_map(|w| w.values.iter().map(move |f| f[c])).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 0.2, "channel {c} mean {mean}");
        }
    }

    #[test]
    fn sample_rate_mismatch_is_rejected() {
        let synth = SynthConfig {
            counts: ActivityCounts::default().scaled(0.01),
            sample_rate_hz: 100.0,
            ..SynthConfig::default()
        };
        assert!(prepare_synthetic(&synth, &PipelineConfig::default()).is_err());
    }
}
