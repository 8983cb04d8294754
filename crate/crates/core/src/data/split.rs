use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use super::{Label, Window};
use crate::error::{Error, Result};
use crate::rng;

/// Train/test partition of windows, split by source recording.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Window>,
    pub test: Vec<Window>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn train_recordings(&self) -> BTreeSet<usize> {
        self.train.iter().map(|w| w.origin.recording).collect()
    }

    pub fn test_recordings(&self) -> BTreeSet<usize> {
        self.test.iter().map(|w| w.origin.recording).collect()
    }
}

/// Splits windows so that every recording lands wholly on one side and each
/// class contributes `round(test_fraction · recordings)` recordings to test.
pub fn stratified_split(windows: Vec<Window>, test_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut by_class: BTreeMap<Label, BTreeSet<usize>> = BTreeMap::new();
    for w in &windows {
        by_class.entry(w.label).or_default().insert(w.origin.recording);
    }
    let mut test_ids = BTreeSet::new();
    for label in [Label::NonFall, Label::Fall] {
        let ids: Vec<usize> = by_class
            .get(&label)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        if ids.len() < 2 {
            return Err(Error::Stratification(format!(
                "class {label:?} has {} recording(s), need at least 2",
                ids.len()
            )));
        }
        let mut ids = ids;
        ids.shuffle(&mut rng::stream(seed, 0x5b17, label.index() as u64));
        let n_test = ((ids.len() as f64 * test_fraction).round() as usize).clamp(1, ids.len() - 1);
        test_ids.extend(ids.into_iter().take(n_test));
    }
    let (test, train) = windows
        .into_iter()
        .partition(|w| test_ids.contains(&w.origin.recording));
    Ok(DatasetSplit { train, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::WindowOrigin;

    fn windows(recordings: usize, per: usize) -> Vec<Window> {
        (0..recordings)
            .flat_map(|r| {
                (0..per).map(move |k| Window {
                    values: vec![[0.0; 6]; 2],
                    label: if r % 2 == 0 { Label::NonFall } else { Label::Fall },
                    origin: WindowOrigin {
                        recording: r,
                        start: k,
                    },
                })
            })
            .collect()
    }

    #[test]
    fn hundred_recordings_split_evenly() {
        let split = stratified_split(windows(100, 3), 0.2, 7).unwrap();
        let test = split.test_recordings();
        assert_eq!(test.len(), 20);
        assert_eq!(test.iter().filter(|r| *r % 2 == 1).count(), 10);
        assert_eq!(split.test.len(), 60);
        assert!(split.train_recordings().is_disjoint(&test));
        assert_eq!(split.train.len() + split.test.len(), 300);
    }

    #[test]
    fn same_seed_same_split() {
        let a = stratified_split(windows(40, 2), 0.3, 1).unwrap();
        let b = stratified_split(windows(40, 2), 0.3, 1).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(windows(40, 2), 0.3, 2).unwrap();
        assert_ne!(a.test_recordings(), c.test_recordings());
    }

    #[test]
    fn needs_two_recordings_per_class() {
        let mut ws = windows(10, 1);
        ws.retain(|w| w.label == Label::NonFall || w.origin.recording == 1);
        assert!(matches!(stratified_split(ws, 0.2, 0), Err(Error::Stratification(_))));
    }

    #[test]
    fn fraction_must_be_open_interval() {
        assert!(stratified_split(windows(10, 1), 0.0, 0).is_err());
        assert!(stratified_split(windows(10, 1), 1.0, 0).is_err());
    }
}
