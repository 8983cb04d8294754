use serde::{Deserialize, Serialize};

use super::{Label, LabeledRecording};
use crate::error::{Error, Result};
use crate::signal::{NormParams, CHANNELS};

pub const DEFAULT_WINDOW_LEN: usize = 50;
pub const DEFAULT_STRIDE: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowOrigin {
    pub recording: usize,
    pub start: usize,
}

/// A fixed-length slice of frames with the label of its source recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub values: Vec<[f64; CHANNELS]>,
    pub label: Label,
    pub origin: WindowOrigin,
}

impl Window {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn normalized(&self, params: &NormParams) -> Window {
        Window {
            values: self.values.iter().map(|f| params.normalize_frame(f)).collect(),
            ..self.clone()
        }
    }
}

/// Cuts a recording into windows starting at `0, stride, 2·stride, …`.
///
/// Recordings shorter than `window_len` yield no windows.
pub fn make_windows(
    recording: &LabeledRecording,
    window_len: usize,
    stride: usize,
) -> Result<Vec<Window>> {
    if window_len == 0 || stride == 0 {
        return Err(Error::InvalidSpec(format!(
            "window length and stride must be positive (got {window_len}, {stride})"
        )));
    }
    let len = recording.len();
    if len < window_len {
        return Ok(Vec::new());
    }
    let frames: Vec<[f64; CHANNELS]> = recording.series.frames().collect();
    Ok((0..=(len - window_len) / stride)
        .map(|k| {
            let start = k * stride;
            Window {
                values: frames[start..start + window_len].to_vec(),
                label: recording.label(),
                origin: WindowOrigin {
                    recording: recording.id,
                    start,
                },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Activity;
    use crate::signal::RawSeries;

    fn recording(len: usize, activity: Activity) -> LabeledRecording {
        let frames: Vec<[f64; CHANNELS]> =
            (0..len).map(|i| [i as f64; CHANNELS]).collect();
        LabeledRecording {
            id: 3,
            series: RawSeries::from_frames(&frames, 50.0).unwrap(),
            activity,
            subject_id: "S1".into(),
            session: 0,
        }
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&recording(200, Activity::Walking), 50, 25).unwrap().len(), 7);
        for stride in [1, 7, 50, 100] {
            assert_eq!(make_windows(&recording(50, Activity::Walking), 50, stride).unwrap().len(), 1);
        }
        assert!(make_windows(&recording(49, Activity::Walking), 50, 25).unwrap().is_empty());
    }

    #[test]
    fn windows_inherit_label_and_origin() {
        let ws = make_windows(&recording(120, Activity::FallLeft), 50, 25).unwrap();
        assert_eq!(ws.len(), 3);
        for (k, w) in ws.iter().enumerate() {
            assert_eq!(w.label, Label::Fall);
            assert_eq!(w.origin, WindowOrigin { recording: 3, start: 25 * k });
            assert_eq!(w.values[0][0], (25 * k) as f64);
            assert_eq!(w.len(), 50);
        }
    }

    #[test]
    fn zero_stride_is_rejected() {
        assert!(make_windows(&recording(60, Activity::Lying), 50, 0).is_err());
    }
}
