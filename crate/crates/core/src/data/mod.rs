//! Dataset construction: CSV ingestion, synthetic ADL/fall recordings,
//! sliding-window segmentation and recording-level stratified splitting.

mod csv_io;
mod split;
mod synth;
mod window;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::signal::{RawSeries, CHANNELS};

pub use csv_io::{load_csv, read_csv, write_csv, CSV_HEADER};
pub use split::{stratified_split, DatasetSplit};
pub use synth::{synthesize_recording, generate_synthetic, ActivityCounts, SynthConfig, GRAVITY};
pub use window::{make_windows, Window, WindowOrigin, DEFAULT_STRIDE, DEFAULT_WINDOW_LEN};

/// Activity classes: six activities of daily living and four fall directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Activity {
    Walking,
    Sitting,
    Lying,
    Running,
    SuddenSit,
    SuddenStanding,
    FallForward,
    FallBackward,
    FallLeft,
    FallRight,
}

impl Activity {
    pub const ALL: [Activity; 10] = [
        Activity::Walking,
        Activity::Sitting,
        Activity::Lying,
        Activity::Running,
        Activity::SuddenSit,
        Activity::SuddenStanding,
        Activity::FallForward,
        Activity::FallBackward,
        Activity::FallLeft,
        Activity::FallRight,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Activity::Walking => "NF1",
            Activity::Sitting => "NF2",
            Activity::Lying => "NF3",
            Activity::Running => "NF4",
            Activity::SuddenSit => "NF5",
            Activity::SuddenStanding => "NF6",
            Activity::FallForward => "F1",
            Activity::FallBackward => "F2",
            Activity::FallLeft => "F3",
            Activity::FallRight => "F4",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_fall(self) -> bool {
        matches!(
            self,
            Activity::FallForward | Activity::FallBackward | Activity::FallLeft | Activity::FallRight
        )
    }

    pub fn label(self) -> Label {
        if self.is_fall() {
            Label::Fall
        } else {
            Label::NonFall
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Activity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Activity::ALL
            .into_iter()
            .find(|a| a.code() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown activity code `{s}`")))
    }
}

/// Binary class: 0 = non-fall, 1 = fall (the positive class).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    NonFall = 0,
    Fall = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::NonFall),
            1 => Some(Label::Fall),
            _ => None,
        }
    }
}

/// One contiguous recording of a single activity by one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecording {
    pub id: usize,
    pub series: RawSeries,
    pub activity: Activity,
    pub subject_id: String,
    pub session: u32,
}

impl LabeledRecording {
    pub fn label(&self) -> Label {
        self.activity.label()
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Peak acceleration magnitude in units of g.
    pub fn peak_acceleration_g(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let f = self.series.frame(i);
                (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt() / GRAVITY
            })
            .fold(0.0, f64::max)
    }
}

/// A single timestamped reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorFrame {
    pub t: f64,
    pub values: [f64; CHANNELS],
}
