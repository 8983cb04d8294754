//! Deterministic preprocessing of 6-channel inertial streams.
//!
//! Channels are ordered `ax, ay, az` (m/s²) then `gx, gy, gz` (deg/s). All
//! filters are causal except the median filter, whose centered window is
//! realized in streaming mode with a delay of `window_len / 2` samples.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of sensor channels (3-axis accelerometer + 3-axis gyroscope).
pub const CHANNELS: usize = 6;

/// Default sampling rate of the wearable node.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 50.0;

/// Six equal-length channels sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    channels: [Vec<f64>; CHANNELS],
    sample_rate_hz: f64,
}

impl RawSeries {
    pub fn new(channels: [Vec<f64>; CHANNELS], sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        let len = channels[0].len();
        if len == 0 {
            return Err(Error::InvalidInput("empty channel".into()));
        }
        if let Some(c) = channels.iter().position(|c| c.len() != len) {
            return Err(Error::InvalidInput(format!(
                "channel {c} has {} samples, channel 0 has {len}",
                channels[c].len()
            )));
        }
        Ok(Self {
            channels,
            sample_rate_hz,
        })
    }

    /// Builds a series from row-major frames.
    pub fn from_frames(frames: &[[f64; CHANNELS]], sample_rate_hz: f64) -> Result<Self> {
        let channels = std::array::from_fn(|c| frames.iter().map(|f| f[c]).collect());
        Self::new(channels, sample_rate_hz)
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>; CHANNELS] {
        &self.channels
    }

    pub fn frame(&self, i: usize) -> [f64; CHANNELS] {
        std::array::from_fn(|c| self.channels[c][i])
    }

    pub fn frames(&self) -> impl Iterator<Item = [f64; CHANNELS]> + '_ {
        (0..self.len()).map(|i| self.frame(i))
    }

    /// Applies `f` to every channel, keeping the sample rate.
    fn map_channels(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> RawSeries {
        RawSeries {
            channels: std::array::from_fn(|c| f(&self.channels[c])),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Low-pass Butterworth design parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub cutoff_hz: f64,
    pub order: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            cutoff_hz: 5.0,
            order: 4,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if !(1..=8).contains(&self.order) {
            return Err(Error::InvalidSpec(format!(
                "filter order must be in [1, 8], got {}",
                self.order
            )));
        }
        let nyquist = sample_rate_hz / 2.0;
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < nyquist) {
            return Err(Error::InvalidSpec(format!(
                "cutoff {} Hz must lie in (0, {nyquist}) Hz",
                self.cutoff_hz
            )));
        }
        Ok(())
    }
}

/// One transposed direct-form II section, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
    z1: f64,
    z2: f64,
}

impl Biquad {
    fn new(b: [f64; 3], a1: f64, a2: f64) -> Self {
        Self {
            b,
            a: [1.0, a1, a2],
            z1: 0.0,
            z2: 0.0,
        }
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    /// Sets the delay line to the steady state reached under constant input `x`.
    fn settle(&mut self, x: f64) {
        let y = self.dc_gain() * x;
        self.z2 = self.b[2] * x - self.a[2] * y;
        self.z1 = self.b[1] * x - self.a[1] * y + self.z2;
    }

    #[inline]
    fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.z1;
        self.z1 = self.b[1] * x - self.a[1] * y + self.z2;
        self.z2 = self.b[2] * x - self.a[2] * y;
        y
    }
}

/// Butterworth low-pass realized as cascaded second-order sections.
///
/// The analog prototype is mapped through the bilinear transform with the
/// cutoff prewarped, so the digital magnitude at `cutoff_hz` is exactly
/// `1/√2`. Each section has unit DC gain.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    sections: Vec<Biquad>,
    primed: bool,
}

impl SosFilter {
    pub fn lowpass(spec: FilterSpec, sample_rate_hz: f64) -> Result<Self> {
        spec.validate(sample_rate_hz)?;
        let n = spec.order;
        let k = (PI * spec.cutoff_hz / sample_rate_hz).tan();
        let k2 = k * k;
        let mut sections = Vec::with_capacity(n.div_ceil(2));
        if n % 2 == 1 {
            // H(s) = 1 / (s + 1)
            let b0 = k / (1.0 + k);
            sections.push(Biquad::new([b0, b0, 0.0], (k - 1.0) / (k + 1.0), 0.0));
        }
        for j in 0..n / 2 {
            // H(s) = 1 / (s² + αs + 1) for one conjugate pole pair
            let alpha = 2.0 * (PI * (2 * j + 1) as f64 / (2 * n) as f64).sin();
            let norm = 1.0 / (1.0 + alpha * k + k2);
            let b0 = k2 * norm;
            sections.push(Biquad::new(
                [b0, 2.0 * b0, b0],
                2.0 * (k2 - 1.0) * norm,
                (1.0 - alpha * k + k2) * norm,
            ));
        }
        Ok(Self {
            sections,
            primed: false,
        })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Filters one sample. The first sample primes every section at its
    /// steady state so a constant input passes through without a transient.
    pub fn process(&mut self, x: f64) -> f64 {
        if !self.primed {
            let mut level = x;
            for s in &mut self.sections {
                s.settle(level);
                level *= s.dc_gain();
            }
            self.primed = true;
        }
        self.sections.iter_mut().fold(x, |acc, s| s.process(acc))
    }

    pub fn reset(&mut self) {
        for s in &mut self.sections {
            s.z1 = 0.0;
            s.z2 = 0.0;
        }
        self.primed = false;
    }
}

/// Causal Butterworth low-pass applied independently to every channel.
pub fn butterworth_lowpass(series: &RawSeries, spec: FilterSpec) -> Result<RawSeries> {
    let design = SosFilter::lowpass(spec, series.sample_rate_hz)?;
    Ok(series.map_channels(|ch| {
        let mut filter = design.clone();
        ch.iter().map(|&x| filter.process(x)).collect()
    }))
}

/// Maps any index onto `0..n` by mirroring about the end samples
/// (the edge sample itself is not repeated).
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

fn median_of(buf: &mut [f64]) -> f64 {
    let mid = buf.len() / 2;
    let (_, m, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

fn check_median_window(window_len: usize, len: usize) -> Result<()> {
    if window_len == 0 || window_len.is_multiple_of(2) {
        return Err(Error::InvalidSpec(format!(
            "median window must be odd and positive, got {window_len}"
        )));
    }
    if window_len > len {
        return Err(Error::InvalidSpec(format!(
            "median window {window_len} exceeds series length {len}"
        )));
    }
    Ok(())
}

fn median_channel(x: &[f64], window_len: usize) -> Vec<f64> {
    let half = (window_len / 2) as isize;
    let n = x.len();
    let mut buf = vec![0.0; window_len];
    (0..n as isize)
        .map(|i| {
            for (slot, off) in buf.iter_mut().zip(-half..=half) {
                *slot = x[reflect_index(i + off, n)];
            }
            median_of(&mut buf)
        })
        .collect()
}

/// Centered running median with reflect padding at both edges.
pub fn median_filter(series: &RawSeries, window_len: usize) -> Result<RawSeries> {
    check_median_window(window_len, series.len())?;
    Ok(series.map_channels(|ch| median_channel(ch, window_len)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    #[default]
    MinMax,
    ZScore,
}

/// Per-channel statistics frozen at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub mode: NormMode,
    pub min: [f64; CHANNELS],
    pub max: [f64; CHANNELS],
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

impl NormParams {
    /// Parameters that leave data unchanged under min-max mode with a [0, 1] range.
    pub fn identity() -> Self {
        Self {
            mode: NormMode::MinMax,
            min: [0.0; CHANNELS],
            max: [1.0; CHANNELS],
            mean: [0.0; CHANNELS],
            std: [1.0; CHANNELS],
        }
    }

    fn offset_scale(&self, c: usize) -> Option<(f64, f64)> {
        match self.mode {
            NormMode::MinMax => {
                let span = self.max[c] - self.min[c];
                (span > 0.0).then_some((self.min[c], span))
            }
            NormMode::ZScore => (self.std[c] > 0.0).then_some((self.mean[c], self.std[c])),
        }
    }

    /// Normalizes a single value of channel `c`. Degenerate channels map to 0.
    #[inline]
    pub fn normalize(&self, c: usize, x: f64) -> f64 {
        match self.offset_scale(c) {
            Some((offset, scale)) => (x - offset) / scale,
            None => 0.0,
        }
    }

    pub fn normalize_frame(&self, frame: &[f64; CHANNELS]) -> [f64; CHANNELS] {
        std::array::from_fn(|c| self.normalize(c, frame[c]))
    }

    /// Inverse of [`normalize`](Self::normalize) on non-degenerate channels.
    pub fn unnormalize(&self, c: usize, y: f64) -> f64 {
        match self.offset_scale(c) {
            Some((offset, scale)) => y * scale + offset,
            None => match self.mode {
                NormMode::MinMax => self.min[c],
                NormMode::ZScore => self.mean[c],
            },
        }
    }
}

/// Fits per-channel statistics over every sample of every training series.
/// Standard deviation uses the population convention.
pub fn fit_normalizer(train: &[RawSeries], mode: NormMode) -> Result<NormParams> {
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training collection".into()));
    }
    let mut params = NormParams {
        mode,
        min: [f64::INFINITY; CHANNELS],
        max: [f64::NEG_INFINITY; CHANNELS],
        mean: [0.0; CHANNELS],
        std: [0.0; CHANNELS],
    };
    let count: usize = train.iter().map(RawSeries::len).sum();
    for c in 0..CHANNELS {
        let mut sum = 0.0;
        for x in train.iter().flat_map(|s| s.channel(c)) {
            params.min[c] = params.min[c].min(*x);
            params.max[c] = params.max[c].max(*x);
            sum += x;
        }
        let mean = sum / count as f64;
        let var = train
            .iter()
            .flat_map(|s| s.channel(c))
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / count as f64;
        params.mean[c] = mean;
        params.std[c] = var.sqrt();
    }
    Ok(params)
}

pub fn apply_normalizer(series: &RawSeries, params: &NormParams) -> RawSeries {
    let mut c = 0;
    series.map_channels(|ch| {
        let out = ch.iter().map(|&x| params.normalize(c, x)).collect();
        c += 1;
        out
    })
}

/// Filter chain applied before windowing, identically offline and in streaming.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub sample_rate_hz: f64,
    /// Odd median window, applied first. `None` disables it.
    pub median_window: Option<usize>,
    pub lowpass: Option<FilterSpec>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            median_window: Some(3),
            lowpass: Some(FilterSpec::default()),
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.median_window {
            if w == 0 || w % 2 == 0 {
                return Err(Error::InvalidSpec(format!(
                    "median window must be odd and positive, got {w}"
                )));
            }
        }
        if let Some(spec) = self.lowpass {
            spec.validate(self.sample_rate_hz)?;
        }
        Ok(())
    }

    /// Runs median (if enabled) then Butterworth (if enabled). Series shorter
    /// than the median window are median-filtered with reflection wrap-around,
    /// matching [`StreamingPreprocessor`].
    pub fn apply(&self, series: &RawSeries) -> Result<RawSeries> {
        self.validate()?;
        let mut out = match self.median_window {
            Some(w) if w > 1 => series.map_channels(|ch| median_channel(ch, w)),
            _ => series.clone(),
        };
        if let Some(spec) = self.lowpass {
            out = butterworth_lowpass(&out, spec)?;
        }
        Ok(out)
    }
}

/// Sample-by-sample equivalent of [`PreprocessConfig::apply`].
///
/// Output lags input by `median_window / 2` frames; [`finish`](Self::finish)
/// flushes the tail using the same reflect rule as the offline filter.
#[derive(Debug, Clone)]
pub struct StreamingPreprocessor {
    half: usize,
    head: Vec<[f64; CHANNELS]>,
    recent: VecDeque<[f64; CHANNELS]>,
    seen: usize,
    emitted: usize,
    filters: Option<Vec<SosFilter>>,
}

impl StreamingPreprocessor {
    pub fn new(config: &PreprocessConfig) -> Result<Self> {
        config.validate()?;
        let filters = match config.lowpass {
            Some(spec) => Some(vec![
                SosFilter::lowpass(spec, config.sample_rate_hz)?;
                CHANNELS
            ]),
            None => None,
        };
        Ok(Self {
            half: config.median_window.unwrap_or(1) / 2,
            head: Vec::new(),
            recent: VecDeque::new(),
            seen: 0,
            emitted: 0,
            filters,
        })
    }

    fn window_len(&self) -> usize {
        2 * self.half + 1
    }

    fn sample(&self, idx: usize) -> &[f64; CHANNELS] {
        let recent_start = self.seen - self.recent.len();
        if idx >= recent_start {
            &self.recent[idx - recent_start]
        } else {
            &self.head[idx]
        }
    }

    fn emit(&mut self, j: usize, total: usize) -> [f64; CHANNELS] {
        let mut frame = if self.half == 0 {
            *self.sample(j)
        } else {
            let mut buf = vec![0.0; self.window_len()];
            std::array::from_fn(|c| {
                for (k, slot) in buf.iter_mut().enumerate() {
                    let idx = reflect_index(j as isize + k as isize - self.half as isize, total);
                    *slot = self.sample(idx)[c];
                }
                median_of(&mut buf)
            })
        };
        if let Some(filters) = self.filters.as_mut() {
            for (x, f) in frame.iter_mut().zip(filters.iter_mut()) {
                *x = f.process(*x);
            }
        }
        self.emitted += 1;
        frame
    }

    /// Feeds one raw frame; returns the filtered frame that became available, if any.
    pub fn push(&mut self, frame: [f64; CHANNELS]) -> Option<[f64; CHANNELS]> {
        let w = self.window_len();
        if self.head.len() < w {
            self.head.push(frame);
        }
        self.recent.push_back(frame);
        if self.recent.len() > w {
            self.recent.pop_front();
        }
        self.seen += 1;
        // Right-edge reflection needs the stream length, so only indices whose
        // whole window is already present are emitted here.
        if self.emitted + self.half < self.seen {
            return Some(self.emit(self.emitted, usize::MAX / 4));
        }
        None
    }

    /// Flushes the frames held back by the median delay.
    pub fn finish(&mut self) -> Vec<[f64; CHANNELS]> {
        let total = self.seen;
        (self.emitted..total).map(|j| self.emit(j, total)).collect()
    }
}
