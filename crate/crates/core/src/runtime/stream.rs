//! Sliding-window streaming inference with debounced alerts.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::notify::{DeliveryResult, Notifier};
use crate::data::{synthesize_recording, Activity, LabeledRecording, SensorFrame};
use crate::error::{Error, Result};
use crate::network::{predict, LstmModel};
use crate::rng;
use crate::signal::{StreamingPreprocessor, CHANNELS};

/// Frames held between producer and consumer.
pub const QUEUE_CAPACITY: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub threshold: f64,
    /// Consecutive evaluations at or above the threshold needed to alert.
    pub consecutive: usize,
    pub refractory_s: f64,
    pub stride: usize,
    pub device_id: String,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            consecutive: 3,
            refractory_s: 10.0,
            stride: crate::data::DEFAULT_STRIDE,
            device_id: "fallwatch-0".into(),
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.consecutive == 0 {
            return Err(Error::InvalidSpec("consecutive windows must be at least 1".into()));
        }
        if !(self.refractory_s >= 0.0 && self.refractory_s.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "refractory period must be a non-negative number of seconds, got {}",
                self.refractory_s
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidSpec("stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallAlert {
    /// Timestamp of the last frame in the triggering window.
    pub event_time: f64,
    pub probability: f64,
    pub window_index: u64,
    pub device_id: String,
}

/// One model evaluation on the rolling window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub window_index: u64,
    pub end_time: f64,
    pub p_fall: f64,
}

/// Turns a sequence of P(fall) values into alerts: `k` consecutive values at
/// or above the threshold fire one alert, after which the run restarts and
/// nothing fires until the refractory period has passed.
#[derive(Debug, Clone)]
pub struct AlertDebouncer {
    threshold: f64,
    k: usize,
    refractory_s: f64,
    device_id: String,
    run: usize,
    last_alert: Option<f64>,
}

impl AlertDebouncer {
    pub fn new(config: &StreamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            threshold: config.threshold,
            k: config.consecutive,
            refractory_s: config.refractory_s,
            device_id: config.device_id.clone(),
            run: 0,
            last_alert: None,
        })
    }

    pub fn observe(&mut self, window_index: u64, time: f64, p_fall: f64) -> Option<FallAlert> {
        if let Some(last) = self.last_alert {
            if time - last < self.refractory_s {
                self.run = 0;
                return None;
            }
        }
        if p_fall >= self.threshold {
            self.run += 1;
        } else {
            self.run = 0;
        }
        if self.run < self.k {
            return None;
        }
        self.run = 0;
        self.last_alert = Some(time);
        Some(FallAlert {
            event_time: time,
            probability: p_fall,
            window_index,
            device_id: self.device_id.clone(),
        })
    }
}

/// Single-threaded core of the streaming runtime: filter, buffer, evaluate
/// every `stride` frames, debounce.
pub struct StreamDetector<'m> {
    model: &'m LstmModel,
    stride: usize,
    pre: StreamingPreprocessor,
    pending_times: VecDeque<f64>,
    buffer: VecDeque<[f64; CHANNELS]>,
    filtered_seen: usize,
    evaluations: u64,
    last_time: Option<f64>,
    rejected: u64,
    debouncer: AlertDebouncer,
}

pub type Step = (Evaluation, Option<FallAlert>);

impl<'m> StreamDetector<'m> {
    pub fn new(model: &'m LstmModel, config: &StreamConfig) -> Result<Self> {
        model.check()?;
        Ok(Self {
            model,
            stride: config.stride,
            pre: StreamingPreprocessor::new(&model.preprocess)?,
            pending_times: VecDeque::new(),
            buffer: VecDeque::with_capacity(model.arch.window + 1),
            filtered_seen: 0,
            evaluations: 0,
            last_time: None,
            rejected: 0,
            debouncer: AlertDebouncer::new(config)?,
        })
    }

    /// Frames dropped for being out of order or non-finite.
    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn push(&mut self, frame: SensorFrame) -> Result<Option<Step>> {
        let in_order = self.last_time.is_none_or(|last| frame.t > last);
        if !in_order || !frame.t.is_finite() || frame.values.iter().any(|v| !v.is_finite()) {
            self.rejected += 1;
            log::warn!("dropping frame at t={} ({} dropped so far)", frame.t, self.rejected);
            return Ok(None);
        }
        self.last_time = Some(frame.t);
        self.pending_times.push_back(frame.t);
        match self.pre.push(frame.values) {
            Some(filtered) => self.accept(filtered),
            None => Ok(None),
        }
    }

    /// Flushes frames held back by the median filter.
    pub fn finish(&mut self) -> Result<Vec<Step>> {
        let mut out = Vec::new();
        for filtered in self.pre.finish() {
            out.extend(self.accept(filtered)?);
        }
        Ok(out)
    }

    fn accept(&mut self, filtered: [f64; CHANNELS]) -> Result<Option<Step>> {
        let time = self.pending_times.pop_front().expect("one timestamp per frame");
        let window = self.model.arch.window;
        self.buffer.push_back(self.model.norm_params.normalize_frame(&filtered));
        if self.buffer.len() > window {
            self.buffer.pop_front();
        }
        self.filtered_seen += 1;
        if self.buffer.len() < window || !(self.filtered_seen - window).is_multiple_of(self.stride) {
            return Ok(None);
        }
        let values: Vec<[f64; CHANNELS]> = self.buffer.iter().copied().collect();
        let p_fall = predict(self.model, &values)?[1];
        let eval = Evaluation {
            window_index: self.evaluations,
            end_time: time,
            p_fall,
        };
        self.evaluations += 1;
        log::debug!("window {} t={time:.2} p_fall={p_fall:.4}", eval.window_index);
        let alert = self.debouncer.observe(eval.window_index, time, p_fall);
        Ok(Some((eval, alert)))
    }
}

/// What to do when the frame queue is full.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Overflow {
    /// Discard the oldest queued frame (live feeds).
    DropOldest,
    /// Wait for space (replay).
    Block,
}

struct QueueState {
    items: VecDeque<SensorFrame>,
    closed: bool,
}

/// Bounded producer/consumer hand-off of sensor frames.
pub struct FrameQueue {
    state: Mutex<QueueState>,
    not_empty: Condvar,
    not_full: Condvar,
    capacity: usize,
    overflow: Overflow,
    dropped: AtomicU64,
}

impl FrameQueue {
    pub fn new(capacity: usize, overflow: Overflow) -> Self {
        Self {
            state: Mutex::new(QueueState {
                items: VecDeque::with_capacity(capacity),
                closed: false,
            }),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
            capacity: capacity.max(1),
            overflow,
            dropped: AtomicU64::new(0),
        }
    }

    pub fn push(&self, frame: SensorFrame) {
        let mut s = self.state.lock().expect("queue lock");
        while s.items.len() >= self.capacity {
            match self.overflow {
                Overflow::DropOldest => {
                    s.items.pop_front();
                    self.dropped.fetch_add(1, Ordering::Relaxed);
                }
                Overflow::Block => s = self.not_full.wait(s).expect("queue lock"),
            }
        }
        s.items.push_back(frame);
        self.not_empty.notify_one();
    }

    /// Blocks until a frame is available; `None` once closed and drained.
    pub fn pop(&self) -> Option<SensorFrame> {
        let mut s = self.state.lock().expect("queue lock");
        loop {
            if let Some(f) = s.items.pop_front() {
                self.not_full.notify_one();
                return Some(f);
            }
            if s.closed {
                return None;
            }
            s = self.not_empty.wait(s).expect("queue lock");
        }
    }

    pub fn close(&self) {
        self.state.lock().expect("queue lock").closed = true;
        self.not_empty.notify_all();
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub frames: u64,
    pub evaluations: Vec<Evaluation>,
    pub alerts: Vec<FallAlert>,
    pub deliveries: Vec<DeliveryResult>,
    pub dropped_overflow: u64,
    pub dropped_rejected: u64,
}

/// Runs producer, inference and notification as three threads joined by a
/// bounded frame queue and an alert channel. Delivery never blocks inference.
pub fn run_stream<I>(
    source: I,
    model: &LstmModel,
    config: &StreamConfig,
    overflow: Overflow,
    notifier: Option<Notifier>,
) -> Result<StreamSummary>
where
    I: IntoIterator<Item = SensorFrame>,
    I::IntoIter: Send,
{
    let mut detector = StreamDetector::new(model, config)?;
    let queue = FrameQueue::new(QUEUE_CAPACITY, overflow);
    let (alert_tx, alert_rx) = mpsc::channel::<FallAlert>();
    let source = source.into_iter();

    std::thread::scope(|scope| {
        let producer = scope.spawn(|| {
            let mut n = 0u64;
            for frame in source {
                queue.push(frame);
                n += 1;
            }
            queue.close();
            n
        });
        let delivery = scope.spawn(move || {
            let mut results = Vec::new();
            if let Some(mut notifier) = notifier {
                for alert in alert_rx {
                    results.push(notifier.notify(&alert));
                }
            }
            results
        });

        let mut summary = StreamSummary::default();
        let record = |summary: &mut StreamSummary, step: Option<Step>| {
            if let Some((eval, alert)) = step {
                summary.evaluations.push(eval);
                if let Some(alert) = alert {
                    log::info!(
                        "fall alert: window {} t={:.2} p={:.3}",
                        alert.window_index,
                        alert.event_time,
                        alert.probability
                    );
                    let _ = alert_tx.send(alert.clone());
                    summary.alerts.push(alert);
                }
            }
        };
        let mut failure = None;
        while let Some(frame) = queue.pop() {
            match detector.push(frame) {
                Ok(step) => record(&mut summary, step),
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        if failure.is_none() {
            match detector.finish() {
                Ok(steps) => steps.into_iter().for_each(|s| record(&mut summary, Some(s))),
                Err(e) => failure = Some(e),
            }
        }
        if failure.is_some() {
            // Let the producer finish so the scope can end.
            while queue.pop().is_some() {}
        }
        drop(alert_tx);
        summary.frames = producer.join().expect("producer thread");
        summary.deliveries = delivery.join().expect("delivery thread");
        summary.dropped_overflow = queue.dropped();
        summary.dropped_rejected = detector.rejected();
        match failure {
            Some(e) => Err(e),
            None => Ok(summary),
        }
    })
}

/// Concatenates recordings into one timeline, shifting each so that time
/// keeps increasing by one sample period across boundaries.
pub fn replay_frames(recordings: &[LabeledRecording]) -> Vec<SensorFrame> {
    let mut out = Vec::new();
    let mut offset = 0.0;
    for rec in recordings {
        let dt = 1.0 / rec.series.sample_rate_hz();
        for (i, values) in rec.series.frames().enumerate() {
            out.push(SensorFrame {
                t: offset + i as f64 * dt,
                values,
            });
        }
        offset += rec.len() as f64 * dt;
    }
    out
}

/// Synthetic sensor feed: a scripted sequence of activities, optionally
/// paced at the sample rate to imitate a live device.
pub struct SyntheticFeed {
    segments: VecDeque<(Activity, usize)>,
    sample_rate_hz: f64,
    seed: u64,
    pace: Option<Duration>,
    current: std::vec::IntoIter<[f64; CHANNELS]>,
    segment: u64,
    emitted: u64,
}

impl SyntheticFeed {
    pub fn new(segments: Vec<(Activity, usize)>, sample_rate_hz: f64, seed: u64) -> Self {
        Self {
            segments: segments.into(),
            sample_rate_hz,
            seed,
            pace: None,
            current: Vec::new().into_iter(),
            segment: 0,
            emitted: 0,
        }
    }

    /// Sleep between frames so that `speed`× real time is reproduced.
    pub fn paced(mut self, speed: f64) -> Self {
        self.pace = (speed > 0.0).then(|| Duration::from_secs_f64(1.0 / (self.sample_rate_hz * speed)));
        self
    }
}

impl Iterator for SyntheticFeed {
    type Item = SensorFrame;

    fn next(&mut self) -> Option<SensorFrame> {
        let values = loop {
            if let Some(v) = self.current.next() {
                break v;
            }
            let (activity, len) = self.segments.pop_front()?;
            let seed = rng::derive_seed(self.seed, 0xfeed, self.segment);
            self.segment += 1;
            self.current = synthesize_recording(activity, len, self.sample_rate_hz, seed).into_iter();
        };
        if let Some(pace) = self.pace {
            std::thread::sleep(pace);
        }
        let t = self.emitted as f64 / self.sample_rate_hz;
        self.emitted += 1;
        Some(SensorFrame { t, values })
    }
}
