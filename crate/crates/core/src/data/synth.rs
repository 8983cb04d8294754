//! Seeded synthetic recordings for the ten activity classes.
//!
//! Every sample is the specific force of gravity seen in the device frame
//! plus activity-specific linear acceleration, with gyroscope channels
//! derived from the orientation trajectory. The device frame has `x`
//! lateral (right), `y` forward and `z` up when the wearer stands upright.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{Activity, LabeledRecording, DEFAULT_STRIDE, DEFAULT_WINDOW_LEN};
use crate::rng::{self, Rng};
use crate::signal::{RawSeries, CHANNELS, DEFAULT_SAMPLE_RATE_HZ};

/// Standard gravity in m/s².
pub const GRAVITY: f64 = 9.80665;

const SUBJECTS: usize = 6;
const ADL_WINDOWS_PER_RECORDING: usize = 10;
const FALL_WINDOWS_PER_RECORDING: usize = 3;
const ACCEL_NOISE: f64 = 0.05;
const GYRO_NOISE: f64 = 1.5;

/// Number of windows to produce per activity, in [`Activity::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActivityCounts(pub [usize; 10]);

impl Default for ActivityCounts {
    fn default() -> Self {
        Self([980, 1010, 970, 1200, 1100, 1220, 1200, 990, 1000, 1100])
    }
}

impl ActivityCounts {
    pub fn zero() -> Self {
        Self([0; 10])
    }

    pub fn get(&self, a: Activity) -> usize {
        self.0[a.index()]
    }

    pub fn set(&mut self, a: Activity, n: usize) {
        self.0[a.index()] = n;
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Every count multiplied by `factor`, rounded to nearest.
    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.map(|n| (n as f64 * factor).round() as usize))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub sample_rate_hz: f64,
    pub counts: ActivityCounts,
    pub window_len: usize,
    pub stride: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            counts: ActivityCounts::default(),
            window_len: DEFAULT_WINDOW_LEN,
            stride: DEFAULT_STRIDE,
        }
    }
}

/// Generates recordings sized so that windowing at `(window_len, stride)`
/// yields exactly `counts` windows per activity.
///
/// Each recording draws from its own random stream keyed by
/// `(seed, activity, index)`, so output does not depend on generation order.
pub fn generate_synthetic(config: &SynthConfig) -> Vec<LabeledRecording> {
    let mut out = Vec::new();
    for activity in Activity::ALL {
        let per = if activity.is_fall() {
            FALL_WINDOWS_PER_RECORDING
        } else {
            ADL_WINDOWS_PER_RECORDING
        };
        let mut remaining = config.counts.get(activity);
        let mut index = 0u32;
        while remaining > 0 {
            let windows = remaining.min(per);
            remaining -= windows;
            let len = config.window_len + config.stride * (windows - 1);
            let mut rng = rng::stream(config.seed, activity.index() as u64, index as u64);
            let subject = rng.random_range(0..SUBJECTS);
            let profile = SubjectProfile::new(subject, config.seed);
            let frames =
                synthesize(activity, len, config.sample_rate_hz, &profile, &mut rng);
            out.push(LabeledRecording {
                id: out.len(),
                series: RawSeries::from_frames(&frames, config.sample_rate_hz)
                    .expect("synthetic recording is non-empty"),
                activity,
                subject_id: format!("S{}", subject + 1),
                session: index,
            });
            index += 1;
        }
    }
    out
}

/// Synthesizes a single recording of `activity` for a streaming demo or test.
pub fn synthesize_recording(
    activity: Activity,
    len: usize,
    sample_rate_hz: f64,
    seed: u64,
) -> Vec<[f64; CHANNELS]> {
    let mut rng = rng::stream(seed, 1000 + activity.index() as u64, 0);
    let subject = rng.random_range(0..SUBJECTS);
    synthesize(
        activity,
        len,
        sample_rate_hz,
        &SubjectProfile::new(subject, seed),
        &mut rng,
    )
}

/// Per-subject variation in gait and sensor mounting.
#[derive(Debug, Clone)]
struct SubjectProfile {
    gait_scale: f64,
    intensity: f64,
    mount_pitch: f64,
    mount_roll: f64,
}

impl SubjectProfile {
    fn new(subject: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, 77, subject as u64);
        Self {
            gait_scale: rng.random_range(0.9..1.1),
            intensity: rng.random_range(0.85..1.15),
            mount_pitch: rng.random_range(-6.0..6.0f64).to_radians(),
            mount_roll: rng.random_range(-6.0..6.0f64).to_radians(),
        }
    }
}

/// Orientation (pitch forward, roll right) in radians plus linear acceleration
/// in the device frame, sampled once per frame.
struct Trajectory {
    pitch: Vec<f64>,
    roll: Vec<f64>,
    linear: Vec<[f64; 3]>,
    yaw_rate: Vec<f64>,
    /// Impact transient, scaled at render time so the impact sample's
    /// magnitude equals the given peak in g.
    impulse: Vec<[f64; 3]>,
    impact: Option<(usize, f64)>,
}

impl Trajectory {
    fn still(len: usize, pitch: f64, roll: f64) -> Self {
        Self {
            pitch: vec![pitch; len],
            roll: vec![roll; len],
            linear: vec![[0.0; 3]; len],
            yaw_rate: vec![0.0; len],
            impulse: vec![[0.0; 3]; len],
            impact: None,
        }
    }
}

/// Gravity direction in the device frame for a given pitch and roll.
fn gravity_dir(pitch: f64, roll: f64) -> [f64; 3] {
    [
        roll.sin() * pitch.cos(),
        -pitch.sin(),
        roll.cos() * pitch.cos(),
    ]
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

fn synthesize(
    activity: Activity,
    len: usize,
    fs: f64,
    profile: &SubjectProfile,
    rng: &mut Rng,
) -> Vec<[f64; CHANNELS]> {
    let traj = match activity {
        Activity::Walking => gait(len, fs, profile, rng, false),
        Activity::Running => gait(len, fs, profile, rng, true),
        Activity::Sitting => sitting(len, fs, rng),
        Activity::Lying => lying(len, fs, rng),
        Activity::SuddenSit => posture_changes(len, fs, profile, rng, true),
        Activity::SuddenStanding => posture_changes(len, fs, profile, rng, false),
        Activity::FallForward
        | Activity::FallBackward
        | Activity::FallLeft
        | Activity::FallRight => fall(activity, len, fs, profile, rng),
    };
    render(&traj, fs, profile, rng)
}

fn render(traj: &Trajectory, fs: f64, profile: &SubjectProfile, rng: &mut Rng) -> Vec<[f64; CHANNELS]> {
    let accel_noise = Normal::new(0.0, ACCEL_NOISE).expect("valid sd");
    let gyro_noise = Normal::new(0.0, GYRO_NOISE).expect("valid sd");
    let n = traj.pitch.len();
    let mut frames: Vec<[f64; CHANNELS]> = (0..n)
        .map(|i| {
            let pitch = traj.pitch[i] + profile.mount_pitch;
            let roll = traj.roll[i] + profile.mount_roll;
            let g = gravity_dir(pitch, roll);
            let lin = traj.linear[i];
            // central difference of the orientation trajectory, in deg/s
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let span = (hi - lo).max(1) as f64 / fs;
            let pitch_rate = (traj.pitch[hi] - traj.pitch[lo]) / span;
            let roll_rate = (traj.roll[hi] - traj.roll[lo]) / span;
            [
                GRAVITY * g[0] + lin[0] + accel_noise.sample(rng),
                GRAVITY * g[1] + lin[1] + accel_noise.sample(rng),
                GRAVITY * g[2] + lin[2] + accel_noise.sample(rng),
                pitch_rate.to_degrees() + gyro_noise.sample(rng),
                roll_rate.to_degrees() + gyro_noise.sample(rng),
                traj.yaw_rate[i] + gyro_noise.sample(rng),
            ]
        })
        .collect();
    if let Some((at, peak_g)) = traj.impact {
        // |base + a·d| = peak, solved for a ≥ 0 at the impact sample
        let d = traj.impulse[at];
        let base = &frames[at][..3];
        let bd: f64 = (0..3).map(|c| base[c] * d[c]).sum();
        let bb: f64 = base.iter().map(|v| v * v).sum();
        let dd: f64 = d.iter().map(|v| v * v).sum();
        let target = peak_g * GRAVITY;
        let a = (-bd + (bd * bd - dd * (bb - target * target)).max(0.0).sqrt()) / dd;
        for (f, imp) in frames.iter_mut().zip(&traj.impulse).skip(at) {
            for c in 0..3 {
                f[c] += a * imp[c];
            }
        }
    }
    frames
}

/// Walking or running: periodic vertical bounce, forward surge and lateral sway.
fn gait(len: usize, fs: f64, profile: &SubjectProfile, rng: &mut Rng, running: bool) -> Trajectory {
    let (freq, amp, lean, sway_deg) = if running {
        (
            rng.random_range(2.5..3.2) * profile.gait_scale,
            rng.random_range(5.5..8.5) * profile.intensity,
            rng.random_range(8.0..15.0f64).to_radians(),
            rng.random_range(4.0..7.0f64),
        )
    } else {
        (
            rng.random_range(1.6..2.2) * profile.gait_scale,
            rng.random_range(1.5..3.0) * profile.intensity,
            rng.random_range(-3.0..5.0f64).to_radians(),
            rng.random_range(2.0..4.0f64),
        )
    };
    let phase = rng.random_range(0.0..2.0 * PI);
    let turn = rng.random_range(-15.0..15.0);
    let mut traj = Trajectory::still(len, lean, 0.0);
    for i in 0..len {
        let t = i as f64 / fs;
        let w = 2.0 * PI * freq * t + phase;
        traj.pitch[i] = lean + sway_deg.to_radians() * w.sin();
        traj.roll[i] = 0.6 * sway_deg.to_radians() * (0.5 * w).sin();
        traj.linear[i] = [
            0.35 * amp * (0.5 * w).sin(),
            0.5 * amp * (w + PI / 2.0).sin(),
            amp * w.sin() + 0.3 * amp * (2.0 * w).sin(),
        ];
        traj.yaw_rate[i] = turn + 8.0 * (0.5 * w).cos();
    }
    traj
}

fn sitting(len: usize, fs: f64, rng: &mut Rng) -> Trajectory {
    let pitch0 = rng.random_range(-25.0..-5.0f64).to_radians();
    let roll0 = rng.random_range(-8.0..8.0f64).to_radians();
    let drift_f = rng.random_range(0.05..0.2);
    let drift = rng.random_range(0.5..3.0f64).to_radians();
    let phase = rng.random_range(0.0..2.0 * PI);
    let mut traj = Trajectory::still(len, pitch0, roll0);
    for i in 0..len {
        let t = i as f64 / fs;
        let w = 2.0 * PI * drift_f * t + phase;
        traj.pitch[i] = pitch0 + drift * w.sin();
        traj.roll[i] = roll0 + 0.5 * drift * (1.3 * w).cos();
        traj.linear[i] = [0.0, 0.08 * (3.0 * w).sin(), 0.05 * (2.0 * w).sin()];
    }
    traj
}

fn lying(len: usize, fs: f64, rng: &mut Rng) -> Trajectory {
    let (pitch0, roll0) = match rng.random_range(0..100) {
        0..=54 => (rng.random_range(-100.0..-75.0f64), rng.random_range(-12.0..12.0f64)),
        55..=69 => (rng.random_range(75.0..100.0f64), rng.random_range(-12.0..12.0f64)),
        70..=84 => (rng.random_range(-15.0..15.0f64), rng.random_range(70.0..100.0f64)),
        _ => (rng.random_range(-15.0..15.0f64), rng.random_range(-100.0..-70.0f64)),
    };
    let (pitch0, roll0) = (pitch0.to_radians(), roll0.to_radians());
    let breath_f = rng.random_range(0.2..0.35);
    let phase = rng.random_range(0.0..2.0 * PI);
    let mut traj = Trajectory::still(len, pitch0, roll0);
    for i in 0..len {
        let t = i as f64 / fs;
        let w = 2.0 * PI * breath_f * t + phase;
        traj.pitch[i] = pitch0 + 0.6f64.to_radians() * w.sin();
        traj.linear[i] = [0.0, 0.06 * w.sin(), 0.06 * w.cos()];
    }
    traj
}

/// Alternating sit-down / stand-up cycles. For `sudden_sit` the descent is
/// abrupt and the rise slow; otherwise the rise is abrupt.
fn posture_changes(
    len: usize,
    fs: f64,
    profile: &SubjectProfile,
    rng: &mut Rng,
    sudden_sit: bool,
) -> Trajectory {
    let seated = rng.random_range(-22.0..-10.0f64).to_radians();
    let standing = rng.random_range(-3.0..3.0f64).to_radians();
    let mut traj = Trajectory::still(len, standing, 0.0);
    // state: true = currently seated
    let mut seated_now = rng.random_bool(0.5);
    let mut i = 0usize;
    // start mid-hold so events are spread over the recording
    let mut hold = (rng.random_range(0.2..1.2) * fs) as usize;
    while i < len {
        let level = if seated_now { seated } else { standing };
        let end = (i + hold).min(len);
        for k in i..end {
            traj.pitch[k] = level;
        }
        i = end;
        if i >= len {
            break;
        }
        let abrupt = seated_now != sudden_sit;
        let dur = if abrupt {
            (rng.random_range(0.4..0.6) * fs) as usize
        } else {
            (rng.random_range(1.0..1.5) * fs) as usize
        };
        let from = level;
        let to = if seated_now { standing } else { seated };
        let amp = rng.random_range(0.5..0.8) * GRAVITY * profile.intensity;
        for k in 0..dur {
            let idx = i + k;
            if idx >= len {
                break;
            }
            let tau = k as f64 / dur as f64;
            if abrupt {
                traj.pitch[idx] = from + (to - from) * smoothstep(tau * 1.4);
                // sit: drop then landing jolt; stand: thrust then deceleration dip
                let vertical = if seated_now {
                    amp * (PI * tau).sin() * (1.0 - 0.6 * tau) - 0.3 * amp * (2.0 * PI * tau).sin().max(0.0)
                } else if tau < 0.6 {
                    -0.55 * amp * (PI * tau / 0.6).sin()
                } else {
                    amp * (PI * (tau - 0.6) / 0.4).sin()
                };
                traj.linear[idx] = [0.0, 0.3 * vertical, vertical];
            } else {
                traj.pitch[idx] = from + (to - from) * smoothstep(tau);
                let vertical = 0.15 * GRAVITY * (2.0 * PI * tau).sin();
                traj.linear[idx] = [0.0, 0.2 * vertical, vertical];
            }
        }
        i += dur;
        seated_now = !seated_now;
        hold = (rng.random_range(1.0..2.2) * fs) as usize;
    }
    traj
}

/// Quiescence or slow walking → rotating descent with reduced specific force
/// → impact spike (2g–4g peak) → settling → stillness in the fallen pose.
fn fall(activity: Activity, len: usize, fs: f64, profile: &SubjectProfile, rng: &mut Rng) -> Trajectory {
    let dir = |lo: f64, hi: f64, rng: &mut Rng| rng.random_range(lo..hi).to_radians();
    let (final_pitch, final_roll) = match activity {
        Activity::FallForward => (dir(75.0, 100.0, rng), dir(-15.0, 15.0, rng)),
        Activity::FallBackward => (dir(-100.0, -70.0, rng), dir(-15.0, 15.0, rng)),
        Activity::FallLeft => (dir(-15.0, 15.0, rng), dir(-100.0, -70.0, rng)),
        Activity::FallRight => (dir(-15.0, 15.0, rng), dir(70.0, 100.0, rng)),
        _ => unreachable!("not a fall activity"),
    };
    let start_pitch = dir(-4.0, 6.0, rng);
    let start_roll = dir(-4.0, 4.0, rng);

    let centre = len as isize / 2 + rng.random_range(-2i64..=4) as isize;
    let impact = centre.clamp(4, len as isize - 4) as usize;
    let descent = ((rng.random_range(0.3..0.5) * fs) as usize).min(impact);
    let onset = impact - descent;
    let settle = (rng.random_range(0.3..0.6) * fs) as usize;
    let depth = rng.random_range(0.6..0.9);
    let peak_g = rng.random_range(2.0..4.0);
    let ring_hz = rng.random_range(6.0..10.0);
    let decay = rng.random_range(0.03..0.06);
    let settle_amp = rng.random_range(0.15..0.35) * GRAVITY;
    let prefall_walk = rng.random_bool(0.4);
    let step_f = rng.random_range(1.6..2.0) * profile.gait_scale;
    let step_amp = rng.random_range(0.8..1.8);

    let mut traj = Trajectory::still(len, start_pitch, start_roll);
    traj.impact = Some((impact, peak_g));
    for i in 0..len {
        let t = i as f64 / fs;
        if i < onset {
            if prefall_walk {
                let w = 2.0 * PI * step_f * t;
                traj.pitch[i] = start_pitch + 2f64.to_radians() * w.sin();
                traj.linear[i] = [0.2 * step_amp * (0.5 * w).sin(), 0.0, step_amp * w.sin()];
            }
        } else if i < impact {
            let tau = (i - onset) as f64 / descent as f64;
            let s = smoothstep(tau);
            traj.pitch[i] = start_pitch + (final_pitch - start_pitch) * s;
            traj.roll[i] = start_roll + (final_roll - start_roll) * s;
            // free fall cancels part of the measured gravity component
            let g = gravity_dir(traj.pitch[i], traj.roll[i]);
            let loss = -depth * GRAVITY * (PI * tau).sin().powf(0.7);
            traj.linear[i] = [loss * g[0], loss * g[1], loss * g[2]];
        } else {
            let k = (i - impact) as f64;
            let wobble = (2.0 * PI * 1.5 * (t - impact as f64 / fs)).sin()
                * (-(k / (settle as f64).max(1.0))).exp();
            traj.pitch[i] = final_pitch + 6f64.to_radians() * wobble;
            traj.roll[i] = final_roll + 4f64.to_radians() * wobble;
            let g = gravity_dir(traj.pitch[i], traj.roll[i]);
            // ringing spike mostly along the floor normal, unit size at impact
            let spike = (-(k / fs) / decay).exp() * (2.0 * PI * ring_hz * k / fs).cos();
            let bounce = settle_amp * (-(k / (settle as f64).max(1.0))).exp()
                * (2.0 * PI * 3.0 * k / fs).sin();
            traj.linear[i] = [bounce * g[0], bounce * g[1], bounce * g[2]];
            traj.impulse[i] = [
                spike * (g[0] + 0.2 * g[2]),
                spike * g[1],
                spike * (g[2] + 0.2 * g[0]),
            ];
        }
    }
    traj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_windows;

    fn small() -> SynthConfig {
        SynthConfig {
            counts: ActivityCounts::default().scaled(0.05),
            ..SynthConfig::default()
        }
    }

    #[test]
    fn default_counts_total() {
        let c = ActivityCounts::default();
        let adl: usize = Activity::ALL.iter().filter(|a| !a.is_fall()).map(|&a| c.get(a)).sum();
        assert_eq!(adl, 6480);
        assert_eq!(c.total() - adl, 4290);
        assert_eq!(c.total(), 10_770);
    }

    #[test]
    fn window_counts_are_exact() {
        let config = small();
        let recs = generate_synthetic(&config);
        let mut per = ActivityCounts::zero();
        for r in &recs {
            let n = make_windows(r, config.window_len, config.stride).unwrap().len();
            per.set(r.activity, per.get(r.activity) + n);
        }
        assert_eq!(per, config.counts);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = generate_synthetic(&small());
        let b = generate_synthetic(&small());
        assert_eq!(a, b);
        let c = generate_synthetic(&SynthConfig { seed: 7, ..small() });
        assert_ne!(a, c);
    }

    #[test]
    fn zero_counts_give_nothing() {
        let config = SynthConfig {
            counts: ActivityCounts::zero(),
            ..SynthConfig::default()
        };
        assert!(generate_synthetic(&config).is_empty());
    }

    #[test]
    fn magnitude_envelopes() {
        for r in generate_synthetic(&small()) {
            let peak = r.peak_acceleration_g();
            if r.activity.is_fall() {
                assert!((2.0 - 1e-9..=4.0 + 1e-9).contains(&peak), "{} peak {peak}", r.activity);
            }
            if matches!(r.activity, Activity::Lying | Activity::Sitting) {
                assert!(peak < 1.5, "{} peak {peak}", r.activity);
            }
        }
    }

    #[test]
    fn labels_follow_activity() {
        for r in generate_synthetic(&small()) {
            assert_eq!(r.label() == crate::data::Label::Fall, r.activity.is_fall());
        }
    }
}
