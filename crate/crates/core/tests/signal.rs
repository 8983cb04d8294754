use std::f64::consts::PI;

use fallwatch::signal::{
    apply_normalizer, fit_normalizer, median_filter, FilterSpec, NormMode, PreprocessConfig, RawSeries, SosFilter,
    StreamingPreprocessor,
};
use proptest::prelude::*;

/// Steady-state amplitude ratio for a unit sine, from the projection of the
/// settled output onto sin and cos.
fn measured_gain(spec: FilterSpec, fs: f64, freq: f64) -> f64 {
    let mut f = SosFilter::lowpass(spec, fs).unwrap();
    let (n, settle) = (20_000, 10_000);
    let (mut s, mut c) = (0.0, 0.0);
    for i in 0..n {
        let w = 2.0 * PI * freq * i as f64 / fs;
        let y = f.process(w.sin());
        if i >= settle {
            s += y * w.sin();
            c += y * w.cos();
        }
    }
    2.0 / (n - settle) as f64 * s.hypot(c)
}

fn analog_gain(freq: f64, cutoff: f64, order: usize) -> f64 {
    1.0 / (1.0 + (freq / cutoff).powi(2 * order as i32)).sqrt()
}

/// The bilinear transform maps analog `tan(π f / fs)` onto digital `f`.
fn warped_gain(freq: f64, cutoff: f64, order: usize, fs: f64) -> f64 {
    let r = (PI * freq / fs).tan() / (PI * cutoff / fs).tan();
    1.0 / (1.0 + r.powi(2 * order as i32)).sqrt()
}

#[test]
fn half_power_at_cutoff_for_every_order() {
    for order in 1..=8 {
        let g = measured_gain(FilterSpec { cutoff_hz: 5.0, order }, 50.0, 5.0);
        assert!((g - 0.5f64.sqrt()).abs() < 1e-3, "order {order}: {g}");
    }
}

#[test]
fn twice_cutoff_matches_analog_at_low_cutoff() {
    let g = measured_gain(FilterSpec { cutoff_hz: 2.0, order: 4 }, 50.0, 4.0);
    let want = analog_gain(4.0, 2.0, 4);
    assert!((want - 1.0 / 257f64.sqrt()).abs() < 1e-12);
    assert!((g - want).abs() <= 0.1 * want, "{g} vs {want}");
}

#[test]
fn response_follows_warped_magnitude() {
    for (cutoff, order) in [(5.0, 4), (5.0, 2), (3.0, 5), (10.0, 6)] {
        for freq in [1.0, 2.5, 7.5, 10.0, 15.0] {
            let g = measured_gain(FilterSpec { cutoff_hz: cutoff, order }, 50.0, freq);
            let want = warped_gain(freq, cutoff, order, 50.0);
            assert!((g - want).abs() < 1e-3 * want.max(1e-2), "{cutoff} Hz order {order} at {freq} Hz: {g} vs {want}");
        }
    }
}

#[test]
fn step_settles_to_one() {
    let mut f = SosFilter::lowpass(FilterSpec::default(), 50.0).unwrap();
    f.process(0.0);
    let last = (0..2000).map(|_| f.process(1.0)).last().unwrap();
    assert!((last - 1.0).abs() < 1e-9);
}

fn series(values: &[f64]) -> RawSeries {
    let frames: Vec<[f64; 6]> = values.iter().map(|&v| [v, -v, 2.0 * v, 0.0, v, 1.0]).collect();
    RawSeries::from_frames(&frames, 50.0).unwrap()
}

#[test]
fn minmax_maps_training_range_to_unit_interval() {
    let train = series(&[-3.0, 1.0, 5.0]);
    let p = fit_normalizer(std::slice::from_ref(&train), NormMode::MinMax).unwrap();
    let out = apply_normalizer(&train, &p);
    let ch0: Vec<f64> = out.frames().map(|f| f[0]).collect();
    assert_eq!(ch0, vec![0.0, 0.5, 1.0]);
}

#[test]
fn median_of_three_keeps_steps() {
    let s = series(&[0.0, 0.0, 0.0, 9.0, 9.0, 9.0]);
    let out = median_filter(&s, 3).unwrap();
    assert_eq!(out, s);
}

proptest! {
    #[test]
    fn streaming_equals_offline(values in prop::collection::vec(-20.0f64..20.0, 1..120), median in prop::sample::select(vec![1usize, 3, 5])) {
        let s = series(&values);
        let config = PreprocessConfig { median_window: Some(median), ..PreprocessConfig::default() };
        let offline: Vec<[f64; 6]> = config.apply(&s).unwrap().frames().collect();
        let mut p = StreamingPreprocessor::new(&config).unwrap();
        let mut online = Vec::new();
        for f in s.frames() {
            online.extend(p.push(f));
        }
        online.extend(p.finish());
        prop_assert_eq!(online, offline);
    }
}
