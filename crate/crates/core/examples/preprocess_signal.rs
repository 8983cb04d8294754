//! Median + Butterworth preprocessing on one synthetic fall, and the filter's
//! magnitude response.
//!
//! `cargo run --example preprocess_signal`

use std::f64::consts::PI;

use fallwatch::data::{synthesize_recording, Activity, GRAVITY};
use fallwatch::signal::{FilterSpec, PreprocessConfig, RawSeries, SosFilter, StreamingPreprocessor};

/// Steady-state amplitude, by projecting the settled output onto sin and cos.
fn gain_at(freq_hz: f64, fs: f64) -> f64 {
    let mut f = SosFilter::lowpass(FilterSpec::default(), fs).unwrap();
    let (n, settle) = (5000, 1000);
    let (mut s, mut c) = (0.0, 0.0);
    for i in 0..n {
        let w = 2.0 * PI * freq_hz * i as f64 / fs;
        let y = f.process(w.sin());
        if i >= settle {
            s += y * w.sin();
            c += y * w.cos();
        }
    }
    2.0 / (n - settle) as f64 * s.hypot(c)
}

fn main() -> fallwatch::Result<()> {
    let fs = 50.0;
    println!("order-4 low-pass, 5 Hz cutoff at {fs} Hz");
    for freq in [1.0, 2.0, 5.0, 10.0, 20.0] {
        println!("  {freq:>4} Hz  gain {:.4}", gain_at(freq, fs));
    }

    let frames = synthesize_recording(Activity::FallForward, 100, fs, 1);
    let raw = RawSeries::from_frames(&frames, fs)?;
    let config = PreprocessConfig::default();
    let offline = config.apply(&raw)?;

    let mut online = StreamingPreprocessor::new(&config)?;
    let mut streamed = Vec::new();
    for f in &frames {
        streamed.extend(online.push(*f));
    }
    streamed.extend(online.finish());
    let worst = (0..offline.len())
        .flat_map(|i| {
            let a = offline.frame(i);
            let b = streamed[i];
            (0..6).map(move |c| (a[c] - b[c]).abs())
        })
        .fold(0.0, f64::max);

    let peak = |s: &RawSeries| {
        (0..s.len())
            .map(|i| s.frame(i)[..3].iter().map(|v| v * v).sum::<f64>().sqrt() / GRAVITY)
            .fold(0.0, f64::max)
    };
    println!("peak |a| raw {:.2} g, filtered {:.2} g", peak(&raw), peak(&offline));
    println!("streaming vs offline max difference {worst:.2e}");
    Ok(())
}
