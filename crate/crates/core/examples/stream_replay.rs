//! Streaming detection on a scripted feed (walk, fall, lie still) with alerts
//! posted to a local webhook.
//!
//! `cargo run --release --example stream_replay -- [scale] [epochs]`

use fallwatch::data::{Activity, ActivityCounts, SynthConfig};
use fallwatch::network::{Architecture, LstmModel};
use fallwatch::optim::{train, TrainConfig};
use fallwatch::pipeline::{prepare_synthetic, PipelineConfig};
use fallwatch::runtime::{run_stream, Notifier, Overflow, StreamConfig, SyntheticFeed, TestReceiver};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let scale: f64 = args.next().map_or(Ok(0.1), |s| s.parse())?;
    let epochs: usize = args.next().map_or(Ok(10), |s| s.parse())?;

    let synth = SynthConfig {
        counts: ActivityCounts::default().scaled(scale),
        ..SynthConfig::default()
    };
    let prepared = prepare_synthetic(&synth, &PipelineConfig::default())?;
    let mut model = LstmModel::new(Architecture::default(), 0.2, 42)?;
    model.norm_params = prepared.norm.clone();
    model.preprocess = prepared.preprocess.clone();
    let (model, _) = train(&model, &prepared.split, &TrainConfig { epochs, ..TrainConfig::default() })?;

    let receiver = TestReceiver::start(vec![200; 16])?;
    let feed = SyntheticFeed::new(
        vec![(Activity::Walking, 500), (Activity::FallForward, 100), (Activity::Lying, 500)],
        50.0,
        7,
    );
    let config = StreamConfig::default();
    let summary = run_stream(feed, &model, &config, Overflow::Block, Some(Notifier::http(receiver.url.clone())))?;

    for e in &summary.evaluations {
        let bar = "#".repeat((e.p_fall * 40.0).round() as usize);
        println!("{:>3} t={:>6.2}s p={:.3} {bar}", e.window_index, e.end_time, e.p_fall);
    }
    println!("{} alerts, webhook received:", summary.alerts.len());
    for body in receiver.bodies() {
        println!("  {body}");
    }
    Ok(())
}
