//! Generate the synthetic dataset, train the classifier and report test metrics.
//!
//! `cargo run --release --example train_synthetic -- [scale] [epochs]`

use std::time::Instant;

use fallwatch::data::{ActivityCounts, Label, SynthConfig};
use fallwatch::metrics::evaluate;
use fallwatch::network::{predict, Architecture, LstmModel};
use fallwatch::optim::{train, TrainConfig};
use fallwatch::pipeline::{prepare_synthetic, PipelineConfig};

fn main() -> fallwatch::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let scale: f64 = args.next().map_or(1.0, |s| s.parse().expect("scale"));
    let epochs: usize = args.next().map_or(30, |s| s.parse().expect("epochs"));

    let synth = SynthConfig {
        counts: ActivityCounts::default().scaled(scale),
        ..SynthConfig::default()
    };
    let prepared = prepare_synthetic(&synth, &PipelineConfig::default())?;
    println!(
        "{} train / {} test windows",
        prepared.split.train.len(),
        prepared.split.test.len()
    );

    let mut model = LstmModel::new(Architecture::default(), 0.2, 42)?;
    model.norm_params = prepared.norm.clone();
    model.preprocess = prepared.preprocess.clone();
    let config = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let (model, history) = train(&model, &prepared.split, &config)?;
    println!("trained {} epochs in {:.1?}", history.len(), start.elapsed());

    let labels: Vec<Label> = prepared.split.test.iter().map(|w| w.label).collect();
    let scores = prepared
        .split
        .test
        .iter()
        .map(|w| predict(&model, &w.values).map(|p| p[1]))
        .collect::<fallwatch::Result<Vec<f64>>>()?;
    let (report, _) = evaluate(&labels, &scores, 0.5)?;
    print!("{}", report.to_table());
    Ok(())
}
