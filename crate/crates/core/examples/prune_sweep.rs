//! Train a small model, then prune it at several sparsities with fine-tuning.
//!
//! `cargo run --release --example prune_sweep -- [scale] [epochs]`

use fallwatch::network::{Architecture, LstmModel};
use fallwatch::optim::{train, TrainConfig};
use fallwatch::pipeline::{prepare_synthetic, PipelineConfig};
use fallwatch::data::{ActivityCounts, SynthConfig};
use fallwatch::pruning::{sweep, sweep_csv};

fn main() -> fallwatch::Result<()> {
    let mut args = std::env::args().skip(1);
    let scale: f64 = args.next().map_or(0.1, |s| s.parse().expect("scale"));
    let epochs: usize = args.next().map_or(8, |s| s.parse().expect("epochs"));

    let synth = SynthConfig {
        counts: ActivityCounts::default().scaled(scale),
        ..SynthConfig::default()
    };
    let prepared = prepare_synthetic(&synth, &PipelineConfig::default())?;
    let mut model = LstmModel::new(Architecture::default(), 0.2, 42)?;
    model.norm_params = prepared.norm.clone();
    model.preprocess = prepared.preprocess.clone();
    let (model, _) = train(&model, &prepared.split, &TrainConfig { epochs, ..TrainConfig::default() })?;

    let finetune = TrainConfig {
        epochs: 3,
        early_stop: None,
        ..TrainConfig::default()
    };
    let rows = sweep(&model, &prepared.split, &[0.0, 0.3, 0.6, 0.9], &finetune)?;
    let rows: Vec<_> = rows.into_iter().map(|(row, _)| row).collect();
    print!("{}", sweep_csv(&rows));
    Ok(())
}
