//! Command-line front end. Exit codes: 0 success, 1 validation or usage
//! error, 2 runtime error.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{load_csv, write_csv, Activity, ActivityCounts, LabeledRecording, SynthConfig};
use crate::error::{Error, Result};
use crate::network::{Architecture, LstmModel};
use crate::optim::{train, EarlyStop, TrainConfig};
use crate::pipeline::{evaluate_windows, prepare, PipelineConfig, Prepared};
use crate::pruning::{finetune, magnitude_prune_scoped, sparsity, sweep, sweep_csv, PruneScope};
use crate::runtime::stream::replay_frames;
use crate::runtime::{
    load_model, run_stream, save_model, FallAlert, Fingerprint, ModelFile, Notifier, Overflow, StreamConfig,
    SyntheticFeed,
};
use crate::signal::{NormMode, PreprocessConfig};

#[derive(Parser, Debug)]
#[command(name = "fallwatch", version, about = "Wearable fall detection toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the synthetic dataset as CSV.
    Gen(GenArgs),
    /// Train a model and save it.
    Train(TrainArgs),
    /// Prune a trained model and fine-tune it.
    Prune(PruneArgs),
    /// Evaluate a model on the test split.
    Eval(EvalArgs),
    /// Prune at several sparsities and report the trade-off.
    Sweep(SweepArgs),
    /// Run streaming inference on a replayed or simulated feed.
    Stream(StreamArgs),
    /// Send a test alert to the webhook.
    NotifyTest(NotifyArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Shared {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 50.0)]
    pub sample_rate_hz: f64,
    #[arg(long, default_value_t = 50)]
    pub window: usize,
    #[arg(long, default_value_t = 25)]
    pub stride: usize,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Dataset CSV; the synthetic generator is used when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Fraction of the default synthetic counts to generate.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = crate::pipeline::DEFAULT_TEST_FRACTION)]
    pub test_fraction: f64,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum NormArg {
    Minmax,
    Zscore,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f64,
    #[arg(long, value_enum, default_value_t = NormArg::Minmax)]
    pub norm: NormArg,
    /// Train for every epoch instead of stopping once the loss plateaus.
    #[arg(long)]
    pub no_early_stop: bool,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PruneArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    pub sparsity: f64,
    #[arg(long, default_value_t = 10)]
    pub finetune_epochs: usize,
    /// Rank weights within each tensor instead of globally.
    #[arg(long)]
    pub per_tensor: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Write the JSON report here as well as to stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value = "roc.csv")]
    pub roc: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3")]
    pub sparsities: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub finetune_epochs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct WebhookArgs {
    #[arg(long, env = "FALLWATCH_WEBHOOK_URL")]
    pub webhook_url: Option<String>,
    /// Append-only log of alerts that could not be delivered.
    #[arg(long, default_value = "undelivered-alerts.jsonl")]
    pub journal: PathBuf,
    #[arg(long, default_value = "fallwatch-0")]
    pub device_id: String,
    /// First retry delay in seconds; doubles on each retry.
    #[arg(long, default_value_t = 1.0)]
    pub retry_base_s: f64,
}

#[derive(Args, Debug)]
pub struct StreamArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long)]
    pub model: PathBuf,
    /// Replay this CSV; without it a synthetic live feed is simulated.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Live feed script, `CODE:frames` pairs such as `NF1:500,F1:150,NF3:300`.
    #[arg(long, default_value = "NF1:500,F1:150,NF3:500")]
    pub script: String,
    /// Pace the live feed at this multiple of real time (0 = as fast as possible).
    #[arg(long, default_value_t = 0.0)]
    pub speed: f64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 3)]
    pub consecutive: usize,
    #[arg(long, default_value_t = 10.0)]
    pub refractory_s: f64,
    #[command(flatten)]
    pub webhook: WebhookArgs,
    /// Per-window log CSV (`window_index,end_time,p_fall`).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct NotifyArgs {
    #[command(flatten)]
    pub webhook: WebhookArgs,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Prune(a) => prune_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Stream(a) => stream_cmd(a),
        Command::NotifyTest(a) => notify_cmd(a),
    }
}

fn synth_config(shared: &Shared, scale: f64) -> Result<SynthConfig> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidSpec(format!("scale must be positive, got {scale}")));
    }
    if shared.window == 0 || shared.stride == 0 {
        return Err(Error::InvalidSpec("window and stride must be at least 1".into()));
    }
    Ok(SynthConfig {
        seed: shared.seed,
        sample_rate_hz: shared.sample_rate_hz,
        counts: ActivityCounts::default().scaled(scale),
        window_len: shared.window,
        stride: shared.stride,
    })
}

fn recordings(shared: &Shared, data: &DataArgs) -> Result<Vec<LabeledRecording>> {
    match &data.data {
        Some(path) => load_csv(path, shared.sample_rate_hz),
        None => Ok(crate::data::generate_synthetic(&synth_config(shared, data.scale)?)),
    }
}

fn pipeline(shared: &Shared, data: &DataArgs, preprocess: PreprocessConfig, norm_mode: NormMode) -> PipelineConfig {
    PipelineConfig {
        preprocess,
        norm_mode,
        window_len: shared.window,
        stride: shared.stride,
        test_fraction: data.test_fraction,
        split_seed: shared.seed,
        fixed_norm: None,
    }
}

/// Rebuilds the split a saved model was trained on, normalized with the
/// model's own statistics.
fn split_for(model: &LstmModel, shared: &Shared, data: &DataArgs) -> Result<Prepared> {
    if model.arch.window != shared.window {
        return Err(Error::InvalidSpec(format!(
            "model expects windows of {}, --window is {}",
            model.arch.window, shared.window
        )));
    }
    let mut cfg = pipeline(shared, data, model.preprocess.clone(), model.norm_params.mode);
    cfg.fixed_norm = Some(model.norm_params.clone());
    prepare(&recordings(shared, data)?, &cfg)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn gen(a: GenArgs) -> Result<()> {
    let recs = crate::data::generate_synthetic(&synth_config(&a.shared, a.scale)?);
    let file = std::fs::File::create(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_csv(&mut w, &recs).map_err(|e| Error::io(&a.out, e))?;
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    println!("wrote {} recordings to {}", recs.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let norm_mode = match a.norm {
        NormArg::Minmax => NormMode::MinMax,
        NormArg::Zscore => NormMode::ZScore,
    };
    let preprocess = PreprocessConfig {
        sample_rate_hz: a.shared.sample_rate_hz,
        ..PreprocessConfig::default()
    };
    let prepared = prepare(
        &recordings(&a.shared, &a.data)?,
        &pipeline(&a.shared, &a.data, preprocess, norm_mode),
    )?;
    let arch = Architecture {
        window: a.shared.window,
        ..Architecture::default()
    };
    let mut model = LstmModel::new(arch, a.dropout, a.shared.seed)?;
    model.norm_params = prepared.norm.clone();
    model.preprocess = prepared.preprocess.clone();
    let config = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: a.shared.seed,
        early_stop: (!a.no_early_stop).then(EarlyStop::default),
        clip_global_norm: a.clip_norm,
        ..TrainConfig::default()
    };
    if a.epochs == 0 {
        eprintln!("warning: --epochs 0, saving the initialized model untrained");
    }
    println!(
        "training on {} windows, testing on {}",
        prepared.split.train.len(),
        prepared.split.test.len()
    );
    let (model, history) = train(&model, &prepared.split, &config)?;
    if let Some(path) = &a.history {
        write_file(path, &history.to_csv())?;
    }
    if let Some(last) = history.last() {
        println!(
            "epoch {}: train loss {:.5}, test loss {:.5}, test accuracy {:.4}",
            last.epoch, last.train_loss, last.test_loss, last.test_acc
        );
    }
    let mut file = ModelFile::new(model);
    file.fingerprint = Some(Fingerprint::of(&config));
    save_model(&file, &a.out)?;
    println!("saved {}", a.out.display());
    Ok(())
}

fn finetune_config(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        seed,
        early_stop: None,
        ..TrainConfig::default()
    }
}

fn prune_cmd(a: PruneArgs) -> Result<()> {
    let source = load_model(&a.model)?;
    let prepared = split_for(&source.model, &a.shared, &a.data)?;
    let scope = if a.per_tensor {
        PruneScope::PerTensor
    } else {
        PruneScope::Global
    };
    let pruned = magnitude_prune_scoped(&source.model, a.sparsity, scope)?;
    let config = finetune_config(a.shared.seed, a.finetune_epochs);
    let (tuned, _) = finetune(&pruned, &prepared.split, &config)?;
    let (report, _) = evaluate_windows(&tuned.model, &prepared.split.test, 0.5)?;
    println!(
        "sparsity {:.4}: accuracy {:.4}, fall recall {:.4}, specificity {:.4}",
        sparsity(&tuned.model.params),
        report.accuracy,
        report.sensitivity,
        report.specificity
    );
    let file = ModelFile {
        model: tuned.model,
        mask: Some(tuned.mask),
        provenance: Some(tuned.provenance),
        fingerprint: Some(Fingerprint::of(&config)),
    };
    save_model(&file, &a.out)?;
    println!("saved {}", a.out.display());
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let file = load_model(&a.model)?;
    let prepared = split_for(&file.model, &a.shared, &a.data)?;
    let (report, roc) = evaluate_windows(&file.model, &prepared.split.test, a.threshold)?;
    print!("{}", report.to_table());
    let json = report.to_json();
    println!("{json}");
    if let Some(path) = &a.report {
        write_file(path, &format!("{json}\n"))?;
    }
    write_file(&a.roc, &crate::metrics::roc_csv(&roc))?;
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let file = load_model(&a.model)?;
    let prepared = split_for(&file.model, &a.shared, &a.data)?;
    let config = finetune_config(a.shared.seed, a.finetune_epochs);
    let rows: Vec<_> = sweep(&file.model, &prepared.split, &a.sparsities, &config)?
        .into_iter()
        .map(|(row, _)| row)
        .collect();
    let csv = sweep_csv(&rows);
    print!("{csv}");
    if let Some(path) = &a.out {
        write_file(path, &csv)?;
    }
    Ok(())
}

fn notifier(w: &WebhookArgs) -> Result<Option<Notifier>> {
    let Some(url) = &w.webhook_url else {
        return Ok(None);
    };
    if !(w.retry_base_s >= 0.0 && w.retry_base_s.is_finite()) {
        return Err(Error::InvalidSpec("retry delay must be non-negative".into()));
    }
    Ok(Some(
        Notifier::http(url.clone())
            .with_policy(crate::runtime::RetryPolicy {
                max_attempts: 3,
                base_delay: std::time::Duration::from_secs_f64(w.retry_base_s),
            })
            .with_journal(&w.journal),
    ))
}

fn parse_script(script: &str) -> Result<Vec<(Activity, usize)>> {
    script
        .split(',')
        .map(|part| {
            let (code, n) = part
                .split_once(':')
                .ok_or_else(|| Error::InvalidSpec(format!("script entry `{part}` is not CODE:frames")))?;
            let n = n
                .trim()
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("bad frame count in `{part}`")))?;
            Ok((code.trim().parse()?, n))
        })
        .collect()
}

fn stream_cmd(a: StreamArgs) -> Result<()> {
    let file = load_model(&a.model)?;
    let model = file.model;
    if model.preprocess.sample_rate_hz != a.shared.sample_rate_hz {
        return Err(Error::InvalidSpec(format!(
            "model was trained at {} Hz, --sample-rate-hz is {}",
            model.preprocess.sample_rate_hz, a.shared.sample_rate_hz
        )));
    }
    let config = StreamConfig {
        threshold: a.threshold,
        consecutive: a.consecutive,
        refractory_s: a.refractory_s,
        stride: a.shared.stride,
        device_id: a.webhook.device_id.clone(),
    };
    config.validate()?;
    let notifier = notifier(&a.webhook)?;
    let summary = match &a.replay {
        Some(path) => {
            let frames = replay_frames(&load_csv(path, a.shared.sample_rate_hz)?);
            run_stream(frames, &model, &config, Overflow::Block, notifier)?
        }
        None => {
            let feed = SyntheticFeed::new(parse_script(&a.script)?, a.shared.sample_rate_hz, a.shared.seed)
                .paced(a.speed);
            // An unpaced feed is a replay in disguise; only a paced one is live.
            let overflow = if a.speed > 0.0 { Overflow::DropOldest } else { Overflow::Block };
            run_stream(feed, &model, &config, overflow, notifier)?
        }
    };
    if let Some(path) = &a.log {
        let mut s = String::from("window_index,end_time,p_fall\n");
        for e in &summary.evaluations {
            s.push_str(&format!("{},{},{}\n", e.window_index, e.end_time, e.p_fall));
        }
        write_file(path, &s)?;
    }
    for alert in &summary.alerts {
        println!("{}", crate::runtime::alert_payload(alert));
    }
    let failed = summary.deliveries.iter().filter(|d| !d.delivered).count();
    println!(
        "{} frames, {} evaluations, {} alerts, {} undelivered, {} dropped (overflow), {} dropped (invalid)",
        summary.frames,
        summary.evaluations.len(),
        summary.alerts.len(),
        failed,
        summary.dropped_overflow,
        summary.dropped_rejected
    );
    Ok(())
}

fn notify_cmd(a: NotifyArgs) -> Result<()> {
    let Some(mut notifier) = notifier(&a.webhook)? else {
        return Err(Error::InvalidSpec(
            "no webhook: pass --webhook-url or set FALLWATCH_WEBHOOK_URL".into(),
        ));
    };
    let alert = FallAlert {
        event_time: 0.0,
        probability: 1.0,
        window_index: 0,
        device_id: a.webhook.device_id.clone(),
    };
    let result = notifier.notify(&alert);
    println!("{}", serde_json::to_string(&result).expect("result serializes"));
    if result.delivered {
        Ok(())
    } else {
        Err(Error::Io {
            path: a.webhook.journal.clone(),
            source: std::io::Error::other(format!(
                "delivery failed after {} attempts: {}; alert journaled",
                result.attempts,
                result.error.unwrap_or_default()
            )),
        })
    }
}
