//! Generate the synthetic dataset, write it as CSV and summarize it.
//!
//! `cargo run --example generate_dataset -- [scale] [out.csv]`

use std::collections::BTreeMap;

use fallwatch::data::{generate_synthetic, read_csv, write_csv, ActivityCounts, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let scale: f64 = args.next().map_or(Ok(0.1), |s| s.parse())?;
    let out = args.next();

    let config = SynthConfig {
        counts: ActivityCounts::default().scaled(scale),
        ..SynthConfig::default()
    };
    let recordings = generate_synthetic(&config);

    let mut by_activity: BTreeMap<_, (usize, usize, f64)> = BTreeMap::new();
    for r in &recordings {
        let e = by_activity.entry(r.activity).or_default();
        e.0 += 1;
        e.1 += r.len();
        e.2 = e.2.max(r.peak_acceleration_g());
    }
    println!("{:<16}{:>6}{:>10}{:>10}", "activity", "recs", "samples", "peak g");
    for (activity, (n, samples, peak)) in &by_activity {
        println!("{:<16}{n:>6}{samples:>10}{peak:>10.2}", activity.to_string());
    }

    let mut csv = Vec::new();
    write_csv(&mut csv, &recordings)?;
    let back = read_csv(csv.as_slice(), config.sample_rate_hz)?;
    println!("{} recordings, {} bytes of CSV, reread {} recordings", recordings.len(), csv.len(), back.len());
    if let Some(path) = out {
        std::fs::write(&path, &csv)?;
        println!("wrote {path}");
    }
    Ok(())
}
