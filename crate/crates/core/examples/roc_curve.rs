//! Confusion matrix, per-class report and ROC curve from raw scores.
//!
//! `cargo run --example roc_curve`

use fallwatch::data::Label;
use fallwatch::metrics::{evaluate, report, roc_csv, ConfusionMatrix};

fn main() -> fallwatch::Result<()> {
    // Hand-made scores with a tie across classes at 0.6.
    let labels = [0, 0, 0, 1, 0, 1, 1, 0, 1, 1].map(|y| if y == 1 { Label::Fall } else { Label::NonFall });
    let scores = [0.05, 0.2, 0.35, 0.4, 0.6, 0.6, 0.7, 0.8, 0.9, 0.95];

    let (r, points) = evaluate(&labels, &scores, 0.5)?;
    print!("{}", r.to_table());
    print!("{}", roc_csv(&points));

    // The same report from counts alone.
    let reference = report(&ConfusionMatrix::new(1083, 48, 35, 732));
    print!("{}", reference.to_table());
    println!("{}", reference.to_json());
    Ok(())
}
