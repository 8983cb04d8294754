//! Binary classification metrics with fall (class 1) as the positive class.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp: u64,
}

impl ConfusionMatrix {
    pub fn new(tn: u64, fp: u64, fn_: u64, tp: u64) -> Self {
        Self { tn, fp, fn_, tp }
    }

    pub fn total(&self) -> u64 {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn add(&mut self, label: Label, prediction: Label) {
        match (label, prediction) {
            (Label::NonFall, Label::NonFall) => self.tn += 1,
            (Label::NonFall, Label::Fall) => self.fp += 1,
            (Label::Fall, Label::NonFall) => self.fn_ += 1,
            (Label::Fall, Label::Fall) => self.tp += 1,
        }
    }
}

/// Counts `(label, prediction)` pairs. Both slices hold 0 or 1.
pub fn confusion(labels: &[u8], predictions: &[u8]) -> Result<ConfusionMatrix> {
    if labels.len() != predictions.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels but {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (i, (&y, &p)) in labels.iter().zip(predictions).enumerate() {
        let (Some(y), Some(p)) = (Label::from_index(y as usize), Label::from_index(p as usize)) else {
            return Err(Error::InvalidInput(format!(
                "sample {i}: values must be 0 or 1, got label {y} prediction {p}"
            )));
        };
        cm.add(y, p);
    }
    Ok(cm)
}

/// Confusion matrix from labels and P(fall) at a decision threshold
/// (`score ≥ threshold` predicts fall).
pub fn confusion_at(labels: &[Label], scores: &[f64], threshold: f64) -> Result<ConfusionMatrix> {
    if labels.len() != scores.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels but {} scores",
            labels.len(),
            scores.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&y, &s) in labels.iter().zip(scores) {
        cm.add(y, if s >= threshold { Label::Fall } else { Label::NonFall });
    }
    Ok(cm)
}

/// A ratio that may have had a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub degenerate: bool,
}

impl Ratio {
    fn of(num: u64, den: u64) -> Self {
        if den == 0 {
            Self {
                value: 0.0,
                degenerate: true,
            }
        } else {
            Self {
                value: num as f64 / den as f64,
                degenerate: false,
            }
        }
    }

    fn harmonic(a: Ratio, b: Ratio) -> Self {
        let sum = a.value + b.value;
        if sum == 0.0 {
            Self {
                value: 0.0,
                degenerate: true,
            }
        } else {
            Self {
                value: 2.0 * a.value * b.value / sum,
                degenerate: a.degenerate || b.degenerate,
            }
        }
    }

    /// Whole percent, rounded half-up.
    pub fn percent(&self) -> u32 {
        percent(self.value)
    }
}

/// Whole percent, rounded half-up.
pub fn percent(x: f64) -> u32 {
    (x * 100.0 + 0.5).floor() as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub confusion: ConfusionMatrix,
    pub non_fall: ClassMetrics,
    pub fall: ClassMetrics,
    pub specificity: f64,
    pub sensitivity: f64,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
}

pub fn report(cm: &ConfusionMatrix) -> ClassReport {
    let class = |correct: u64, predicted: u64, actual: u64| {
        let precision = Ratio::of(correct, predicted);
        let recall = Ratio::of(correct, actual);
        ClassMetrics {
            precision,
            recall,
            f1: Ratio::harmonic(precision, recall),
            support: actual,
        }
    };
    let non_fall = class(cm.tn, cm.tn + cm.fn_, cm.tn + cm.fp);
    let fall = class(cm.tp, cm.tp + cm.fp, cm.tp + cm.fn_);
    ClassReport {
        confusion: *cm,
        specificity: non_fall.recall.value,
        sensitivity: fall.recall.value,
        accuracy: Ratio::of(cm.tn + cm.tp, cm.total()).value,
        non_fall,
        fall,
        auc: None,
    }
}

impl ClassReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table in whole percents.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10}{:>11}{:>8}{:>10}{:>9}", "class", "precision", "recall", "f1-score", "support");
        for (name, m) in [("non-fall", &self.non_fall), ("fall", &self.fall)] {
            let flag = |r: &Ratio| if r.degenerate { "*" } else { " " };
            let _ = writeln!(
                s,
                "{:<10}{:>10}%{}{:>6}%{}{:>8}%{}{:>8}",
                name,
                m.precision.percent(),
                flag(&m.precision),
                m.recall.percent(),
                flag(&m.recall),
                m.f1.percent(),
                flag(&m.f1),
                m.support
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "accuracy     {:.4} ({}%)", self.accuracy, percent(self.accuracy));
        let _ = writeln!(s, "sensitivity  {:.4} ({}%)", self.sensitivity, percent(self.sensitivity));
        let _ = writeln!(s, "specificity  {:.4} ({}%)", self.specificity, percent(self.specificity));
        if let Some(auc) = self.auc {
            let _ = writeln!(s, "auc          {auc:.4}");
        }
        let c = &self.confusion;
        let _ = writeln!(s, "confusion    tn={} fp={} fn={} tp={}", c.tn, c.fp, c.fn_, c.tp);
        if [&self.non_fall, &self.fall]
            .iter()
            .any(|m| m.precision.degenerate || m.recall.degenerate || m.f1.degenerate)
        {
            let _ = writeln!(s, "* zero denominator, reported as 0");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores at or above this value are called falls. The first point uses +inf.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve with one point per distinct score, plus the (0,0) origin.
pub fn roc(labels: &[Label], scores: &[f64]) -> Result<Vec<RocPoint>> {
    if labels.len() != scores.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels but {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!("score {i} is not finite")));
    }
    let positives = labels.iter().filter(|&&l| l == Label::Fall).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateInput(
            "ROC needs both classes present in the labels".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            match labels[order[i]] {
                Label::Fall => tp += 1,
                Label::NonFall => fp += 1,
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        });
    }
    Ok(points)
}

/// Trapezoidal area under a ROC curve.
pub fn auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum()
}

pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    s
}

/// Full evaluation of scored windows at a threshold.
pub fn evaluate(labels: &[Label], scores: &[f64], threshold: f64) -> Result<(ClassReport, Vec<RocPoint>)> {
    let cm = confusion_at(labels, scores, threshold)?;
    if cm.total() == 0 {
        return Err(Error::InvalidInput("no samples".into()));
    }
    let mut rep = report(&cm);
    let points = roc(labels, scores)?;
    rep.auc = Some(auc(&points));
    Ok((rep, points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng};

    /// P(s₊ > s₋) + ½·P(s₊ = s₋) over all positive/negative pairs.
    fn pairwise_auc(labels: &[Label], scores: &[f64]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == Label::Fall && lj == Label::NonFall {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    fn labels(bits: &[u8]) -> Vec<Label> {
        bits.iter().map(|&b| Label::from_index(b as usize).unwrap()).collect()
    }

    #[test]
    fn confusion_examples() {
        let cm = confusion(&[0, 1, 0, 1], &[0, 1, 0, 1]).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(2, 0, 0, 2));
        let cm = confusion(&[0, 0], &[1, 1]).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(0, 2, 0, 0));
        assert!(confusion(&[0, 1], &[0]).is_err());
        assert!(confusion(&[0, 2], &[0, 1]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn confusion_reconstructs_reference_counts() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut pairs: Vec<(u8, u8)> = [((0, 0), 1083), ((0, 1), 48), ((1, 0), 35), ((1, 1), 732)]
            .into_iter()
            .flat_map(|(pair, n)| std::iter::repeat_n(pair, n))
            .collect();
        for i in (1..pairs.len()).rev() {
            pairs.swap(i, rng.random_range(0..=i));
        }
        let (y, p): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let cm = confusion(&y, &p).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(1083, 48, 35, 732));
        assert_eq!(cm.total(), 1898);
    }

    #[test]
    fn report_matches_reference_percentages() {
        let r = report(&ConfusionMatrix::new(1083, 48, 35, 732));
        let pct = |m: &ClassMetrics| (m.precision.percent(), m.recall.percent(), m.f1.percent());
        assert_eq!(pct(&r.non_fall), (97, 96, 96));
        assert_eq!(pct(&r.fall), (94, 95, 95));
        assert_eq!(percent(r.specificity), 96);
        assert!((r.accuracy - 0.9563).abs() < 1e-4);
        assert!((r.non_fall.precision.value - 1083.0 / 1118.0).abs() < 1e-15);
        assert!((r.fall.recall.value - 732.0 / 767.0).abs() < 1e-15);
    }

    #[test]
    fn report_trivial_cases() {
        let r = report(&ConfusionMatrix::new(10, 0, 0, 10));
        for m in [&r.non_fall, &r.fall] {
            assert_eq!((m.precision.value, m.recall.value, m.f1.value), (1.0, 1.0, 1.0));
        }
        assert_eq!(r.accuracy, 1.0);

        let r = report(&ConfusionMatrix::new(10, 0, 10, 0));
        assert_eq!(r.fall.precision.value, 0.0);
        assert!(r.fall.precision.degenerate);
        assert_eq!(r.fall.recall.value, 0.0);
        assert!(!r.fall.recall.degenerate);
        assert!(r.to_table().contains('*'));
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(percent(0.955), 96);
        assert_eq!(percent(0.945), 95);
        assert_eq!(percent(0.9449), 94);
    }

    #[test]
    fn report_json_has_every_field() {
        let json = report(&ConfusionMatrix::new(5, 1, 2, 4)).to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["confusion", "non_fall", "fall", "specificity", "sensitivity", "accuracy"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        for key in ["precision", "recall", "f1", "support"] {
            assert!(v["fall"].get(key).is_some(), "{key}");
        }
        assert_eq!(v["confusion"]["fn"], 2);
    }

    #[test]
    fn roc_hand_enumerated() {
        let pts = roc(&labels(&[0, 0, 1, 1]), &[0.1, 0.4, 0.35, 0.8]).unwrap();
        let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(xy, vec![(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]);
        assert!((auc(&pts) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn roc_perfect_and_flat() {
        let y = labels(&[0, 0, 1, 1]);
        let pts = roc(&y, &[0.1, 0.2, 0.8, 0.9]).unwrap();
        assert!(pts.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(auc(&pts), 1.0);

        let pts = roc(&y, &[0.5; 4]).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!((pts[1].fpr, pts[1].tpr), (1.0, 1.0));
        assert_eq!(auc(&pts), 0.5);
    }

    #[test]
    fn roc_rejects_single_class() {
        assert!(matches!(
            roc(&labels(&[1, 1]), &[0.2, 0.3]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(roc(&labels(&[0, 1]), &[0.2, f64::NAN]).is_err());
    }

    #[test]
    fn roc_csv_header() {
        let pts = roc(&labels(&[0, 1]), &[0.25, 0.75]).unwrap();
        let csv = roc_csv(&pts);
        assert!(csv.starts_with("threshold,fpr,tpr\ninf,0,0\n0.75,0,1\n"));
    }

    #[test]
    fn auc_matches_pairwise_oracle_on_seeded_sets() {
        for seed in 0..50u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..=200);
            let mut y: Vec<Label> = (0..n)
                .map(|_| if rng.random_bool(0.4) { Label::Fall } else { Label::NonFall })
                .collect();
            y[0] = Label::Fall;
            y[1] = Label::NonFall;
            // Coarse scores so that ties occur.
            let s: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 20.0).floor() / 20.0).collect();
            let pts = roc(&y, &s).unwrap();
            assert!((auc(&pts) - pairwise_auc(&y, &s)).abs() < 1e-9, "seed {seed}");
        }
    }

    proptest! {
        #[test]
        fn roc_is_monotone_and_auc_bounded(
            data in prop::collection::vec((any::<bool>(), 0u8..30), 2..120)
        ) {
            let mut y: Vec<Label> = data.iter().map(|&(b, _)| if b { Label::Fall } else { Label::NonFall }).collect();
            y[0] = Label::Fall;
            y[1] = Label::NonFall;
            let s: Vec<f64> = data.iter().map(|&(_, v)| v as f64 / 29.0).collect();
            let pts = roc(&y, &s).unwrap();
            prop_assert_eq!((pts[0].fpr, pts[0].tpr), (0.0, 0.0));
            let last = pts.last().unwrap();
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
            for w in pts.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
            let a = auc(&pts);
            prop_assert!((0.0..=1.0).contains(&a));
            // Strictly increasing transform leaves the AUC unchanged.
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert!((auc(&roc(&y, &t).unwrap()) - a).abs() < 1e-12);
        }

        #[test]
        fn confusion_sums_and_order_invariance(
            pairs in prop::collection::vec((0u8..2, 0u8..2), 1..200),
            rot in 0usize..200
        ) {
            let (y, p): (Vec<u8>, Vec<u8>) = pairs.iter().copied().unzip();
            let cm = confusion(&y, &p).unwrap();
            prop_assert_eq!(cm.total(), pairs.len() as u64);
            let mut shuffled = pairs.clone();
            shuffled.rotate_left(rot % pairs.len());
            shuffled.reverse();
            let (y2, p2): (Vec<u8>, Vec<u8>) = shuffled.into_iter().unzip();
            prop_assert_eq!(report(&confusion(&y2, &p2).unwrap()), report(&cm));
        }
    }
}
