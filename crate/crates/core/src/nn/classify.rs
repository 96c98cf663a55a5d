use serde::{Deserialize, Serialize};

/// Fraction of `mask` where `preds` matches `labels`; 0 on an empty mask.
pub fn accuracy(preds: &[usize], labels: &[usize], mask: &[usize]) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    let hit = mask.iter().filter(|&&i| preds[i] == labels[i]).count();
    hit as f64 / mask.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
}

/// Macro-averaged scores over all `num_classes` classes. A class with no
/// predictions has precision 0, one with no instances has recall 0, and F1
/// is 0 whenever precision + recall is 0.
pub fn classification_report(
    preds: &[usize],
    labels: &[usize],
    mask: &[usize],
    num_classes: usize,
) -> ClassificationReport {
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for &i in mask {
        let (p, y) = (preds[i], labels[i]);
        if p == y {
            tp[p] += 1;
        } else {
            if p < num_classes {
                fp[p] += 1;
            }
            fn_[y] += 1;
        }
    }
    let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
    for c in 0..num_classes {
        let p = ratio(tp[c], tp[c] + fp[c]);
        let r = ratio(tp[c], tp[c] + fn_[c]);
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        sp += p;
        sr += r;
        sf += f;
    }
    let k = num_classes.max(1) as f64;
    ClassificationReport {
        accuracy: accuracy(preds, labels, mask),
        macro_f1: sf / k,
        macro_precision: sp / k,
        macro_recall: sr / k,
    }
}

pub fn macro_f1(preds: &[usize], labels: &[usize], mask: &[usize], num_classes: usize) -> f64 {
    classification_report(preds, labels, mask, num_classes).macro_f1
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}
