//! Classification reports and ROC-AUC.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ClassifierError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    /// Index 0 = not depressed, 1 = depressed.
    pub classes: [ClassMetrics; 2],
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: [[usize; 2]; 2],
    pub macro_avg: ClassMetrics,
    pub weighted_avg: ClassMetrics,
    pub total: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-class precision, recall and F1 (0/0 counts as 0), accuracy and
/// confusion matrix.
pub fn report(y_true: &[u8], y_pred: &[u8]) -> Result<ClassificationReport, ClassifierError> {
    if y_true.len() != y_pred.len() {
        return Err(ClassifierError::LengthMismatch { left: y_true.len(), right: y_pred.len() });
    }
    let mut confusion = [[0usize; 2]; 2];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t > 1 || p > 1 {
            return Err(ClassifierError::InvalidLabel(t.max(p)));
        }
        confusion[t as usize][p as usize] += 1;
    }
    let total = y_true.len();
    let classes = [0usize, 1].map(|c| {
        let tp = confusion[c][c];
        let predicted = confusion[0][c] + confusion[1][c];
        let support = confusion[c][0] + confusion[c][1];
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        ClassMetrics { precision, recall, f1: f1(precision, recall), support }
    });
    let avg = |weight: &dyn Fn(&ClassMetrics) -> f64| {
        let wsum: f64 = classes.iter().map(weight).sum();
        let mean = |m: &dyn Fn(&ClassMetrics) -> f64| {
            if wsum == 0.0 {
                0.0
            } else {
                classes.iter().map(|c| weight(c) * m(c)).sum::<f64>() / wsum
            }
        };
        ClassMetrics {
            precision: mean(&|c| c.precision),
            recall: mean(&|c| c.recall),
            f1: mean(&|c| c.f1),
            support: total,
        }
    };
    let macro_avg = avg(&|_| 1.0);
    let weighted_avg = avg(&|c| c.support as f64);
    Ok(ClassificationReport {
        classes,
        accuracy: ratio(confusion[0][0] + confusion[1][1], total),
        confusion,
        macro_avg,
        weighted_avg,
        total,
    })
}

impl ClassificationReport {
    /// Aligned table in the familiar precision / recall / f1-score / support
    /// layout, followed by the confusion matrix.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>14} {:>10} {:>10} {:>10} {:>10}", "", "precision", "recall", "f1-score", "support");
        let _ = writeln!(s);
        for (i, c) in self.classes.iter().enumerate() {
            let _ = writeln!(s, "{:>14} {:>10.2} {:>10.2} {:>10.2} {:>10}", i, c.precision, c.recall, c.f1, c.support);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>14} {:>10} {:>10} {:>10.2} {:>10}", "accuracy", "", "", self.accuracy, self.total);
        for (name, m) in [("macro avg", &self.macro_avg), ("weighted avg", &self.weighted_avg)] {
            let _ = writeln!(s, "{:>14} {:>10.2} {:>10.2} {:>10.2} {:>10}", name, m.precision, m.recall, m.f1, m.support);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "confusion (rows = true, cols = predicted)");
        let _ = writeln!(s, "{:>14} {:>10} {:>10}", "", "pred 0", "pred 1");
        for (i, row) in self.confusion.iter().enumerate() {
            let _ = writeln!(s, "{:>14} {:>10} {:>10}", format!("true {i}"), row[0], row[1]);
        }
        s
    }
}

/// Area under the ROC curve via the rank-sum statistic, ties averaged.
/// `None` when only one class is present.
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Option<f64> {
    let n = y_true.len().min(scores.len());
    let pos = y_true[..n].iter().filter(|&&v| v == 1).count();
    let neg = n - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean.
        let mean_rank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if y_true[k] == 1 {
                rank_sum += mean_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos * neg) as f64)
}
