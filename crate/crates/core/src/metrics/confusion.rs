use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::labels::{LabelMap, IGNORE};

/// `counts[g * C + p]` = pixels with ground truth `g` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_counts(num_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != num_classes * num_classes {
            return Err(Error::dim(format!(
                "{} counts for {num_classes} classes",
                counts.len()
            )));
        }
        Ok(Self { num_classes, counts })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row(&self, c: usize) -> u64 {
        (0..self.num_classes).map(|p| self.get(c, p)).sum()
    }

    pub fn col(&self, c: usize) -> u64 {
        (0..self.num_classes).map(|g| self.get(g, c)).sum()
    }

    /// Adds one prediction/ground-truth pair. Ground-truth pixels equal to
    /// [`IGNORE`] are skipped.
    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
            return Err(Error::dim(format!(
                "prediction is {}x{}, ground truth {}x{}",
                pred.height(),
                pred.width(),
                gt.height(),
                gt.width()
            )));
        }
        let c = self.num_classes;
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            if g == IGNORE {
                continue;
            }
            let (p, g) = (p as usize, g as usize);
            if p >= c || g >= c {
                return Err(Error::data(format!(
                    "label pair (gt {g}, pred {p}) outside {c} classes"
                )));
            }
            self.counts[g * c + p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::dim(format!(
                "merging {}-class matrix into {}-class matrix",
                other.num_classes, self.num_classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn report(&self) -> Result<EvalReport> {
        let total = self.total();
        if total == 0 {
            return Err(Error::data("confusion matrix is empty"));
        }
        let c = self.num_classes;
        let mut iou = Vec::with_capacity(c);
        let mut accuracy = Vec::with_capacity(c);
        let mut diag = 0u64;
        for k in 0..c {
            let tp = self.get(k, k);
            let (row, col) = (self.row(k), self.col(k));
            diag += tp;
            let union = row + col - tp;
            iou.push((union > 0).then(|| tp as f64 / union as f64));
            accuracy.push((row > 0).then(|| tp as f64 / row as f64));
        }
        Ok(EvalReport {
            mean_iou: mean_present(&iou),
            class_avg_acc: mean_present(&accuracy),
            pixel_acc: diag as f64 / total as f64,
            iou,
            accuracy,
            stage_miou: None,
        })
    }
}

fn mean_present(v: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = v.iter().flatten().copied().collect();
    if present.is_empty() {
        return 0.0;
    }
    present.iter().sum::<f64>() / present.len() as f64
}

/// Metrics of one evaluation. Per-class entries are `None` for classes that
/// the means skip (no pixels in ground truth or prediction for IoU, no
/// ground-truth pixels for accuracy).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub iou: Vec<Option<f64>>,
    pub accuracy: Vec<Option<f64>>,
    pub mean_iou: f64,
    pub class_avg_acc: f64,
    pub pixel_acc: f64,
    pub stage_miou: Option<[f64; 6]>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

impl EvalReport {
    /// Human-readable table. `names` labels the class rows; missing names
    /// fall back to the class index.
    pub fn to_text(&self, names: &[String]) -> String {
        let mut out = String::new();
        let width = names.iter().map(String::len).max().unwrap_or(0).max(8);
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}", "class", "iou", "accuracy");
        for (k, (iou, acc)) in self.iou.iter().zip(&self.accuracy).enumerate() {
            let name = names.get(k).cloned().unwrap_or_else(|| k.to_string());
            let _ = writeln!(out, "{name:<width$}  {:>8}  {:>8}", cell(*iou), cell(*acc));
        }
        let _ = writeln!(out, "{:<width$}  {:>8.4}", "mean_iou", self.mean_iou);
        let _ = writeln!(out, "{:<width$}  {:>8.4}", "class_avg_acc", self.class_avg_acc);
        let _ = writeln!(out, "{:<width$}  {:>8.4}", "pixel_acc", self.pixel_acc);
        if let Some(stages) = &self.stage_miou {
            for (k, m) in stages.iter().enumerate() {
                let _ = writeln!(out, "{:<width$}  {m:>8.4}", format!("stage_{}", k + 1));
            }
        }
        out
    }

    /// CSV with header `class,iou,accuracy`; summary rows use the iou column.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("class,iou,accuracy\n");
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x}"));
        for (k, (iou, acc)) in self.iou.iter().zip(&self.accuracy).enumerate() {
            let name = names.get(k).cloned().unwrap_or_else(|| k.to_string());
            let _ = writeln!(out, "{name},{},{}", opt(*iou), opt(*acc));
        }
        if let Some(stages) = &self.stage_miou {
            for (k, m) in stages.iter().enumerate() {
                let _ = writeln!(out, "stage_{},{m},", k + 1);
            }
        }
        let _ = writeln!(out, "mean_iou,{},", self.mean_iou);
        let _ = writeln!(out, "class_avg_acc,{},", self.class_avg_acc);
        let _ = writeln!(out, "pixel_acc,{},", self.pixel_acc);
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text(&[]))
    }
}
