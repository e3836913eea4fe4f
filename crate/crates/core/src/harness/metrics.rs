//! Pixel metrics (precision, recall, F1, OA, IoU) and the instance-count error.

use crate::error::Result;
use crate::grid::{BinaryMask, InstanceIdMask};
use crate::retrieve::connectivity_search;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn count(pred: &BinaryMask, gt: &BinaryMask) -> Result<Self> {
        pred.dims().ensure_same(gt.dims())?;
        let mut c = Self::default();
        for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `TP / (TP + FP)`; with no predicted positives, 1 if there is also nothing to find, else 0.
    pub fn precision(&self) -> f64 {
        match self.tp + self.fp {
            0 if self.fn_ == 0 => 1.0,
            0 => 0.0,
            d => self.tp as f64 / d as f64,
        }
    }

    /// `TP / (TP + FN)`; with no actual positives, 1 if nothing was predicted either, else 0.
    pub fn recall(&self) -> f64 {
        match self.tp + self.fn_ {
            0 if self.fp == 0 => 1.0,
            0 => 0.0,
            d => self.tp as f64 / d as f64,
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn oa(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total().max(1) as f64
    }

    pub fn iou(&self) -> f64 {
        match self.tp + self.fp + self.fn_ {
            0 => 1.0,
            d => self.tp as f64 / d as f64,
        }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

/// Metrics of one prediction against one ground truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRow {
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub oa: f64,
    pub iou: f64,
}

impl From<ConfusionCounts> for MetricRow {
    fn from(counts: ConfusionCounts) -> Self {
        Self {
            counts,
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            oa: counts.oa(),
            iou: counts.iou(),
        }
    }
}

pub fn evaluate(pred: &BinaryMask, gt: &BinaryMask) -> Result<MetricRow> {
    Ok(ConfusionCounts::count(pred, gt)?.into())
}

/// `|components(pred) - K_gt|`, components under 8-connected search.
pub fn instance_count_error(pred: &BinaryMask, gt_instances: &InstanceIdMask) -> Result<f64> {
    pred.dims().ensure_same(gt_instances.dims())?;
    let (_, table) = connectivity_search(pred);
    Ok(table.count().abs_diff(gt_instances.instance_count()) as f64)
}

/// Evaluation of one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleMetrics {
    pub index: u64,
    pub y_cls: u8,
    pub metrics: MetricRow,
    pub pred_instances: usize,
    pub gt_instances: usize,
    /// `|pred_instances - gt_instances|`
    pub instance_error: f64,
}

/// Split-level report. Pixel metrics come from counts pooled over all
/// samples; `instance_count_mae` is the mean per-sample instance-count error.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub oa: f64,
    pub iou: f64,
    pub instance_count_mae: f64,
    pub rows: Vec<SampleMetrics>,
}

impl MetricReport {
    pub fn from_rows(rows: Vec<SampleMetrics>) -> Self {
        let mut counts = ConfusionCounts::default();
        for r in &rows {
            counts += r.metrics.counts;
        }
        let mae = if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| r.instance_error).sum::<f64>() / rows.len() as f64
        };
        let m = MetricRow::from(counts);
        Self {
            counts,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            oa: m.oa,
            iou: m.iou,
            instance_count_mae: mae,
            rows,
        }
    }

    /// Per-sample CSV, raw counts included.
    pub fn rows_csv(&self) -> String {
        let mut s = String::from(
            "index,y_cls,tp,fp,fn,tn,precision,recall,f1,oa,iou,pred_instances,gt_instances,instance_error\n",
        );
        for r in &self.rows {
            let m = &r.metrics;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.index,
                r.y_cls,
                m.counts.tp,
                m.counts.fp,
                m.counts.fn_,
                m.counts.tn,
                m.precision,
                m.recall,
                m.f1,
                m.oa,
                m.iou,
                r.pred_instances,
                r.gt_instances,
                r.instance_error
            ));
        }
        s
    }
}
