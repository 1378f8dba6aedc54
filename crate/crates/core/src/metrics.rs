//! Instance-aware evaluation and mean-rank tables.
//!
//! Instance matching uses the same rule as the instance-wise loss: a label
//! instance is detected when at least one predicted voxel overlaps it, and a
//! predicted instance is false when it overlaps no label voxel. Volume
//! difference is measured in voxels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{label_components_exact, ComponentLabeling};
use crate::volume::BinaryMask;

/// Metrics for one label/prediction pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Dice similarity coefficient; 1 when both masks are empty.
    pub dsc: f64,
    pub label_instances: usize,
    pub predicted_instances: usize,
    /// Label instances with no predicted voxel.
    pub missed_instances: usize,
    /// Predicted instances with no label voxel.
    pub false_instances: usize,
    /// `2 TP / (2 TP + FP + FN)` over instances; 1 when there are none.
    pub lesionwise_f1: f64,
    /// `|M - N|`.
    pub simple_lesion_count: f64,
    /// `|sum(pred) - sum(label)|` in voxels.
    pub volume_difference: f64,
}

pub fn evaluate_pair(label: &BinaryMask, pred: &BinaryMask) -> Result<MetricReport> {
    label.shape().ensure_same(pred.shape())?;
    evaluate_labeled(
        label,
        &label_components_exact(label),
        pred,
        &label_components_exact(pred),
    )
}

/// [`evaluate_pair`] with both labelings supplied by the caller.
pub fn evaluate_labeled(
    label: &BinaryMask,
    cc_label: &ComponentLabeling,
    pred: &BinaryMask,
    cc_pred: &ComponentLabeling,
) -> Result<MetricReport> {
    label.shape().ensure_same(pred.shape())?;
    cc_label.shape().ensure_same(label.shape())?;
    cc_pred.shape().ensure_same(pred.shape())?;
    let (l, p) = (label.data(), pred.data());
    let mut both = 0usize;
    let mut label_total = 0usize;
    let mut pred_total = 0usize;
    for (&a, &b) in l.iter().zip(p) {
        label_total += a as usize;
        pred_total += b as usize;
        both += (a & b) as usize;
    }
    let dsc = if label_total + pred_total == 0 {
        1.0
    } else {
        2.0 * both as f64 / (label_total + pred_total) as f64
    };

    let missed = cc_label
        .instances()
        .iter()
        .filter(|inst| inst.voxels.iter().all(|&v| p[v] == 0))
        .count();
    let false_instances = cc_pred
        .instances()
        .iter()
        .filter(|inst| inst.voxels.iter().all(|&v| l[v] == 0))
        .count();
    let n = cc_label.count();
    let m = cc_pred.count();
    let tp = n - missed;
    let denom = 2 * tp + false_instances + missed;
    let lesionwise_f1 = if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    };
    Ok(MetricReport {
        dsc,
        label_instances: n,
        predicted_instances: m,
        missed_instances: missed,
        false_instances,
        lesionwise_f1,
        simple_lesion_count: n.abs_diff(m) as f64,
        volume_difference: pred_total.abs_diff(label_total) as f64,
    })
}

/// Aggregate over subjects, mirroring the validation-table columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub subjects: usize,
    pub mean_dsc: f64,
    pub total_missed: usize,
    pub subjects_with_missed: usize,
    /// Subjects where every label instance was missed (and there was at least one).
    pub subjects_all_missed: usize,
    pub total_false: usize,
    pub subjects_with_false: usize,
    pub subjects_clean: usize,
    pub mean_lesionwise_f1: f64,
    pub mean_simple_lesion_count: f64,
    pub mean_volume_difference: f64,
}

pub fn summarize(reports: &[MetricReport]) -> MetricSummary {
    let n = reports.len();
    let mean = |f: fn(&MetricReport) -> f64| {
        if n == 0 {
            0.0
        } else {
            reports.iter().map(f).sum::<f64>() / n as f64
        }
    };
    MetricSummary {
        subjects: n,
        mean_dsc: mean(|r| r.dsc),
        total_missed: reports.iter().map(|r| r.missed_instances).sum(),
        subjects_with_missed: reports.iter().filter(|r| r.missed_instances > 0).count(),
        subjects_all_missed: reports
            .iter()
            .filter(|r| r.label_instances > 0 && r.missed_instances == r.label_instances)
            .count(),
        total_false: reports.iter().map(|r| r.false_instances).sum(),
        subjects_with_false: reports.iter().filter(|r| r.false_instances > 0).count(),
        subjects_clean: reports
            .iter()
            .filter(|r| r.missed_instances == 0 && r.false_instances == 0)
            .count(),
        mean_lesionwise_f1: mean(|r| r.lesionwise_f1),
        mean_simple_lesion_count: mean(|r| r.simple_lesion_count),
        mean_volume_difference: mean(|r| r.volume_difference),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

/// How tied values are ranked. Both give tied entries the same, lower rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieRule {
    /// 1, 1, 2: the next distinct value takes the next integer.
    #[default]
    Dense,
    /// 1, 1, 3: the next distinct value skips the tied positions.
    Competition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankColumn {
    pub name: String,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub rows: Vec<String>,
    pub columns: Vec<RankColumn>,
    pub values: Vec<Vec<f64>>,
    /// 1-based rank per cell.
    pub ranks: Vec<Vec<usize>>,
    pub mean_ranks: Vec<f64>,
}

fn rank_column(values: &[f64], direction: Direction, tie: TieRule) -> Vec<usize> {
    let better = |a: f64, b: f64| match direction {
        Direction::HigherIsBetter => a > b,
        Direction::LowerIsBetter => a < b,
    };
    let mut distinct: Vec<f64> = Vec::new();
    for &v in values {
        if !distinct.contains(&v) {
            distinct.push(v);
        }
    }
    values
        .iter()
        .map(|&v| match tie {
            TieRule::Dense => 1 + distinct.iter().filter(|&&d| better(d, v)).count(),
            TieRule::Competition => 1 + values.iter().filter(|&&d| better(d, v)).count(),
        })
        .collect()
}

/// Ranks every column by its direction and averages ranks per row.
pub fn rank_table(
    rows: Vec<String>,
    columns: Vec<RankColumn>,
    values: Vec<Vec<f64>>,
    tie: TieRule,
) -> Result<RankTable> {
    if values.len() != rows.len() {
        return Err(Error::RaggedTable {
            row: values.len(),
            expected: rows.len(),
            found: values.len(),
        });
    }
    for (r, row) in values.iter().enumerate() {
        if row.len() != columns.len() {
            return Err(Error::RaggedTable {
                row: r,
                expected: columns.len(),
                found: row.len(),
            });
        }
        if let Some(c) = row.iter().position(|v| v.is_nan()) {
            return Err(Error::NanCell { row: r, column: c });
        }
    }
    let mut ranks = vec![vec![0usize; columns.len()]; rows.len()];
    for (c, col) in columns.iter().enumerate() {
        let column: Vec<f64> = values.iter().map(|row| row[c]).collect();
        for (r, rank) in rank_column(&column, col.direction, tie)
            .into_iter()
            .enumerate()
        {
            ranks[r][c] = rank;
        }
    }
    let mean_ranks = ranks
        .iter()
        .map(|row| {
            if row.is_empty() {
                0.0
            } else {
                row.iter().sum::<usize>() as f64 / row.len() as f64
            }
        })
        .collect();
    Ok(RankTable {
        rows,
        columns,
        values,
        ranks,
        mean_ranks,
    })
}
