//! Confusion matrix and the IoU family.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ClassCatalog, LabelMap, UNLABELED};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("ground truth is {0}x{1} but prediction is {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("label {value} at index {index} outside {class_count} classes")]
    LabelOutOfRange {
        index: usize,
        value: u8,
        class_count: usize,
    },
    #[error("matrices have {0} and {1} classes")]
    ClassCountMismatch(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MiouMode {
    /// Mean over classes seen in ground truth or prediction.
    OverAll,
    /// Mean over classes present in ground truth.
    OverPresent,
}

/// Rows are ground-truth classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Option<Self> {
        (counts.len() == classes * classes).then_some(Self { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, gt: &LabelMap, pred: &LabelMap) -> Result<(), MetricsError> {
        if !gt.same_dims(pred) {
            return Err(MetricsError::DimensionMismatch(gt.width(), gt.height(), pred.width(), pred.height()));
        }
        let c = self.classes;
        for (index, (&g, &p)) in gt.labels().iter().zip(pred.labels()).enumerate() {
            if g == UNLABELED {
                continue;
            }
            for value in [g, p] {
                if value as usize >= c {
                    return Err(MetricsError::LabelOutOfRange {
                        index,
                        value,
                        class_count: c,
                    });
                }
            }
            self.counts[g as usize * c + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), MetricsError> {
        if other.classes != self.classes {
            return Err(MetricsError::ClassCountMismatch(self.classes, other.classes));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    fn row_sum(&self, c: usize) -> u64 {
        (0..self.classes).map(|j| self.get(c, j)).sum()
    }

    fn col_sum(&self, c: usize) -> u64 {
        (0..self.classes).map(|i| self.get(i, c)).sum()
    }

    /// `None` when the class appears in neither ground truth nor prediction.
    pub fn iou(&self, class: usize) -> Option<f64> {
        let tp = self.get(class, class);
        let denom = self.row_sum(class) + self.col_sum(class) - tp;
        (denom > 0).then(|| tp as f64 / denom as f64)
    }

    pub fn miou(&self, mode: MiouMode) -> Option<f64> {
        let ious: Vec<f64> = (0..self.classes)
            .filter(|&c| mode == MiouMode::OverAll || self.row_sum(c) > 0)
            .filter_map(|c| self.iou(c))
            .collect();
        (!ious.is_empty()).then(|| ious.iter().sum::<f64>() / ious.len() as f64)
    }

    pub fn pixel_accuracy(&self) -> Option<f64> {
        let total = self.total();
        let diag: u64 = (0..self.classes).map(|c| self.get(c, c)).sum();
        (total > 0).then(|| diag as f64 / total as f64)
    }

    pub fn report(&self, catalog: &ClassCatalog) -> MetricsReport {
        let per_class = (0..self.classes)
            .map(|c| ClassMetric {
                class: c,
                name: if c < catalog.class_count() {
                    catalog.name(c as u8).to_string()
                } else {
                    format!("class{c}")
                },
                iou: self.iou(c),
                pixels: self.row_sum(c),
            })
            .collect();
        MetricsReport {
            miou: self.miou(MiouMode::OverAll),
            per_class,
            pixel_accuracy: self.pixel_accuracy(),
            evaluated_pixels: self.total(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetric {
    pub class: usize,
    pub name: String,
    pub iou: Option<f64>,
    /// Ground-truth pixels of this class.
    pub pixels: u64,
}

/// Undefined values serialize as `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub miou: Option<f64>,
    pub per_class: Vec<ClassMetric>,
    pub pixel_accuracy: Option<f64>,
    pub evaluated_pixels: u64,
}
