//! Datasets: representation, file ingestion, synthetic generation and splitting.

mod csv_io;
mod idx;
mod split;
mod synthetic;

pub use csv_io::{load_csv, write_csv, LabelColumn};
pub use idx::{load_idx, write_idx, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use split::{split_sizes, stratified_split, SplitSpec};
pub use synthetic::{generate_synthetic, synthetic_centers, SyntheticSpec};

use crate::error::{Error, Result};
use crate::numerics::RealMatrix;

/// Feature matrix plus integer labels in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: RealMatrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: RealMatrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Dataset(format!("need at least 2 classes, got {num_classes}")));
        }
        if labels.len() != features.rows() {
            return Err(Error::Dataset(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.rows()
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::Dataset(format!(
                "sample {i} has label {y}, outside [0, {num_classes})"
            )));
        }
        if !features.is_finite() {
            return Err(Error::Dataset("features contain non-finite values".into()));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn features(&self) -> &RealMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_dims(&self) -> usize {
        self.features.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of samples of each class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order. Indices may repeat.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Same samples with labels replaced, e.g. by conductor group ids.
    pub fn relabel(&self, labels: Vec<usize>, num_classes: usize) -> Result<Dataset> {
        Dataset::new(self.features.clone(), labels, num_classes)
    }

    /// Widens the label space, keeping samples unchanged.
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Dataset> {
        if let Some(&max) = self.labels.iter().max() {
            if max >= num_classes {
                return Err(Error::Dataset(format!(
                    "label {max} does not fit in {num_classes} classes"
                )));
            }
        }
        self.num_classes = num_classes;
        Ok(self)
    }
}
