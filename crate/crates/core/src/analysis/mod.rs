//! Confusion statistics, per-class accuracy metrics, and weak-class grouping.

mod union_find;

pub use union_find::UnionFind;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::mean_and_population_variance;

/// Default margin below the mean accuracy that marks a class as weak.
pub const DEFAULT_DETECTION_DELTA: f64 = 0.04;
/// Default symmetric confusion rate that links two weak classes.
pub const DEFAULT_COUPLING_THRESHOLD: f64 = 0.05;

/// `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k < 2 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::Dimension(format!(
                "confusion matrix must be square with at least 2 classes, got {k} rows"
            )));
        }
        Ok(Self { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Samples per true class.
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }

    /// Fraction of class `truth` predicted as `predicted`; 0 for an empty row.
    pub fn rate(&self, truth: usize, predicted: usize) -> f64 {
        let row: u64 = self.counts[truth].iter().sum();
        if row == 0 {
            0.0
        } else {
            self.counts[truth][predicted] as f64 / row as f64
        }
    }

    /// Mean of the two directed confusion rates between `i` and `j`.
    pub fn symmetric_confusion(&self, i: usize, j: usize) -> f64 {
        (self.rate(i, j) + self.rate(j, i)) / 2.0
    }
}

/// Tallies predictions against ground truth.
pub fn confusion_matrix(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (i, (&p, &t)) in predicted.iter().zip(truth).enumerate() {
        if p >= num_classes || t >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "sample {i}: label pair ({t}, {p}) outside [0, {num_classes})"
            )));
        }
        counts[t][p] += 1;
    }
    ConfusionMatrix::from_counts(counts)
}

/// Per-class accuracy with its arithmetic mean and population variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassReport {
    pub per_class_accuracy: Vec<f64>,
    pub mean: f64,
    /// `(1/K) Σ (acc_k − mean)²`
    pub variance: f64,
    pub support: Vec<u64>,
}

impl PerClassReport {
    /// Report for known accuracies. `support` defaults to 1 per class.
    pub fn from_accuracies(accuracies: Vec<f64>, support: Option<Vec<u64>>) -> Result<Self> {
        let k = accuracies.len();
        if k == 0 {
            return Err(Error::InvalidArgument("no classes".into()));
        }
        if accuracies.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidArgument(format!(
                "accuracies must lie in [0, 1]: {accuracies:?}"
            )));
        }
        let support = support.unwrap_or_else(|| vec![1; k]);
        if support.len() != k {
            return Err(Error::Dimension(format!("{} supports for {k} classes", support.len())));
        }
        let (mean, variance) = mean_and_population_variance(&accuracies);
        Ok(Self {
            per_class_accuracy: accuracies,
            mean,
            variance,
            support,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.per_class_accuracy.len()
    }
}

/// `acc_k = counts[k][k] / rowsum_k`, with mean and population variance.
pub fn per_class_report(cm: &ConfusionMatrix) -> Result<PerClassReport> {
    let support = cm.row_sums();
    if let Some(class) = support.iter().position(|&s| s == 0) {
        return Err(Error::ZeroSupport { class });
    }
    let acc = (0..cm.num_classes())
        .map(|k| cm.get(k, k) as f64 / support[k] as f64)
        .collect();
    PerClassReport::from_accuracies(acc, Some(support))
}

/// Classes whose accuracy is below `mean − delta`, ascending.
///
/// Fails when every class qualifies, since nothing would remain for the
/// target model.
pub fn detect_weak_classes(report: &PerClassReport, delta: f64) -> Result<Vec<usize>> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be >= 0, got {delta}")));
    }
    let cutoff = report.mean - delta;
    let weak: Vec<usize> = report
        .per_class_accuracy
        .iter()
        .enumerate()
        .filter(|(_, &a)| a < cutoff)
        .map(|(k, _)| k)
        .collect();
    if weak.len() == report.num_classes() {
        return Err(Error::AllClassesWeak);
    }
    Ok(weak)
}

/// Strong classes plus ordered groups of weak classes.
///
/// Group `g` (0-based here) is served by complementary model `g + 1`; the
/// conductor labels strong classes 0 and members of group `g` with `g + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakGroupPartition {
    strong: Vec<usize>,
    groups: Vec<Vec<usize>>,
}

impl WeakGroupPartition {
    /// Validates that strong and groups partition `[0, num_classes)`.
    pub fn new(num_classes: usize, strong: Vec<usize>, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; num_classes];
        for &k in strong.iter().chain(groups.iter().flatten()) {
            if k >= num_classes {
                return Err(Error::InvalidArgument(format!("class {k} outside [0, {num_classes})")));
            }
            if seen[k] {
                return Err(Error::InvalidArgument(format!("class {k} listed twice")));
            }
            seen[k] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("class {k} is not covered")));
        }
        if groups.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument("empty weak group".into()));
        }
        if strong.is_empty() {
            return Err(Error::AllClassesWeak);
        }
        Ok(Self { strong, groups })
    }

    /// Partition whose strong set is everything outside `groups`.
    pub fn from_groups(num_classes: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut in_group = vec![false; num_classes];
        for &k in groups.iter().flatten() {
            if k < num_classes {
                in_group[k] = true;
            }
        }
        let strong = (0..num_classes).filter(|&k| !in_group[k]).collect();
        Self::new(num_classes, strong, groups)
    }

    /// Everything strong, no complementary models.
    pub fn all_strong(num_classes: usize) -> Self {
        Self {
            strong: (0..num_classes).collect(),
            groups: Vec::new(),
        }
    }

    pub fn strong(&self) -> &[usize] {
        &self.strong
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn num_classes(&self) -> usize {
        self.strong.len() + self.groups.iter().map(Vec::len).sum::<usize>()
    }

    pub fn weak_classes(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.groups.iter().flatten().copied().collect();
        w.sort_unstable();
        w
    }

    /// Expert id for a class: 0 if strong, `g` for the g-th group (1-based).
    pub fn expert_of(&self, class: usize) -> Option<usize> {
        if self.strong.contains(&class) {
            return Some(0);
        }
        self.groups.iter().position(|g| g.contains(&class)).map(|g| g + 1)
    }
}

/// Links weak classes whose symmetric confusion rate reaches
/// `coupling_threshold` and returns the connected components as groups,
/// ordered by smallest member. Unlinked weak classes form singleton groups.
pub fn group_weak_classes(cm: &ConfusionMatrix, weak: &[usize], coupling_threshold: f64) -> Result<WeakGroupPartition> {
    let k = cm.num_classes();
    let mut weak: Vec<usize> = weak.to_vec();
    weak.sort_unstable();
    weak.dedup();
    if let Some(&c) = weak.iter().find(|&&c| c >= k) {
        return Err(Error::InvalidArgument(format!("weak class {c} outside [0, {k})")));
    }
    if weak.len() == k {
        return Err(Error::AllClassesWeak);
    }
    let mut uf = UnionFind::new(weak.len());
    for a in 0..weak.len() {
        for b in a + 1..weak.len() {
            if cm.symmetric_confusion(weak[a], weak[b]) >= coupling_threshold {
                uf.union(a, b);
            }
        }
    }
    let groups = uf
        .components()
        .into_iter()
        .map(|c| c.into_iter().map(|i| weak[i]).collect())
        .collect();
    WeakGroupPartition::from_groups(k, groups)
}

/// Support-weighted accuracy of the strong set and of each weak group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub strong: f64,
    pub weak: Vec<f64>,
}

pub fn group_accuracy(report: &PerClassReport, partition: &WeakGroupPartition) -> Result<GroupAccuracy> {
    if partition.num_classes() != report.num_classes() {
        return Err(Error::Dimension(format!(
            "partition covers {} classes, report has {}",
            partition.num_classes(),
            report.num_classes()
        )));
    }
    let weighted = |classes: &[usize]| {
        let total: u64 = classes.iter().map(|&k| report.support[k]).sum();
        classes
            .iter()
            .map(|&k| report.per_class_accuracy[k] * report.support[k] as f64)
            .sum::<f64>()
            / total as f64
    };
    Ok(GroupAccuracy {
        strong: weighted(partition.strong()),
        weak: partition.groups().iter().map(|g| weighted(g)).collect(),
    })
}
