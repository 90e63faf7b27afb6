use serde::{Deserialize, Serialize};

use crate::analysis::{confusion_matrix, per_class_report};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::harmony::HarmonyModel;

/// How one class's samples were routed and how each expert did on its share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDecomposition {
    pub class: usize,
    pub support: u64,
    /// Samples of this class routed to each expert.
    pub routed: Vec<u64>,
    /// Of those, how many the expert classified correctly.
    pub correct: Vec<u64>,
    /// Harmony accuracy on this class, measured through `HarmonyModel::predict`.
    pub measured_accuracy: f64,
}

impl ClassDecomposition {
    /// Accuracy of expert `g` on the samples routed to it; `None` if it got none.
    pub fn expert_accuracy(&self, g: usize) -> Option<f64> {
        (self.routed[g] > 0).then(|| self.correct[g] as f64 / self.routed[g] as f64)
    }

    /// `Σ_g (n_g / n) · a_g`, evaluated on the integer counts so it is exact.
    pub fn reconstructed_accuracy(&self) -> f64 {
        self.correct.iter().sum::<u64>() as f64 / self.support as f64
    }

    /// The same sum evaluated in floating point from the per-expert accuracies.
    pub fn reconstructed_accuracy_weighted(&self) -> f64 {
        (0..self.routed.len())
            .filter_map(|g| {
                self.expert_accuracy(g)
                    .map(|a| self.routed[g] as f64 / self.support as f64 * a)
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyDecomposition {
    pub classes: Vec<ClassDecomposition>,
}

impl AccuracyDecomposition {
    /// True when every class's reconstruction equals its measured accuracy bit for bit.
    pub fn is_exact(&self) -> bool {
        self.classes
            .iter()
            .all(|c| c.reconstructed_accuracy() == c.measured_accuracy)
    }
}

/// Splits each class's harmony accuracy into per-expert contributions.
///
/// Routing and expert evaluation are recomputed here independently of
/// `HarmonyModel::predict`, whose per-class accuracy is stored alongside.
pub fn decompose_accuracy(model: &HarmonyModel, test: &Dataset) -> Result<AccuracyDecomposition> {
    let k = model.num_classes();
    if test.is_empty() {
        return Err(Error::Dataset("test set is empty".into()));
    }
    let measured = per_class_report(&confusion_matrix(&model.predict(test.features())?, test.labels(), k)?)?;

    let routes = model.route(test.features())?;
    let experts = model.num_experts();
    let mut classes: Vec<ClassDecomposition> = (0..k)
        .map(|class| ClassDecomposition {
            class,
            support: 0,
            routed: vec![0; experts],
            correct: vec![0; experts],
            measured_accuracy: measured.per_class_accuracy[class],
        })
        .collect();
    for g in 0..experts {
        let rows: Vec<usize> = (0..routes.len()).filter(|&i| routes[i] == g).collect();
        if rows.is_empty() {
            continue;
        }
        let pred = model.expert(g).predict(&test.features().select_rows(&rows))?;
        for (&i, p) in rows.iter().zip(pred) {
            let y = test.labels()[i];
            classes[y].routed[g] += 1;
            if p == y {
                classes[y].correct[g] += 1;
            }
        }
    }
    for c in &mut classes {
        c.support = c.routed.iter().sum();
    }
    Ok(AccuracyDecomposition { classes })
}
