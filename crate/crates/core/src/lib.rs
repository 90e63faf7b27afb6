//! Accuracy-balanced ensemble classification.
//!
//! A *target* classifier is trained normally. Classes it handles poorly are
//! found from its validation confusion matrix and grouped by mutual
//! confusion. Each group gets a *complementary* classifier trained with
//! extra loss weight on that group, and a *conductor* classifier learns to
//! send every input to exactly one expert. Inference costs two forward
//! passes per sample no matter how many complementary models exist.
//!
//! The crate also carries the comparison baselines (weighted loss, bagging,
//! two-model averaging) and a seeded experiment harness that reports
//! per-class accuracy, mean accuracy and accuracy variance for each method.

// `!(x > y)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baselines;
pub mod classifier;
pub mod data;
pub mod error;
pub mod harmony;
pub mod harness;
pub mod numerics;
mod persist;

pub use analysis::{ConfusionMatrix, PerClassReport, WeakGroupPartition};
pub use baselines::{AveragingEnsemble, BaggingEnsemble, WeakeningPolicy};
pub use classifier::{Activation, ClassifierSpec, TrainConfig, TrainedClassifier};
pub use data::{Dataset, SplitSpec, SyntheticSpec};
pub use error::{Error, Result};
pub use harmony::{BiasMode, CostModel, HarmonyConfig, HarmonyModel};
pub use harness::{run_experiment, ExperimentConfig, ReportDocument};
pub use numerics::{Prng, RealMatrix, SgdConfig};
