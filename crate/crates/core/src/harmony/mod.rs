//! Target, complementary and conductor models combined into one routed classifier.
//!
//! Training runs in four stages:
//!
//! 1. train the target model on the training split;
//! 2. evaluate it on the validation split, mark classes whose accuracy falls
//!    more than `detection_delta` below the mean as weak, and group weak
//!    classes that confuse each other (or take groups from the config);
//! 3. for every group train a complementary model, a full K-way classifier
//!    whose loss weights that group by `complementary_weight`;
//! 4. relabel the training split by group (strong = 0, group g = g) and
//!    train the conductor on it.
//!
//! At inference the conductor picks one expert per sample and only that
//! expert runs, so every prediction costs two forward passes.

mod decompose;

pub use decompose::{decompose_accuracy, AccuracyDecomposition, ClassDecomposition};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    confusion_matrix, detect_weak_classes, group_weak_classes, per_class_report, WeakGroupPartition,
    DEFAULT_COUPLING_THRESHOLD, DEFAULT_DETECTION_DELTA,
};
use crate::classifier::{self, respec_output, ClassifierSpec, TrainConfig, TrainedClassifier};
use crate::data::Dataset;
use crate::error::{Error, Result, StageExt};
use crate::numerics::{derive_seed, RealMatrix, SgdConfig};
use crate::persist;

/// How a complementary model is biased toward its weak group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasMode {
    /// Multiply the loss of weak-group samples by `complementary_weight`.
    Weights,
    /// Repeat every weak-group sample `ceil(complementary_weight)` times.
    Oversample,
}

impl std::str::FromStr for BiasMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weights" => Ok(BiasMode::Weights),
            "oversample" => Ok(BiasMode::Oversample),
            other => Err(Error::InvalidArgument(format!("unknown bias mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonyConfig {
    pub detection_delta: f64,
    pub coupling_threshold: f64,
    /// Loss weight of the weak group in its complementary model; must exceed 1.
    pub complementary_weight: f64,
    /// Fixed weak groups; skips detection and grouping when set.
    pub explicit_weak_groups: Option<Vec<Vec<usize>>>,
    pub bias_mode: BiasMode,
    pub sgd: SgdConfig,
    /// Root of the per-sub-model seeds.
    pub seed: u64,
}

impl Default for HarmonyConfig {
    fn default() -> Self {
        Self {
            detection_delta: DEFAULT_DETECTION_DELTA,
            coupling_threshold: DEFAULT_COUPLING_THRESHOLD,
            complementary_weight: 4.0,
            explicit_weak_groups: None,
            bias_mode: BiasMode::Weights,
            sgd: SgdConfig::default(),
            seed: 0,
        }
    }
}

impl HarmonyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.complementary_weight > 1.0 && self.complementary_weight.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "complementary_weight must exceed 1, got {}",
                self.complementary_weight
            )));
        }
        if !(self.detection_delta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "detection_delta must be >= 0, got {}",
                self.detection_delta
            )));
        }
        if !(self.coupling_threshold >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "coupling_threshold must be >= 0, got {}",
                self.coupling_threshold
            )));
        }
        self.sgd.validate()
    }

    /// Training config of the sub-model identified by `key`.
    pub fn train_config(&self, key: &str) -> TrainConfig {
        let seed = derive_seed(self.seed, key);
        TrainConfig::new(
            SgdConfig {
                shuffle_seed: derive_seed(seed, "shuffle"),
                ..self.sgd.clone()
            },
            seed,
        )
    }
}

/// Forward passes needed to classify one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub forward_passes_per_sample: usize,
    /// Passes per sample attributed to each stage, e.g. `conductor` and `expert`.
    pub components: Vec<(String, usize)>,
}

/// Rows pushed through each network during one inference call.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PassCounts {
    pub conductor: u64,
    /// Index 0 is the target, `g` is complementary model `g`.
    pub experts: Vec<u64>,
}

impl PassCounts {
    pub fn total(&self) -> u64 {
        self.conductor + self.experts.iter().sum::<u64>()
    }
}

/// Conductor labels: 0 for strong classes, `g` for members of the g-th group.
pub fn build_conductor_labels(labels: &[usize], partition: &WeakGroupPartition) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|&y| {
            partition
                .expert_of(y)
                .ok_or_else(|| Error::InvalidArgument(format!("class {y} is not covered by the partition")))
        })
        .collect()
}

/// `lambda_c` for classes of group `group_index` (0-based), 1 elsewhere.
pub fn build_complementary_weights(
    partition: &WeakGroupPartition,
    group_index: usize,
    lambda_c: f64,
    num_classes: usize,
) -> Result<Vec<f64>> {
    let group = partition.groups().get(group_index).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "group index {group_index} out of range for {} groups",
            partition.groups().len()
        ))
    })?;
    if !(lambda_c > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "complementary weight must exceed 1, got {lambda_c}"
        )));
    }
    let mut w = vec![1.0; num_classes];
    for &k in group {
        if k >= num_classes {
            return Err(Error::InvalidArgument(format!("class {k} outside [0, {num_classes})")));
        }
        w[k] = lambda_c;
    }
    Ok(w)
}

/// Training set with every sample of `group` repeated `ceil(lambda_c)` times.
fn oversample(train: &Dataset, group: &[usize], lambda_c: f64) -> Dataset {
    let copies = lambda_c.ceil() as usize;
    let mut idx = Vec::with_capacity(train.n_samples() * 2);
    for (i, y) in train.labels().iter().enumerate() {
        let reps = if group.contains(y) { copies } else { 1 };
        idx.extend(std::iter::repeat_n(i, reps));
    }
    train.subset(&idx)
}

/// The routed ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonyModel {
    target: TrainedClassifier,
    complementaries: Vec<TrainedClassifier>,
    /// `None` only for the degenerate pass-through model.
    conductor: Option<TrainedClassifier>,
    partition: WeakGroupPartition,
    config: HarmonyConfig,
}

/// Trains target, complementary and conductor models.
///
/// When no class is weak the result is a pass-through model that routes
/// everything to the target. Every weak class is an error.
pub fn train_harmony(
    train: &Dataset,
    val: &Dataset,
    spec: &ClassifierSpec,
    config: &HarmonyConfig,
) -> Result<HarmonyModel> {
    config.validate()?;
    if val.is_empty() {
        return Err(Error::Dataset("validation set is empty".into()));
    }
    let k = spec.output_classes;

    let target = classifier::train(train, spec, &config.train_config("target")).stage("target")?;

    let partition = match &config.explicit_weak_groups {
        Some(groups) => WeakGroupPartition::from_groups(k, groups.clone()).stage("partition")?,
        None => {
            let detect = || -> Result<WeakGroupPartition> {
                let pred = target.predict(val.features())?;
                let cm = confusion_matrix(&pred, val.labels(), k)?;
                let report = per_class_report(&cm)?;
                let weak = detect_weak_classes(&report, config.detection_delta)?;
                if weak.is_empty() {
                    return Ok(WeakGroupPartition::all_strong(k));
                }
                group_weak_classes(&cm, &weak, config.coupling_threshold)
            };
            detect().stage("detection")?
        }
    };

    if partition.groups().is_empty() {
        return HarmonyModel::new(target, Vec::new(), None, partition, config.clone());
    }

    let conductor_spec = respec_output(spec, 1 + partition.groups().len()).stage("conductor")?;
    let conductor_train = train
        .relabel(
            build_conductor_labels(train.labels(), &partition)?,
            conductor_spec.output_classes,
        )
        .stage("conductor")?;

    // complementary models and the conductor are independent of each other
    let (complementaries, conductor) = std::thread::scope(|scope| {
        let handles: Vec<_> = partition
            .groups()
            .iter()
            .enumerate()
            .map(|(g, group)| {
                let partition = &partition;
                scope.spawn(move || -> Result<TrainedClassifier> {
                    let stage = format!("complementary[{}]", g + 1);
                    let base = config.train_config(&stage);
                    match config.bias_mode {
                        BiasMode::Weights => {
                            let w = build_complementary_weights(partition, g, config.complementary_weight, k)?;
                            classifier::train(train, spec, &base.with_class_weights(w))
                        }
                        BiasMode::Oversample => {
                            let biased = oversample(train, group, config.complementary_weight);
                            classifier::train(&biased, spec, &base)
                        }
                    }
                    .stage(&stage)
                })
            })
            .collect();
        let conductor =
            classifier::train(&conductor_train, &conductor_spec, &config.train_config("conductor")).stage("conductor");
        let comps: Result<Vec<_>> = handles
            .into_iter()
            .map(|h| h.join().expect("complementary training panicked"))
            .collect();
        (comps, conductor)
    });

    HarmonyModel::new(target, complementaries?, Some(conductor?), partition, config.clone())
}

#[derive(Serialize, Deserialize)]
struct HarmonyHeader {
    format_version: u32,
    kind: String,
    partition: WeakGroupPartition,
    config: HarmonyConfig,
    has_conductor: bool,
    /// Byte length of each embedded classifier file: target, complementaries, conductor.
    sections: Vec<u64>,
}

impl HarmonyModel {
    pub fn new(
        target: TrainedClassifier,
        complementaries: Vec<TrainedClassifier>,
        conductor: Option<TrainedClassifier>,
        partition: WeakGroupPartition,
        config: HarmonyConfig,
    ) -> Result<Self> {
        let k = target.num_classes();
        if partition.num_classes() != k {
            return Err(Error::Dimension(format!(
                "partition covers {} classes, target has {k}",
                partition.num_classes()
            )));
        }
        if partition.groups().len() != complementaries.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weak groups but {} complementary models",
                partition.groups().len(),
                complementaries.len()
            )));
        }
        let base = target.spec();
        for c in &complementaries {
            if c.spec() != base {
                return Err(Error::InvalidArgument(
                    "complementary models must share the target architecture".into(),
                ));
            }
        }
        match &conductor {
            Some(c) => {
                if *c.spec() != respec_output(base, 1 + complementaries.len())? {
                    return Err(Error::InvalidArgument(format!(
                        "conductor must be the target architecture with {} outputs",
                        1 + complementaries.len()
                    )));
                }
            }
            None if !complementaries.is_empty() => {
                return Err(Error::InvalidArgument("complementary models need a conductor".into()));
            }
            None => {}
        }
        Ok(Self {
            target,
            complementaries,
            conductor,
            partition,
            config,
        })
    }

    pub fn target(&self) -> &TrainedClassifier {
        &self.target
    }

    pub fn complementaries(&self) -> &[TrainedClassifier] {
        &self.complementaries
    }

    pub fn conductor(&self) -> Option<&TrainedClassifier> {
        self.conductor.as_ref()
    }

    pub fn partition(&self) -> &WeakGroupPartition {
        &self.partition
    }

    pub fn config(&self) -> &HarmonyConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.target.num_classes()
    }

    /// True when no weak class was found and everything goes to the target.
    pub fn is_degenerate(&self) -> bool {
        self.complementaries.is_empty()
    }

    /// Expert 0 is the target, expert `g` is complementary model `g`.
    pub fn expert(&self, id: usize) -> &TrainedClassifier {
        if id == 0 {
            &self.target
        } else {
            &self.complementaries[id - 1]
        }
    }

    pub fn num_experts(&self) -> usize {
        1 + self.complementaries.len()
    }

    fn check_dims(&self, features: &RealMatrix) -> Result<()> {
        if features.cols() != self.target.spec().input_dim {
            return Err(Error::Dimension(format!(
                "features have {} columns, model expects {}",
                features.cols(),
                self.target.spec().input_dim
            )));
        }
        Ok(())
    }

    /// Expert chosen by the conductor for each row; ties go to the lower id.
    pub fn route(&self, features: &RealMatrix) -> Result<Vec<usize>> {
        self.check_dims(features)?;
        match &self.conductor {
            Some(c) => c.predict(features),
            None => Ok(vec![0; features.rows()]),
        }
    }

    pub fn predict(&self, features: &RealMatrix) -> Result<Vec<usize>> {
        Ok(self.predict_counted(features)?.0)
    }

    /// Predictions plus the number of rows each network processed.
    ///
    /// Rows are batched per expert; each row is evaluated by exactly one expert.
    pub fn predict_counted(&self, features: &RealMatrix) -> Result<(Vec<usize>, PassCounts)> {
        let routes = self.route(features)?;
        let mut counts = PassCounts {
            conductor: if self.conductor.is_some() {
                features.rows() as u64
            } else {
                0
            },
            experts: vec![0; self.num_experts()],
        };
        let mut out = vec![0; features.rows()];
        for expert in 0..self.num_experts() {
            let rows: Vec<usize> = (0..routes.len()).filter(|&i| routes[i] == expert).collect();
            if rows.is_empty() {
                continue;
            }
            let pred = self.expert(expert).predict(&features.select_rows(&rows))?;
            counts.experts[expert] += rows.len() as u64;
            for (&i, p) in rows.iter().zip(pred) {
                out[i] = p;
            }
        }
        Ok((out, counts))
    }

    /// One conductor pass plus one expert pass, or a single pass when degenerate.
    pub fn inference_cost(&self) -> CostModel {
        if self.is_degenerate() {
            CostModel {
                forward_passes_per_sample: 1,
                components: vec![("target".into(), 1)],
            }
        } else {
            CostModel {
                forward_passes_per_sample: 2,
                components: vec![("conductor".into(), 1), ("expert".into(), 1)],
            }
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut parts = vec![self.target.to_bytes()?];
        for c in &self.complementaries {
            parts.push(c.to_bytes()?);
        }
        if let Some(c) = &self.conductor {
            parts.push(c.to_bytes()?);
        }
        let header = HarmonyHeader {
            format_version: persist::FORMAT_VERSION,
            kind: "harmony".into(),
            partition: self.partition.clone(),
            config: self.config.clone(),
            has_conductor: self.conductor.is_some(),
            sections: parts.iter().map(|p| p.len() as u64).collect(),
        };
        persist::encode(persist::HARMONY_MAGIC, &header, &parts.concat())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload): (HarmonyHeader, _) = persist::decode(persist::HARMONY_MAGIC, bytes)?;
        let sections = persist::split_sections(payload, &header.sections)?;
        let mut models = sections
            .into_iter()
            .map(TrainedClassifier::from_bytes)
            .collect::<Result<Vec<_>>>()?;
        if models.is_empty() {
            return Err(Error::Format("harmony file holds no target model".into()));
        }
        let conductor = if header.has_conductor { models.pop() } else { None };
        let target = models.remove(0);
        Self::new(target, models, conductor, header.partition, header.config)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        persist::write_atomic(path.as_ref(), &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&persist::read_file(path.as_ref())?)
    }
}
