//! Comparison methods: weighted-loss target, bagging of weakened models, and
//! probability averaging of two independently seeded targets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{self, ClassifierSpec, TrainConfig, TrainedClassifier};
use crate::data::Dataset;
use crate::error::{Error, Result, StageExt};
use crate::harmony::CostModel;
use crate::numerics::{argmax, derive_seed, Prng, RealMatrix, SgdConfig};
use crate::persist;

/// How bagging members are made weaker than the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakeningPolicy {
    /// Fraction of the configured epochs each member trains for.
    pub epoch_fraction: f64,
    /// Bootstrap sample size as a fraction of the training set.
    pub bootstrap_fraction: f64,
    /// Fraction of each hidden layer's width kept.
    pub hidden_fraction: f64,
}

impl Default for WeakeningPolicy {
    fn default() -> Self {
        Self {
            epoch_fraction: 0.5,
            bootstrap_fraction: 0.8,
            hidden_fraction: 1.0,
        }
    }
}

impl WeakeningPolicy {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("epoch_fraction", self.epoch_fraction),
            ("bootstrap_fraction", self.bootstrap_fraction),
            ("hidden_fraction", self.hidden_fraction),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1], got {f}")));
            }
        }
        Ok(())
    }

    /// `ceil(epochs · epoch_fraction)`, at least 1.
    pub fn epochs(&self, epochs: usize) -> usize {
        ((epochs as f64 * self.epoch_fraction).ceil() as usize).max(1)
    }

    pub fn spec(&self, spec: &ClassifierSpec) -> ClassifierSpec {
        ClassifierSpec {
            hidden_dims: spec
                .hidden_dims
                .iter()
                .map(|&h| ((h as f64 * self.hidden_fraction).ceil() as usize).max(1))
                .collect(),
            ..spec.clone()
        }
    }

    /// `ceil(n · bootstrap_fraction)`, at least 1.
    pub fn bootstrap_size(&self, n: usize) -> usize {
        ((n as f64 * self.bootstrap_fraction).ceil() as usize).max(1)
    }
}

/// Weight vector with `lambda` on `weak` classes and 1 elsewhere.
pub fn weak_class_weights(num_classes: usize, weak: &[usize], lambda: f64) -> Result<Vec<f64>> {
    if weak.is_empty() {
        return Err(Error::InvalidArgument("weak class set is empty".into()));
    }
    let mut w = vec![1.0; num_classes];
    for &k in weak {
        if k >= num_classes {
            return Err(Error::InvalidArgument(format!("class {k} outside [0, {num_classes})")));
        }
        w[k] = lambda;
    }
    if w.iter().all(|&x| x == lambda) {
        return Err(Error::InvalidArgument("every class is marked weak".into()));
    }
    Ok(w)
}

/// The target architecture trained with loss weight `lambda_b` on `weak` classes.
pub fn train_weighted_target(
    train: &Dataset,
    spec: &ClassifierSpec,
    base: &TrainConfig,
    lambda_b: f64,
    weak: &[usize],
) -> Result<TrainedClassifier> {
    if !(lambda_b > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda_b must exceed 1, got {lambda_b}"
        )));
    }
    let w = weak_class_weights(spec.output_classes, weak, lambda_b)?;
    classifier::train(train, spec, &base.clone().with_class_weights(w))
}

/// Plurality vote per sample; ties go to the lowest tied class.
pub fn majority_vote(member_predictions: &[Vec<usize>], num_classes: usize) -> Result<Vec<usize>> {
    let n = member_predictions.first().map_or(0, Vec::len);
    if member_predictions.iter().any(|p| p.len() != n) {
        return Err(Error::Dimension("members predicted different sample counts".into()));
    }
    let mut votes = vec![0usize; num_classes];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        votes.iter_mut().for_each(|v| *v = 0);
        for p in member_predictions {
            votes[p[i]] += 1;
        }
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        out.push(best);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaggingEnsemble {
    members: Vec<TrainedClassifier>,
    policy: WeakeningPolicy,
}

/// Trains `n` weakened members on bootstrap resamples.
///
/// Member `i` (1-based) draws its bootstrap from substream `bootstrap/i` of
/// `seed` and its initialization from `member/i`.
pub fn train_bagging(
    train: &Dataset,
    spec: &ClassifierSpec,
    config: &SgdConfig,
    n: usize,
    policy: &WeakeningPolicy,
    seed: u64,
) -> Result<BaggingEnsemble> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "bagging needs at least 2 members, got {n}"
        )));
    }
    policy.validate()?;
    if train.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let root = Prng::new(seed);
    let member_spec = policy.spec(spec);
    let size = policy.bootstrap_size(train.n_samples());
    let members = (1..=n as u64)
        .map(|i| {
            let mut rng = root.substream_indexed("bootstrap", i);
            let idx: Vec<usize> = (0..size).map(|_| rng.index(train.n_samples())).collect();
            let member_seed = root.substream_indexed("member", i).seed();
            let cfg = TrainConfig::new(
                SgdConfig {
                    epochs: policy.epochs(config.epochs),
                    shuffle_seed: derive_seed(member_seed, "shuffle"),
                    ..config.clone()
                },
                member_seed,
            );
            classifier::train(&train.subset(&idx), &member_spec, &cfg).stage(&format!("bagging member {i}"))
        })
        .collect::<Result<Vec<_>>>()?;
    BaggingEnsemble::new(members, policy.clone())
}

#[derive(Serialize, Deserialize)]
struct EnsembleHeader {
    format_version: u32,
    kind: String,
    policy: Option<WeakeningPolicy>,
    sections: Vec<u64>,
}

fn encode_members(kind: &str, policy: Option<&WeakeningPolicy>, members: &[TrainedClassifier]) -> Result<Vec<u8>> {
    let parts = members
        .iter()
        .map(TrainedClassifier::to_bytes)
        .collect::<Result<Vec<_>>>()?;
    let header = EnsembleHeader {
        format_version: persist::FORMAT_VERSION,
        kind: kind.into(),
        policy: policy.cloned(),
        sections: parts.iter().map(|p| p.len() as u64).collect(),
    };
    persist::encode(persist::ENSEMBLE_MAGIC, &header, &parts.concat())
}

fn decode_members(kind: &str, bytes: &[u8]) -> Result<(Option<WeakeningPolicy>, Vec<TrainedClassifier>)> {
    let (header, payload): (EnsembleHeader, _) = persist::decode(persist::ENSEMBLE_MAGIC, bytes)?;
    if header.kind != kind {
        return Err(Error::Format(format!(
            "expected a {kind} ensemble, found {}",
            header.kind
        )));
    }
    let members = persist::split_sections(payload, &header.sections)?
        .into_iter()
        .map(TrainedClassifier::from_bytes)
        .collect::<Result<Vec<_>>>()?;
    Ok((header.policy, members))
}

impl BaggingEnsemble {
    pub fn new(members: Vec<TrainedClassifier>, policy: WeakeningPolicy) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::InvalidArgument("ensemble has no members".into()));
        };
        let k = first.num_classes();
        if members.iter().any(|m| m.num_classes() != k) {
            return Err(Error::InvalidArgument(
                "members disagree on the number of classes".into(),
            ));
        }
        Ok(Self { members, policy })
    }

    pub fn members(&self) -> &[TrainedClassifier] {
        &self.members
    }

    pub fn policy(&self) -> &WeakeningPolicy {
        &self.policy
    }

    pub fn predict_majority(&self, features: &RealMatrix) -> Result<Vec<usize>> {
        let preds = self
            .members
            .iter()
            .map(|m| m.predict(features))
            .collect::<Result<Vec<_>>>()?;
        majority_vote(&preds, self.members[0].num_classes())
    }

    pub fn inference_cost(&self) -> CostModel {
        inference_cost_baseline(EnsembleKind::Bagging, self.members.len())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode_members("bagging", Some(&self.policy), &self.members)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (policy, members) = decode_members("bagging", bytes)?;
        Self::new(members, policy.unwrap_or_default())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        persist::write_atomic(path.as_ref(), &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&persist::read_file(path.as_ref())?)
    }
}

/// Two targets with identical architecture and different seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragingEnsemble {
    members: [TrainedClassifier; 2],
}

/// Trains the target architecture twice with seeds derived from `seed`.
pub fn train_averaging(
    train: &Dataset,
    spec: &ClassifierSpec,
    config: &SgdConfig,
    seed: u64,
) -> Result<AveragingEnsemble> {
    let root = Prng::new(seed);
    let mut members = Vec::with_capacity(2);
    for i in 1..=2u64 {
        let s = root.substream_indexed("member", i).seed();
        let cfg = TrainConfig::new(
            SgdConfig {
                shuffle_seed: derive_seed(s, "shuffle"),
                ..config.clone()
            },
            s,
        );
        members.push(classifier::train(train, spec, &cfg).stage(&format!("averaging member {i}"))?);
    }
    let second = members.pop().expect("two members");
    let first = members.pop().expect("two members");
    AveragingEnsemble::new(first, second)
}

impl AveragingEnsemble {
    pub fn new(first: TrainedClassifier, second: TrainedClassifier) -> Result<Self> {
        if first.spec() != second.spec() {
            return Err(Error::InvalidArgument(
                "averaged members must share one architecture".into(),
            ));
        }
        Ok(Self {
            members: [first, second],
        })
    }

    pub fn members(&self) -> &[TrainedClassifier; 2] {
        &self.members
    }

    /// Argmax of the mean of both members' probabilities; ties to the lower id.
    pub fn predict_average(&self, features: &RealMatrix) -> Result<Vec<usize>> {
        let a = self.members[0].predict_proba(features)?;
        let b = self.members[1].predict_proba(features)?;
        Ok(average_argmax(&a, &b))
    }

    pub fn inference_cost(&self) -> CostModel {
        inference_cost_baseline(EnsembleKind::Averaging, 2)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode_members("averaging", None, &self.members)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (_, members) = decode_members("averaging", bytes)?;
        let [a, b]: [TrainedClassifier; 2] = members
            .try_into()
            .map_err(|_| Error::Format("averaging ensemble needs exactly 2 members".into()))?;
        Self::new(a, b)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        persist::write_atomic(path.as_ref(), &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&persist::read_file(path.as_ref())?)
    }
}

/// Per-row argmax of `(a + b) / 2`.
pub fn average_argmax(a: &RealMatrix, b: &RealMatrix) -> Vec<usize> {
    a.iter_rows()
        .zip(b.iter_rows())
        .map(|(ra, rb)| {
            let mean: Vec<f64> = ra.iter().zip(rb).map(|(x, y)| (x + y) / 2.0).collect();
            argmax(&mean)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleKind {
    Single,
    Bagging,
    Averaging,
}

/// Every member runs on every sample, so the cost is the member count.
pub fn inference_cost_baseline(kind: EnsembleKind, n: usize) -> CostModel {
    let n = match kind {
        EnsembleKind::Single => 1,
        _ => n.max(1),
    };
    CostModel {
        forward_passes_per_sample: n,
        components: (1..=n).map(|i| (format!("member[{i}]"), 1)).collect(),
    }
}
