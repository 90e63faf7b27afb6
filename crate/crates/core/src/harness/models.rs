use std::path::Path;

use crate::baselines::{AveragingEnsemble, BaggingEnsemble};
use crate::classifier::TrainedClassifier;
use crate::error::{Error, Result};
use crate::harmony::HarmonyModel;
use crate::numerics::RealMatrix;
use crate::persist;

/// Any model file written by this crate.
#[derive(Debug, Clone)]
pub enum ModelFile {
    Classifier(TrainedClassifier),
    Harmony(HarmonyModel),
    Bagging(BaggingEnsemble),
    Averaging(AveragingEnsemble),
}

impl ModelFile {
    /// Loads a model, picking the type from the file's magic bytes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = persist::read_file(path)?;
        let magic = bytes.get(..8).unwrap_or(&[]);
        if magic == persist::CLASSIFIER_MAGIC {
            TrainedClassifier::from_bytes(&bytes).map(ModelFile::Classifier)
        } else if magic == persist::HARMONY_MAGIC {
            HarmonyModel::from_bytes(&bytes).map(ModelFile::Harmony)
        } else if magic == persist::ENSEMBLE_MAGIC {
            BaggingEnsemble::from_bytes(&bytes)
                .map(ModelFile::Bagging)
                .or_else(|_| AveragingEnsemble::from_bytes(&bytes).map(ModelFile::Averaging))
        } else {
            Err(Error::Format(format!("{} is not a model file", path.display())))
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ModelFile::Classifier(_) => "classifier",
            ModelFile::Harmony(_) => "harmony",
            ModelFile::Bagging(_) => "bagging",
            ModelFile::Averaging(_) => "averaging",
        }
    }

    pub fn predict(&self, features: &RealMatrix) -> Result<Vec<usize>> {
        match self {
            ModelFile::Classifier(m) => m.predict(features),
            ModelFile::Harmony(m) => m.predict(features),
            ModelFile::Bagging(m) => m.predict_majority(features),
            ModelFile::Averaging(m) => m.predict_average(features),
        }
    }

    pub fn forward_passes(&self) -> usize {
        match self {
            ModelFile::Classifier(_) => 1,
            ModelFile::Harmony(m) => m.inference_cost().forward_passes_per_sample,
            ModelFile::Bagging(m) => m.inference_cost().forward_passes_per_sample,
            ModelFile::Averaging(m) => m.inference_cost().forward_passes_per_sample,
        }
    }
}
