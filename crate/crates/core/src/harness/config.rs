//! Line-oriented `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored; a `#` after a value
//! starts a trailing comment. Unknown keys are rejected. Relative paths are
//! resolved against the directory of the config file. See `README.md` for the
//! full key list.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::baselines::WeakeningPolicy;
use crate::classifier::{Activation, ClassifierSpec};
use crate::data::{LabelColumn, SplitSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::harmony::{BiasMode, HarmonyConfig};
use crate::numerics::{derive_seed, SgdConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        label_column: LabelColumn,
        num_classes: Option<usize>,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub split: SplitSpec,
    /// Hidden layer widths of the shared backbone; empty is softmax regression.
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub sgd: SgdConfig,
    pub detection_delta: f64,
    pub coupling_threshold: f64,
    pub lambda_c: f64,
    pub explicit_weak_groups: Option<Vec<Vec<usize>>>,
    pub bias_mode: BiasMode,
    pub lambda_b: f64,
    pub bagging_sizes: Vec<usize>,
    pub weakening: WeakeningPolicy,
    pub seed: u64,
    pub repeats: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::reference()
    }
}

/// Master seed of the reference experiment.
pub const REFERENCE_SEED: u64 = 2020;

impl ExperimentConfig {
    /// Desk-scale reference: ten Gaussian classes with {2, 3, 5} crowded
    /// together, classified by a narrow one-hidden-layer network.
    pub fn reference() -> Self {
        Self {
            dataset: DatasetSource::Synthetic(SyntheticSpec {
                num_classes: 10,
                n_dims: 16,
                samples_per_class: 1000,
                overlap_groups: vec![vec![2, 3, 5]],
                separation: 4.5,
                overlap_separation: 2.0,
                noise_sigma: 1.0,
                seed: derive_seed(REFERENCE_SEED, "data"),
            }),
            split: SplitSpec {
                seed: derive_seed(REFERENCE_SEED, "split"),
                ..SplitSpec::default()
            },
            hidden_dims: vec![6],
            activation: Activation::Relu,
            sgd: SgdConfig {
                learning_rate: 0.01,
                ..SgdConfig::default()
            },
            detection_delta: 0.04,
            coupling_threshold: 0.05,
            lambda_c: 4.0,
            explicit_weak_groups: None,
            bias_mode: BiasMode::Weights,
            lambda_b: 2.0,
            bagging_sizes: vec![2, 5],
            weakening: WeakeningPolicy::default(),
            seed: REFERENCE_SEED,
            repeats: 1,
            output_dir: PathBuf::from("results"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda_b > 1.0) {
            return bad(format!("baseline.lambda_b must exceed 1, got {}", self.lambda_b));
        }
        if !(self.lambda_b < self.lambda_c) {
            return bad(format!(
                "baseline.lambda_b ({}) must be below harmony.lambda_c ({})",
                self.lambda_b, self.lambda_c
            ));
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.bagging_sizes.iter().any(|&n| n < 2) {
            return bad(format!("bagging sizes must be >= 2, got {:?}", self.bagging_sizes));
        }
        match &self.dataset {
            DatasetSource::Csv { path, .. } => check_exists(path)?,
            DatasetSource::Idx { images, labels } => {
                check_exists(images)?;
                check_exists(labels)?;
            }
            DatasetSource::Synthetic(spec) => spec.validate().map_err(|e| Error::Config(e.to_string()))?,
        }
        self.split.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.harmony_config(self.seed)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.weakening.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Backbone spec for data of the given shape.
    pub fn classifier_spec(&self, input_dim: usize, num_classes: usize) -> ClassifierSpec {
        ClassifierSpec {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            output_classes: num_classes,
            activation: self.activation,
        }
    }

    pub fn harmony_config(&self, seed: u64) -> HarmonyConfig {
        HarmonyConfig {
            detection_delta: self.detection_delta,
            coupling_threshold: self.coupling_threshold,
            complementary_weight: self.lambda_c,
            explicit_weak_groups: self.explicit_weak_groups.clone(),
            bias_mode: self.bias_mode,
            sgd: self.sgd.clone(),
            seed,
        }
    }

    /// Replaces the master seed and every seed derived from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        if let DatasetSource::Synthetic(spec) = &mut self.dataset {
            spec.seed = derive_seed(seed, "data");
        }
        self.split.seed = derive_seed(seed, "split");
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths are joined onto `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim().to_string();
            if entries
                .insert(key.clone(), (lineno + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        Parser { entries, base_dir }.build()
    }

    /// Canonical `key = value` rendering; parsing it yields an equal config.
    pub fn to_config_string(&self) -> String {
        let mut out = Vec::new();
        let mut kv = |k: &str, v: String| out.push(format!("{k} = {v}"));
        kv("seed", self.seed.to_string());
        kv("repeats", self.repeats.to_string());
        kv("out", self.output_dir.display().to_string());
        match &self.dataset {
            DatasetSource::Synthetic(s) => {
                kv("dataset", "synthetic".into());
                kv("synthetic.num_classes", s.num_classes.to_string());
                kv("synthetic.n_dims", s.n_dims.to_string());
                kv("synthetic.samples_per_class", s.samples_per_class.to_string());
                kv("synthetic.overlap_groups", format_groups(&s.overlap_groups));
                kv("synthetic.separation", fmt_f64(s.separation));
                kv("synthetic.overlap_separation", fmt_f64(s.overlap_separation));
                kv("synthetic.noise_sigma", fmt_f64(s.noise_sigma));
                kv("synthetic.seed", s.seed.to_string());
            }
            DatasetSource::Csv {
                path,
                label_column,
                num_classes,
            } => {
                kv("dataset", "csv".into());
                kv("csv.path", path.display().to_string());
                kv(
                    "csv.label_column",
                    match label_column {
                        LabelColumn::Index(i) => i.to_string(),
                        LabelColumn::Last => "last".into(),
                        LabelColumn::Name(n) => n.clone(),
                    },
                );
                if let Some(k) = num_classes {
                    kv("csv.num_classes", k.to_string());
                }
            }
            DatasetSource::Idx { images, labels } => {
                kv("dataset", "idx".into());
                kv("idx.images", images.display().to_string());
                kv("idx.labels", labels.display().to_string());
            }
        }
        kv("split.train", fmt_f64(self.split.train_fraction));
        kv("split.val", fmt_f64(self.split.val_fraction));
        kv("split.test", fmt_f64(self.split.test_fraction));
        kv("split.seed", self.split.seed.to_string());
        kv("model.hidden", join(&self.hidden_dims));
        kv(
            "model.activation",
            match self.activation {
                Activation::Relu => "relu".into(),
                Activation::Tanh => "tanh".into(),
            },
        );
        kv("sgd.learning_rate", fmt_f64(self.sgd.learning_rate));
        kv("sgd.momentum", fmt_f64(self.sgd.momentum));
        kv("sgd.batch_size", self.sgd.batch_size.to_string());
        kv("sgd.epochs", self.sgd.epochs.to_string());
        kv("harmony.delta", fmt_f64(self.detection_delta));
        kv("harmony.coupling_threshold", fmt_f64(self.coupling_threshold));
        kv("harmony.lambda_c", fmt_f64(self.lambda_c));
        if let Some(g) = &self.explicit_weak_groups {
            kv("harmony.weak_classes", format_groups(g));
        }
        kv(
            "harmony.bias_mode",
            match self.bias_mode {
                BiasMode::Weights => "weights".into(),
                BiasMode::Oversample => "oversample".into(),
            },
        );
        kv("baseline.lambda_b", fmt_f64(self.lambda_b));
        kv("baseline.bagging", join(&self.bagging_sizes));
        kv("baseline.epoch_fraction", fmt_f64(self.weakening.epoch_fraction));
        kv(
            "baseline.bootstrap_fraction",
            fmt_f64(self.weakening.bootstrap_fraction),
        );
        kv("baseline.hidden_fraction", fmt_f64(self.weakening.hidden_fraction));
        out.join("\n") + "\n"
    }
}

fn check_exists(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("file {} does not exist", path.display())))
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn join(values: &[usize]) -> String {
    values.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn format_groups(groups: &[Vec<usize>]) -> String {
    groups.iter().map(|g| join(g)).collect::<Vec<_>>().join(";")
}

struct Parser<'a> {
    entries: BTreeMap<String, (usize, String)>,
    base_dir: &'a Path,
}

impl Parser<'_> {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::Config(format!("line {line}: `{key}`: {e}"))),
        }
    }

    fn set<T: std::str::FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.parsed(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => parse_list(&v)
                .map(Some)
                .map_err(|e| Error::Config(format!("line {line}: `{key}`: {e}"))),
        }
    }

    fn groups(&mut self, key: &str) -> Result<Option<Vec<Vec<usize>>>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(';')
                .map(str::trim)
                .filter(|g| !g.is_empty())
                .map(parse_list)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|e| Error::Config(format!("line {line}: `{key}`: {e}"))),
        }
    }

    fn path(&mut self, key: &str) -> Result<PathBuf> {
        let (_, v) = self
            .take(key)
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))?;
        Ok(self.resolve(&v))
    }

    fn resolve(&self, v: &str) -> PathBuf {
        let p = PathBuf::from(v);
        if p.is_absolute() {
            p
        } else {
            self.base_dir.join(p)
        }
    }

    fn build(mut self) -> Result<ExperimentConfig> {
        let seed: u64 = self.parsed("seed")?.unwrap_or(REFERENCE_SEED);
        let mut cfg = ExperimentConfig::reference().with_seed(seed);
        self.set("repeats", &mut cfg.repeats)?;
        let out = self.take("out").map_or("results".to_string(), |(_, v)| v);
        cfg.output_dir = self.resolve(&out);

        let kind = self.take("dataset").map_or("synthetic".to_string(), |(_, v)| v);
        cfg.dataset = match kind.as_str() {
            "synthetic" => {
                let DatasetSource::Synthetic(mut s) = cfg.dataset else {
                    unreachable!("reference config is synthetic")
                };
                self.set("synthetic.num_classes", &mut s.num_classes)?;
                self.set("synthetic.n_dims", &mut s.n_dims)?;
                self.set("synthetic.samples_per_class", &mut s.samples_per_class)?;
                if let Some(g) = self.groups("synthetic.overlap_groups")? {
                    s.overlap_groups = g;
                }
                self.set("synthetic.separation", &mut s.separation)?;
                self.set("synthetic.overlap_separation", &mut s.overlap_separation)?;
                self.set("synthetic.noise_sigma", &mut s.noise_sigma)?;
                self.set("synthetic.seed", &mut s.seed)?;
                DatasetSource::Synthetic(s)
            }
            "csv" => DatasetSource::Csv {
                path: self.path("csv.path")?,
                label_column: self.parsed("csv.label_column")?.unwrap_or(LabelColumn::Last),
                num_classes: self.parsed("csv.num_classes")?,
            },
            "idx" => DatasetSource::Idx {
                images: self.path("idx.images")?,
                labels: self.path("idx.labels")?,
            },
            other => return Err(Error::Config(format!("unknown dataset kind `{other}`"))),
        };

        self.set("split.train", &mut cfg.split.train_fraction)?;
        self.set("split.val", &mut cfg.split.val_fraction)?;
        self.set("split.test", &mut cfg.split.test_fraction)?;
        self.set("split.seed", &mut cfg.split.seed)?;
        if let Some(h) = self.list("model.hidden")? {
            cfg.hidden_dims = h;
        }
        self.set("model.activation", &mut cfg.activation)?;
        self.set("sgd.learning_rate", &mut cfg.sgd.learning_rate)?;
        self.set("sgd.momentum", &mut cfg.sgd.momentum)?;
        self.set("sgd.batch_size", &mut cfg.sgd.batch_size)?;
        self.set("sgd.epochs", &mut cfg.sgd.epochs)?;
        self.set("harmony.delta", &mut cfg.detection_delta)?;
        self.set("harmony.coupling_threshold", &mut cfg.coupling_threshold)?;
        self.set("harmony.lambda_c", &mut cfg.lambda_c)?;
        if let Some(g) = self.groups("harmony.weak_classes")? {
            cfg.explicit_weak_groups = Some(g);
        }
        self.set("harmony.bias_mode", &mut cfg.bias_mode)?;
        self.set("baseline.lambda_b", &mut cfg.lambda_b)?;
        if let Some(b) = self.list("baseline.bagging")? {
            cfg.bagging_sizes = b;
        }
        self.set("baseline.epoch_fraction", &mut cfg.weakening.epoch_fraction)?;
        self.set("baseline.bootstrap_fraction", &mut cfg.weakening.bootstrap_fraction)?;
        self.set("baseline.hidden_fraction", &mut cfg.weakening.hidden_fraction)?;

        if let Some((key, (line, _))) = self.entries.into_iter().next() {
            return Err(Error::Config(format!("line {line}: unknown key `{key}`")));
        }
        Ok(cfg)
    }
}

fn parse_list(v: &str) -> std::result::Result<Vec<usize>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|e| format!("`{s}`: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_reference() {
        let cfg = ExperimentConfig::parse("# nothing\n\n", Path::new("/tmp")).unwrap();
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/results"));
        let mut reference = ExperimentConfig::reference();
        reference.output_dir = PathBuf::from("/tmp/results");
        assert_eq!(cfg, reference);
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = ExperimentConfig::reference().with_seed(99);
        cfg.explicit_weak_groups = Some(vec![vec![2, 3], vec![5]]);
        cfg.hidden_dims = vec![8, 4];
        cfg.output_dir = PathBuf::from("/abs/out");
        let text = cfg.to_config_string();
        let back = ExperimentConfig::parse(&text, Path::new("/elsewhere")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_and_comments() {
        let text = "seed = 5\nsgd.epochs = 3 # short\nharmony.weak_classes = 2,3,5\nmodel.hidden =\n";
        let cfg = ExperimentConfig::parse(text, Path::new(".")).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.sgd.epochs, 3);
        assert_eq!(cfg.explicit_weak_groups, Some(vec![vec![2, 3, 5]]));
        assert!(cfg.hidden_dims.is_empty());
        assert_eq!(cfg.split.seed, derive_seed(5, "split"));
    }

    #[test]
    fn rejects_bad_input() {
        let p = Path::new(".");
        assert!(ExperimentConfig::parse("nonsense\n", p).is_err());
        assert!(ExperimentConfig::parse("bogus.key = 1\n", p).is_err());
        assert!(ExperimentConfig::parse("seed = x\n", p).is_err());
        assert!(ExperimentConfig::parse("seed = 1\nseed = 2\n", p).is_err());
        assert!(ExperimentConfig::parse("dataset = parquet\n", p).is_err());
        assert!(ExperimentConfig::parse("dataset = csv\n", p).is_err());
    }

    #[test]
    fn lambda_ordering_enforced() {
        let mut cfg = ExperimentConfig::reference();
        assert!(cfg.validate().is_ok());
        cfg.lambda_b = 4.0;
        assert!(cfg.validate().is_err());
        cfg.lambda_b = 5.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn missing_files_rejected() {
        let cfg = ExperimentConfig::parse("dataset = csv\ncsv.path = nope.csv\n", Path::new("/nonexistent")).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
