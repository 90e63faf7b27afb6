use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::ExperimentConfig;
use crate::numerics::PRNG_ALGORITHM;
use crate::persist::write_atomic;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Significant digits kept for every float written to a report.
const SIG_DIGITS: usize = 6;

/// Rounds `x` to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x)
        .parse()
        .expect("formatted float parses")
}

fn r6(x: f64) -> f64 {
    round_sig(x, SIG_DIGITS)
}

/// One method evaluated on the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    /// Row letter and method, e.g. `a_target` or `f_bagging_2`.
    pub method: String,
    pub per_class_accuracy: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// Support-weighted accuracy over the strong classes of the run's partition.
    pub strong_accuracy: f64,
    /// Support-weighted accuracy over each weak group.
    pub weak_accuracy: Vec<f64>,
    pub forward_passes: usize,
    /// Seeds of every model trained for this row.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub repeat: usize,
    pub seed: u64,
    pub weak_groups: Vec<Vec<usize>>,
    /// Target model per-class accuracy on the validation split.
    pub validation_target_accuracy: Vec<f64>,
    pub rows: Vec<MethodRow>,
    pub complete: bool,
    pub failure: Option<String>,
}

impl RunReport {
    pub(crate) fn new(repeat: usize, seed: u64) -> Self {
        Self {
            repeat,
            seed,
            weak_groups: Vec::new(),
            validation_target_accuracy: Vec::new(),
            rows: Vec::new(),
            complete: false,
            failure: None,
        }
    }

    pub fn row(&self, method_prefix: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method.starts_with(method_prefix))
    }
}

/// A method averaged over repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub runs: usize,
    pub per_class_accuracy: Vec<f64>,
    /// Mean over runs of the per-run mean accuracy.
    pub mean: f64,
    /// Mean over runs of the per-run variance.
    pub variance: f64,
    pub forward_passes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub crate_name: String,
    pub crate_version: String,
    pub prng: String,
    pub os: String,
    pub arch: String,
    /// Canonical config text, without the output directory.
    pub config: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub environment: Environment,
    pub runs: Vec<RunReport>,
    pub summary: Vec<SummaryRow>,
}

impl ReportDocument {
    pub fn new(config: &ExperimentConfig) -> Self {
        let config_text = config
            .to_config_string()
            .lines()
            .filter(|l| !l.starts_with("out ="))
            .map(|l| format!("{l}\n"))
            .collect();
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            environment: Environment {
                crate_name: env!("CARGO_PKG_NAME").into(),
                crate_version: env!("CARGO_PKG_VERSION").into(),
                prng: PRNG_ALGORITHM.into(),
                os: std::env::consts::OS.into(),
                arch: std::env::consts::ARCH.into(),
                config: config_text,
            },
            runs: Vec::new(),
            summary: Vec::new(),
        }
    }

    /// Number of classes, taken from the first finished row.
    pub fn num_classes(&self) -> Option<usize> {
        self.runs
            .iter()
            .flat_map(|r| &r.rows)
            .map(|r| r.per_class_accuracy.len())
            .next()
    }

    /// Fills `summary` with per-method averages when there is more than one run.
    pub(crate) fn summarize(&mut self) {
        self.summary.clear();
        if self.runs.len() < 2 {
            return;
        }
        let first = &self.runs[0];
        for row in &first.rows {
            let matching: Vec<&MethodRow> = self
                .runs
                .iter()
                .filter_map(|run| run.rows.iter().find(|r| r.method == row.method))
                .collect();
            let n = matching.len() as f64;
            let k = row.per_class_accuracy.len();
            let per_class = (0..k)
                .map(|c| matching.iter().map(|r| r.per_class_accuracy[c]).sum::<f64>() / n)
                .collect();
            self.summary.push(SummaryRow {
                method: row.method.clone(),
                runs: matching.len(),
                per_class_accuracy: per_class,
                mean: matching.iter().map(|r| r.mean).sum::<f64>() / n,
                variance: matching.iter().map(|r| r.variance).sum::<f64>() / n,
                forward_passes: row.forward_passes,
            });
        }
    }

    /// Copy with every float rounded to six significant digits, as written to disk.
    pub fn rounded(&self) -> Self {
        let mut out = self.clone();
        let round_all = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = r6(*x));
        for run in &mut out.runs {
            round_all(&mut run.validation_target_accuracy);
            for row in &mut run.rows {
                round_all(&mut row.per_class_accuracy);
                round_all(&mut row.weak_accuracy);
                row.mean = r6(row.mean);
                row.variance = r6(row.variance);
                row.strong_accuracy = r6(row.strong_accuracy);
            }
        }
        for row in &mut out.summary {
            round_all(&mut row.per_class_accuracy);
            row.mean = r6(row.mean);
            row.variance = r6(row.variance);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.rounded())
            .map_err(|e| Error::Format(format!("cannot serialize report: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("malformed report: {e}")))
    }

    /// One line per method: `method,class_0..class_{K-1},avg,var,strong_acc,weak_acc_1..,fwd_passes`.
    ///
    /// With several runs, method names get an `r{repeat}/` prefix and the
    /// averages follow as `mean/` rows.
    pub fn to_csv(&self) -> String {
        let k = self.num_classes().unwrap_or(0);
        let groups = self.runs.iter().map(|r| r.weak_groups.len()).max().unwrap_or(0);
        let mut out = String::from("method");
        for c in 0..k {
            let _ = write!(out, ",class_{c}");
        }
        out.push_str(",avg,var,strong_acc");
        for g in 1..=groups {
            let _ = write!(out, ",weak_acc_{g}");
        }
        out.push_str(",fwd_passes\n");

        let fmt = |x: f64| format!("{}", r6(x));
        let multi = self.runs.len() > 1;
        for run in &self.runs {
            for row in &run.rows {
                if multi {
                    let _ = write!(out, "r{}/", run.repeat);
                }
                out.push_str(&row.method);
                for &a in &row.per_class_accuracy {
                    let _ = write!(out, ",{}", fmt(a));
                }
                let _ = write!(
                    out,
                    ",{},{},{}",
                    fmt(row.mean),
                    fmt(row.variance),
                    fmt(row.strong_accuracy)
                );
                for g in 0..groups {
                    out.push(',');
                    if let Some(&w) = row.weak_accuracy.get(g) {
                        out.push_str(&fmt(w));
                    }
                }
                let _ = writeln!(out, ",{}", row.forward_passes);
            }
        }
        for row in &self.summary {
            let _ = write!(out, "mean/{}", row.method);
            for &a in &row.per_class_accuracy {
                let _ = write!(out, ",{}", fmt(a));
            }
            let _ = write!(out, ",{},{},", fmt(row.mean), fmt(row.variance));
            out.push_str(&",".repeat(groups));
            let _ = writeln!(out, ",{}", row.forward_passes);
        }
        out
    }
}

pub(crate) fn write_json(report: &ReportDocument, path: &Path) -> Result<()> {
    write_atomic(path, report.to_json()?.as_bytes())
}

/// Writes `report.json` and `report.csv` into `dir`, returning both paths.
pub fn emit_report(report: &ReportDocument, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("report.json");
    let csv = dir.join("report.csv");
    write_json(report, &json)?;
    write_atomic(&csv, report.to_csv().as_bytes())?;
    Ok((json, csv))
}

/// Wall-clock seconds per training stage, labelled `{repeat}:{stage}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub entries: Vec<(String, f64)>,
}

impl Timings {
    pub(crate) fn push(&mut self, label: String, seconds: f64) {
        self.entries.push((label, seconds));
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, s)| s).sum()
    }
}

pub(crate) fn write_timings(timings: &Timings, path: &Path) -> Result<()> {
    let text =
        serde_json::to_string_pretty(timings).map_err(|e| Error::Format(format!("cannot serialize timings: {e}")))?;
    write_atomic(path, text.as_bytes())
}
