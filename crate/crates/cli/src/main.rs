use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use harmony_core::analysis::{confusion_matrix, detect_weak_classes, group_weak_classes, per_class_report};
use harmony_core::classifier::{self, TrainedClassifier};
use harmony_core::data::{generate_synthetic, write_csv};
use harmony_core::harmony::train_harmony;
use harmony_core::harness::{prepare_data, run_and_emit, target_train_config, DatasetSource, ModelFile};
use harmony_core::{Error, ExperimentConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_TRAINING: u8 = 3;

#[derive(Parser)]
#[command(name = "harmony", version, about = "Accuracy-balanced routed ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full experiment and write report.json, report.csv and timings.json.
    Run {
        #[command(flatten)]
        common: Common,
        /// Output directory; defaults to `out` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Write the configured synthetic dataset as CSV.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the target model on the training split.
    TrainTarget {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class validation accuracy, weak classes and weak groups of a target model.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Train the full routed ensemble.
    TrainHarmony {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class accuracy of any saved model on one split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitName {
    Train,
    Val,
    Test,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
            root if root.is_data_error() => EXIT_DATA,
            _ => EXIT_TRAINING,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    if !common.config.is_file() {
        return Err(Failure {
            code: EXIT_USAGE,
            message: format!("config file {} not found", common.config.display()),
        });
    }
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json(value: &serde_json::Value) {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    // a closed pipe downstream is not an error worth reporting
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Failure {
            code: EXIT_DATA,
            message: format!("cannot create {}: {e}", dir.display()),
        }),
        _ => Ok(()),
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { common, out, repeats } => {
            let mut cfg = load_config(&common)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(r) = repeats {
                cfg.repeats = r;
            }
            cfg.validate()?;
            let files = run_and_emit(&cfg)?;
            print_json(&json!({
                "report_json": files.json,
                "report_csv": files.csv,
                "timings": files.timings,
            }));
        }
        Command::Synth { common, out } => {
            let cfg = load_config(&common)?;
            let DatasetSource::Synthetic(spec) = &cfg.dataset else {
                return Err(Failure {
                    code: EXIT_USAGE,
                    message: "synth needs `dataset = synthetic`".into(),
                });
            };
            ensure_parent(&out)?;
            let ds = generate_synthetic(spec)?;
            write_csv(&ds, &out)?;
            print_json(&json!({ "path": out, "samples": ds.n_samples(), "classes": ds.num_classes() }));
        }
        Command::TrainTarget { common, out } => {
            let cfg = load_config(&common)?;
            let data = prepare_data(&cfg)?;
            let spec = cfg.classifier_spec(data.train.n_dims(), data.train.num_classes());
            let model = classifier::train(&data.train, &spec, &target_train_config(&cfg, cfg.seed))
                .map_err(|e| e.in_stage("target"))?;
            ensure_parent(&out)?;
            model.save(&out)?;
            let report = per_class_report(&confusion_matrix(
                &model.predict(data.val.features())?,
                data.val.labels(),
                data.val.num_classes(),
            )?)?;
            print_json(&json!({
                "model": out,
                "final_loss": model.metadata().final_loss,
                "validation": report,
            }));
        }
        Command::Analyze { common, model } => {
            let cfg = load_config(&common)?;
            let data = prepare_data(&cfg)?;
            let target = TrainedClassifier::load(&model)?;
            let k = data.val.num_classes();
            let cm = confusion_matrix(&target.predict(data.val.features())?, data.val.labels(), k)?;
            let report = per_class_report(&cm)?;
            let weak = detect_weak_classes(&report, cfg.detection_delta)?;
            let groups = if weak.is_empty() {
                Vec::new()
            } else {
                group_weak_classes(&cm, &weak, cfg.coupling_threshold)?
                    .groups()
                    .to_vec()
            };
            print_json(&json!({
                "validation": report,
                "delta": cfg.detection_delta,
                "weak_classes": weak,
                "weak_groups": groups,
                "confusion": cm.counts(),
            }));
        }
        Command::TrainHarmony { common, out } => {
            let cfg = load_config(&common)?;
            let data = prepare_data(&cfg)?;
            let spec = cfg.classifier_spec(data.train.n_dims(), data.train.num_classes());
            let hc = cfg.harmony_config(harmony_core::numerics::derive_seed(cfg.seed, "harmony"));
            let model = train_harmony(&data.train, &data.val, &spec, &hc)?;
            ensure_parent(&out)?;
            model.save(&out)?;
            print_json(&json!({
                "model": out,
                "weak_groups": model.partition().groups(),
                "forward_passes": model.inference_cost().forward_passes_per_sample,
            }));
        }
        Command::Evaluate { common, model, split } => {
            let cfg = load_config(&common)?;
            let data = prepare_data(&cfg)?;
            let ds = match split {
                SplitName::Train => &data.train,
                SplitName::Val => &data.val,
                SplitName::Test => &data.test,
            };
            let m = ModelFile::load(&model)?;
            let report = per_class_report(&confusion_matrix(
                &m.predict(ds.features())?,
                ds.labels(),
                ds.num_classes(),
            )?)?;
            print_json(&json!({
                "kind": m.kind(),
                "forward_passes": m.forward_passes(),
                "report": report,
            }));
        }
    }
    Ok(())
}
