//! End-to-end experiment: data, target, harmony and the comparison baselines.
//!
//! Every row is evaluated on the test split. Row letters:
//!
//! | row | method |
//! |-----|--------|
//! | a | target model |
//! | b | target retrained with `lambda_b` on the detected weak classes |
//! | c | each complementary model on its own |
//! | d | conductor on its own (per-class routing accuracy) |
//! | e | harmony |
//! | f, g | bagging, one row per configured ensemble size |
//! | h | averaging ensemble of two targets |

mod config;
mod models;
mod report;

pub use config::{DatasetSource, ExperimentConfig, REFERENCE_SEED};
pub use models::ModelFile;
pub use report::{
    emit_report, round_sig, Environment, MethodRow, ReportDocument, RunReport, SummaryRow, Timings,
    REPORT_SCHEMA_VERSION,
};

use std::path::PathBuf;
use std::time::Instant;

use crate::analysis::{confusion_matrix, group_accuracy, per_class_report, PerClassReport, WeakGroupPartition};
use crate::baselines::{train_averaging, train_bagging, train_weighted_target};
use crate::classifier::{TrainConfig, TrainedClassifier};
use crate::data::{generate_synthetic, load_csv, load_idx, stratified_split, Dataset};
use crate::error::{Error, Result, StageExt};
use crate::harmony::train_harmony;
use crate::numerics::{derive_seed, SgdConfig};

/// Train, validation and test splits of the configured dataset.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

pub fn load_dataset(source: &DatasetSource) -> Result<Dataset> {
    match source {
        DatasetSource::Csv {
            path,
            label_column,
            num_classes,
        } => {
            let ds = load_csv(path, label_column)?;
            match num_classes {
                Some(k) => ds.with_num_classes(*k),
                None => Ok(ds),
            }
        }
        DatasetSource::Idx { images, labels } => load_idx(images, labels),
        DatasetSource::Synthetic(spec) => generate_synthetic(spec),
    }
}

pub fn prepare_data(config: &ExperimentConfig) -> Result<PreparedData> {
    let ds = load_dataset(&config.dataset).stage("data")?;
    let (train, val, test) = stratified_split(&ds, &config.split).stage("split")?;
    Ok(PreparedData { train, val, test })
}

/// Training config of a standalone target model for the given run seed.
pub fn target_train_config(config: &ExperimentConfig, run_seed: u64) -> TrainConfig {
    config
        .harmony_config(derive_seed(run_seed, "harmony"))
        .train_config("target")
}

/// Output of [`run_experiment`]. Timings are kept apart from the report so
/// that the report depends only on config and seed.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ReportDocument,
    pub timings: Timings,
}

/// Runs every repeat of the experiment.
///
/// Repeat `r` uses master seed `config.seed + r`, so a single repeat can be
/// reproduced with `seed = config.seed + r, repeats = 1`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut report = ReportDocument::new(config);
    let mut timings = Timings::default();
    run_into(config, &mut report, &mut timings)?;
    Ok(ExperimentOutput { report, timings })
}

/// Files written by [`run_and_emit`].
#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub timings: PathBuf,
}

/// Runs the experiment and writes `report.json`, `report.csv` and
/// `timings.json` to the configured output directory.
///
/// On failure the rows finished so far go to `report.partial.json` before the
/// error is returned.
pub fn run_and_emit(config: &ExperimentConfig) -> Result<EmittedFiles> {
    let out = &config.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut report = ReportDocument::new(config);
    let mut timings = Timings::default();
    if let Err(e) = run_into(config, &mut report, &mut timings) {
        if let Some(run) = report.runs.last_mut() {
            run.failure = Some(e.to_string());
        }
        // the original error matters more than a failed partial write
        let _ = report::write_json(&report, &out.join("report.partial.json"));
        return Err(e);
    }
    let (json, csv) = emit_report(&report, out)?;
    let timings_path = out.join("timings.json");
    report::write_timings(&timings, &timings_path)?;
    Ok(EmittedFiles {
        json,
        csv,
        timings: timings_path,
    })
}

fn run_into(config: &ExperimentConfig, report: &mut ReportDocument, timings: &mut Timings) -> Result<()> {
    config.validate()?;
    for r in 0..config.repeats {
        let run_seed = config.seed.wrapping_add(r as u64);
        let cfg = config.clone().with_seed(run_seed);
        report.runs.push(RunReport::new(r, run_seed));
        let run = report.runs.last_mut().expect("just pushed");
        run_single(&cfg, run, timings)?;
        run.complete = true;
    }
    report.summarize();
    Ok(())
}

fn evaluate(predicted: &[usize], test: &Dataset) -> Result<PerClassReport> {
    per_class_report(&confusion_matrix(predicted, test.labels(), test.num_classes())?)
}

fn classifier_report(model: &TrainedClassifier, test: &Dataset) -> Result<PerClassReport> {
    evaluate(&model.predict(test.features())?, test)
}

fn make_row(
    method: String,
    report: &PerClassReport,
    partition: &WeakGroupPartition,
    forward_passes: usize,
    seeds: Vec<u64>,
) -> Result<MethodRow> {
    let groups = group_accuracy(report, partition)?;
    Ok(MethodRow {
        method,
        per_class_accuracy: report.per_class_accuracy.clone(),
        mean: report.mean,
        variance: report.variance,
        strong_accuracy: groups.strong,
        weak_accuracy: groups.weak,
        forward_passes,
        seeds,
    })
}

fn timed<T>(timings: &mut Timings, label: String, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    timings.push(label, start.elapsed().as_secs_f64());
    out
}

fn run_single(cfg: &ExperimentConfig, run: &mut RunReport, timings: &mut Timings) -> Result<()> {
    let r = run.repeat;
    let data = timed(timings, format!("{r}:data"), || prepare_data(cfg))?;
    let (train, val, test) = (&data.train, &data.val, &data.test);
    let spec = cfg.classifier_spec(train.n_dims(), train.num_classes());
    let harmony_config = cfg.harmony_config(derive_seed(run.seed, "harmony"));

    let model = timed(timings, format!("{r}:harmony"), || {
        train_harmony(train, val, &spec, &harmony_config).stage("harmony")
    })?;
    let partition = model.partition().clone();
    run.weak_groups = partition.groups().to_vec();
    run.validation_target_accuracy = classifier_report(model.target(), val)
        .stage("evaluate")?
        .per_class_accuracy;

    let target = model.target();
    let target_report = classifier_report(target, test).stage("evaluate")?;
    run.rows.push(make_row(
        "a_target".into(),
        &target_report,
        &partition,
        1,
        vec![target.metadata().seed],
    )?);

    let weak = partition.weak_classes();
    if !weak.is_empty() {
        let seed = derive_seed(run.seed, "weighted");
        let base = TrainConfig::new(
            SgdConfig {
                shuffle_seed: derive_seed(seed, "shuffle"),
                ..cfg.sgd.clone()
            },
            seed,
        );
        let weighted = timed(timings, format!("{r}:weighted_target"), || {
            train_weighted_target(train, &spec, &base, cfg.lambda_b, &weak).stage("weighted_target")
        })?;
        let rep = classifier_report(&weighted, test).stage("evaluate")?;
        run.rows
            .push(make_row("b_weighted_target".into(), &rep, &partition, 1, vec![seed])?);
    }

    for (g, comp) in model.complementaries().iter().enumerate() {
        let rep = classifier_report(comp, test).stage("evaluate")?;
        run.rows.push(make_row(
            format!("c{}_complementary", g + 1),
            &rep,
            &partition,
            1,
            vec![comp.metadata().seed],
        )?);
    }

    if let Some(conductor) = model.conductor() {
        // a sample counts as correct when routed to the expert owning its class
        let routes = conductor.predict(test.features()).stage("evaluate")?;
        let k = test.num_classes();
        let mut support = vec![0u64; k];
        let mut correct = vec![0u64; k];
        for (&route, &y) in routes.iter().zip(test.labels()) {
            support[y] += 1;
            if partition.expert_of(y) == Some(route) {
                correct[y] += 1;
            }
        }
        if let Some(class) = support.iter().position(|&s| s == 0) {
            return Err(Error::ZeroSupport { class }.in_stage("evaluate"));
        }
        let acc = correct
            .iter()
            .zip(&support)
            .map(|(&c, &s)| c as f64 / s as f64)
            .collect();
        let rep = PerClassReport::from_accuracies(acc, Some(support))?;
        run.rows.push(make_row(
            "d_conductor".into(),
            &rep,
            &partition,
            1,
            vec![conductor.metadata().seed],
        )?);
    }

    let harmony_report = evaluate(&model.predict(test.features()).stage("evaluate")?, test)?;
    let mut seeds = vec![model.target().metadata().seed];
    seeds.extend(model.complementaries().iter().map(|c| c.metadata().seed));
    seeds.extend(model.conductor().map(|c| c.metadata().seed));
    run.rows.push(make_row(
        "e_harmony".into(),
        &harmony_report,
        &partition,
        model.inference_cost().forward_passes_per_sample,
        seeds,
    )?);

    for (i, &n) in cfg.bagging_sizes.iter().enumerate() {
        let letter = match i {
            0 => "f".to_string(),
            1 => "g".to_string(),
            _ => format!("g{i}"),
        };
        let seed = derive_seed(run.seed, &format!("bagging/{n}"));
        let stage = format!("bagging[{n}]");
        let ens = timed(timings, format!("{r}:{stage}"), || {
            train_bagging(train, &spec, &cfg.sgd, n, &cfg.weakening, seed).stage(&stage)
        })?;
        let rep = evaluate(&ens.predict_majority(test.features()).stage("evaluate")?, test)?;
        let seeds = ens.members().iter().map(|m| m.metadata().seed).collect();
        run.rows.push(make_row(
            format!("{letter}_bagging_{n}"),
            &rep,
            &partition,
            ens.inference_cost().forward_passes_per_sample,
            seeds,
        )?);
    }

    let seed = derive_seed(run.seed, "averaging");
    let avg = timed(timings, format!("{r}:averaging"), || {
        train_averaging(train, &spec, &cfg.sgd, seed).stage("averaging")
    })?;
    let rep = evaluate(&avg.predict_average(test.features()).stage("evaluate")?, test)?;
    let seeds = avg.members().iter().map(|m| m.metadata().seed).collect();
    run.rows.push(make_row(
        "h_averaging".into(),
        &rep,
        &partition,
        avg.inference_cost().forward_passes_per_sample,
        seeds,
    )?);
    Ok(())
}
