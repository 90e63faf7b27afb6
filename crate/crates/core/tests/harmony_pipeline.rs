use harmony_core::analysis::{confusion_matrix, per_class_report};
use harmony_core::harmony::{decompose_accuracy, train_harmony};
use harmony_core::harness::{prepare_data, PreparedData};
use harmony_core::numerics::derive_seed;
use harmony_core::{BiasMode, ClassifierSpec, ExperimentConfig, HarmonyConfig, HarmonyModel, SgdConfig, SyntheticSpec};

fn reference() -> (ExperimentConfig, PreparedData, ClassifierSpec, HarmonyConfig) {
    let cfg = ExperimentConfig::reference();
    let data = prepare_data(&cfg).unwrap();
    let spec = cfg.classifier_spec(data.train.n_dims(), data.train.num_classes());
    let hc = cfg.harmony_config(derive_seed(cfg.seed, "harmony"));
    (cfg, data, spec, hc)
}

#[test]
fn reference_target_is_weakest_on_the_overlap_group() {
    let (_, data, spec, hc) = reference();
    let model = train_harmony(&data.train, &data.val, &spec, &hc).unwrap();

    let val_pred = model.target().predict(data.val.features()).unwrap();
    let report = per_class_report(&confusion_matrix(&val_pred, data.val.labels(), 10).unwrap()).unwrap();
    let mut order: Vec<usize> = (0..10).collect();
    order.sort_by(|&a, &b| report.per_class_accuracy[a].total_cmp(&report.per_class_accuracy[b]));
    let mut lowest = order[..3].to_vec();
    lowest.sort_unstable();
    assert_eq!(
        lowest,
        vec![2, 3, 5],
        "validation accuracies {:?}",
        report.per_class_accuracy
    );

    assert_eq!(model.partition().groups(), &[vec![2, 3, 5]]);
    assert_eq!(model.partition().strong(), &[0, 1, 4, 6, 7, 8, 9]);
    assert_eq!(model.complementaries().len(), 1);
    assert_eq!(model.conductor().unwrap().num_classes(), 2);

    let dec = decompose_accuracy(&model, &data.test).unwrap();
    assert!(dec.is_exact());
}

#[test]
fn training_is_deterministic_and_persistent() {
    let (_, data, spec, hc) = reference();
    let short = HarmonyConfig {
        sgd: SgdConfig {
            epochs: 3,
            ..hc.sgd.clone()
        },
        explicit_weak_groups: Some(vec![vec![2, 3], vec![5]]),
        ..hc
    };
    let a = train_harmony(&data.train, &data.val, &spec, &short).unwrap();
    let b = train_harmony(&data.train, &data.val, &spec, &short).unwrap();
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    assert_eq!(a.partition().groups(), &[vec![2, 3], vec![5]]);
    assert_eq!(a.conductor().unwrap().num_classes(), 3);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.bin");
    a.save(&path).unwrap();
    let back = HarmonyModel::load(&path).unwrap();
    assert_eq!(back, a);
    assert_eq!(
        back.predict(data.test.features()).unwrap(),
        a.predict(data.test.features()).unwrap()
    );

    let mut reseeded = short.clone();
    reseeded.seed ^= 1;
    let c = train_harmony(&data.train, &data.val, &spec, &reseeded).unwrap();
    assert_ne!(c.to_bytes().unwrap(), a.to_bytes().unwrap());
}

#[test]
fn pass_counters_match_cost_model() {
    let (_, data, spec, hc) = reference();
    let short = HarmonyConfig {
        sgd: SgdConfig {
            epochs: 2,
            ..hc.sgd.clone()
        },
        explicit_weak_groups: Some(vec![vec![2, 3, 5]]),
        ..hc
    };
    let model = train_harmony(&data.train, &data.val, &spec, &short).unwrap();
    let x = data.train.features().select_rows(&(0..1000).collect::<Vec<_>>());
    let (pred, counts) = model.predict_counted(&x).unwrap();
    assert_eq!(pred, model.predict(&x).unwrap());
    assert_eq!(counts.conductor, 1000);
    assert_eq!(counts.experts.iter().sum::<u64>(), 1000);
    assert_eq!(
        counts.total(),
        1000 * model.inference_cost().forward_passes_per_sample as u64
    );
}

#[test]
fn oversampling_mode_trains() {
    let (_, data, spec, hc) = reference();
    let cfg = HarmonyConfig {
        sgd: SgdConfig {
            epochs: 2,
            ..hc.sgd.clone()
        },
        explicit_weak_groups: Some(vec![vec![2, 3, 5]]),
        bias_mode: BiasMode::Oversample,
        ..hc
    };
    let model = train_harmony(&data.train, &data.val, &spec, &cfg).unwrap();
    let comp = &model.complementaries()[0];
    // 600 training samples per class; three weak classes repeated four times
    assert_eq!(comp.metadata().n_train, 6000 + 3 * 600 * 3);
    assert_eq!(comp.metadata().class_weights, vec![1.0; 10]);
}

#[test]
fn well_separated_data_gives_degenerate_model() {
    let mut cfg = ExperimentConfig::reference();
    cfg.dataset = harmony_core::harness::DatasetSource::Synthetic(SyntheticSpec {
        num_classes: 4,
        n_dims: 4,
        samples_per_class: 100,
        overlap_groups: vec![],
        separation: 30.0,
        overlap_separation: 1.0,
        noise_sigma: 1.0,
        seed: 3,
    });
    let data = prepare_data(&cfg).unwrap();
    let spec = cfg.classifier_spec(4, 4);
    let model = train_harmony(&data.train, &data.val, &spec, &cfg.harmony_config(1)).unwrap();
    assert!(model.is_degenerate());
    assert!(model.conductor().is_none());
    assert_eq!(model.inference_cost().forward_passes_per_sample, 1);
    let x = data.test.features();
    assert_eq!(model.route(x).unwrap(), vec![0; x.rows()]);
    assert_eq!(model.predict(x).unwrap(), model.target().predict(x).unwrap());

    let dec = decompose_accuracy(&model, &data.test).unwrap();
    for c in &dec.classes {
        assert_eq!(c.routed.len(), 1);
        assert_eq!(c.expert_accuracy(0), Some(c.measured_accuracy));
    }
}
