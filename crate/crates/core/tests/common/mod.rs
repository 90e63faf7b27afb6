#![allow(dead_code)]

use std::collections::BTreeSet;

use harmony_core::analysis::{ConfusionMatrix, WeakGroupPartition};
use harmony_core::classifier::respec_output;
use harmony_core::classifier::{Network, TrainingMetadata};
use harmony_core::harmony::HarmonyModel;
use harmony_core::{Activation, ClassifierSpec, HarmonyConfig, Prng, RealMatrix, TrainedClassifier};

pub fn random_matrix(rows: usize, cols: usize, rng: &mut Prng) -> RealMatrix {
    RealMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.standard_normal()).collect()).unwrap()
}

/// An untrained classifier with Xavier weights and random biases.
pub fn random_classifier(spec: &ClassifierSpec, rng: &mut Prng) -> TrainedClassifier {
    let net = Network::init(spec, rng);
    let mut layers = net.layers().to_vec();
    for layer in &mut layers {
        for b in &mut layer.bias {
            *b = rng.uniform(-1.0, 1.0);
        }
    }
    let meta = TrainingMetadata {
        final_loss: 0.0,
        epochs_run: 0,
        seed: rng.next_u64(),
        shuffle_seed: 0,
        class_weights: vec![1.0; spec.output_classes],
        n_train: 0,
    };
    TrainedClassifier::from_parts(spec.clone(), layers, meta).unwrap()
}

/// A random partition of `k` classes with at least one strong class.
pub fn random_partition(k: usize, rng: &mut Prng) -> WeakGroupPartition {
    let mut classes: Vec<usize> = (0..k).collect();
    rng.shuffle(&mut classes);
    let n_weak = 1 + rng.index(k - 1);
    let n_groups = 1 + rng.index(n_weak.min(3));
    let mut groups = vec![Vec::new(); n_groups];
    for (i, &c) in classes[..n_weak].iter().enumerate() {
        groups[if i < n_groups { i } else { rng.index(n_groups) }].push(c);
    }
    let mut groups: Vec<Vec<usize>> = groups
        .into_iter()
        .map(|mut g| {
            g.sort_unstable();
            g
        })
        .collect();
    groups.sort();
    WeakGroupPartition::from_groups(k, groups).unwrap()
}

/// A harmony model assembled from random networks.
pub fn random_harmony(k: usize, d: usize, rng: &mut Prng) -> HarmonyModel {
    let spec = ClassifierSpec {
        input_dim: d,
        hidden_dims: vec![5],
        output_classes: k,
        activation: Activation::Relu,
    };
    let partition = random_partition(k, rng);
    let g = partition.groups().len();
    let target = random_classifier(&spec, rng);
    let comps = (0..g).map(|_| random_classifier(&spec, rng)).collect();
    let conductor = random_classifier(&respec_output(&spec, 1 + g).unwrap(), rng);
    HarmonyModel::new(target, comps, Some(conductor), partition, HarmonyConfig::default()).unwrap()
}

/// First index of the maximum; written independently of the library.
pub fn first_max(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Harmony prediction one sample at a time: conductor, then the chosen expert.
pub fn harmony_loop_oracle(model: &HarmonyModel, x: &RealMatrix) -> Vec<usize> {
    (0..x.rows())
        .map(|i| {
            let row = RealMatrix::from_vec(1, x.cols(), x.row(i).to_vec()).unwrap();
            let route = match model.conductor() {
                Some(c) => first_max(c.predict_proba(&row).unwrap().row(0)),
                None => 0,
            };
            let expert = if route == 0 {
                model.target()
            } else {
                &model.complementaries()[route - 1]
            };
            first_max(expert.predict_proba(&row).unwrap().row(0))
        })
        .collect()
}

/// Plurality vote by explicit counting; ties to the smallest class.
pub fn vote_oracle(member_preds: &[Vec<usize>], k: usize) -> Vec<usize> {
    let n = member_preds[0].len();
    (0..n)
        .map(|i| {
            let counts: Vec<usize> = (0..k)
                .map(|c| member_preds.iter().filter(|p| p[i] == c).count())
                .collect();
            let top = *counts.iter().max().unwrap();
            counts.iter().position(|&c| c == top).unwrap()
        })
        .collect()
}

/// Connected components of weak classes by breadth-first search.
pub fn bfs_groups(cm: &ConfusionMatrix, weak: &[usize], threshold: f64) -> Vec<Vec<usize>> {
    let counts = cm.counts();
    let rate = |i: usize, j: usize| {
        let row: u64 = counts[i].iter().sum();
        if row == 0 {
            0.0
        } else {
            counts[i][j] as f64 / row as f64
        }
    };
    let linked = |i: usize, j: usize| (rate(i, j) + rate(j, i)) / 2.0 >= threshold;
    let weak: BTreeSet<usize> = weak.iter().copied().collect();
    let mut seen = BTreeSet::new();
    let mut groups = Vec::new();
    for &start in &weak {
        if !seen.insert(start) {
            continue;
        }
        let mut group = vec![start];
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &weak {
                if !seen.contains(&v) && linked(u, v) {
                    seen.insert(v);
                    group.push(v);
                    queue.push_back(v);
                }
            }
        }
        group.sort_unstable();
        groups.push(group);
    }
    groups.sort_by_key(|g| g[0]);
    groups
}
