use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Prng;

/// Train/validation/test fractions and the seed that assigns samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.6,
            val_fraction: 0.2,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn fractions(&self) -> [f64; 3] {
        [self.train_fraction, self.val_fraction, self.test_fraction]
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.fractions();
        if f.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "split fractions must lie in (0, 1), got {f:?}"
            )));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` items over `fractions`.
///
/// Each part gets `floor(n·f)`; the leftover items go one each to the parts
/// with the largest fractional remainders, ties to the earlier part. Every
/// size is within one of its ideal `n·f`.
pub fn split_sizes(n: usize, fractions: &[f64]) -> Vec<usize> {
    let ideal: Vec<f64> = fractions.iter().map(|f| n as f64 * f).collect();
    let mut sizes: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    // stable sort keeps the lower part first among equal remainders
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &part in order.iter().take(n.saturating_sub(assigned)) {
        sizes[part] += 1;
    }
    sizes
}

/// Splits per class so each class keeps its proportions in every part.
///
/// Within each part samples appear in their original order. The assignment
/// of samples to parts is a seeded shuffle per class.
pub fn stratified_split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    let counts = ds.class_counts();
    if let Some((k, &c)) = counts.iter().enumerate().find(|(_, &c)| c < 3) {
        return Err(Error::Dataset(format!(
            "class {k} has {c} samples; stratified split needs at least 3"
        )));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
    for (i, &y) in ds.labels().iter().enumerate() {
        by_class[y].push(i);
    }

    let root = Prng::new(spec.seed).substream("split");
    let fractions = spec.fractions();
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (k, mut members) in by_class.into_iter().enumerate() {
        let mut rng = root.substream_indexed("class", k as u64);
        rng.shuffle(&mut members);
        let sizes = split_sizes(members.len(), &fractions);
        let mut start = 0;
        for (part, size) in parts.iter_mut().zip(sizes) {
            part.extend_from_slice(&members[start..start + size]);
            start += size;
        }
    }
    for part in &mut parts {
        part.sort_unstable();
    }
    let [train, val, test] = parts;
    Ok((ds.subset(&train), ds.subset(&val), ds.subset(&test)))
}
