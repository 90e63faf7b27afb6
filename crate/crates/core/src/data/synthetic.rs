use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{Prng, RealMatrix};

/// Gaussian-cluster dataset with groups of deliberately confusable classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub n_dims: usize,
    pub samples_per_class: usize,
    /// Disjoint sets of class ids whose centers sit close together.
    pub overlap_groups: Vec<Vec<usize>>,
    /// Distance between centers that do not share an overlap group.
    pub separation: f64,
    /// Distance between centers inside one overlap group.
    pub overlap_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Ten classes with {2, 3, 5} mutually confusable, the desk-scale reference setting.
    pub fn reference() -> Self {
        Self {
            num_classes: 10,
            n_dims: 16,
            samples_per_class: 1000,
            overlap_groups: vec![vec![2, 3, 5]],
            separation: 4.5,
            overlap_separation: 2.0,
            noise_sigma: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.num_classes < 2 {
            return bad(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if self.n_dims == 0 || self.samples_per_class == 0 {
            return bad("n_dims and samples_per_class must be positive".into());
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return bad(format!("separation must be positive, got {}", self.separation));
        }
        if !(self.overlap_separation >= 0.0 && self.overlap_separation < self.separation) {
            return bad(format!(
                "overlap_separation must lie in [0, separation), got {}",
                self.overlap_separation
            ));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be positive, got {}", self.noise_sigma));
        }
        let mut seen = vec![false; self.num_classes];
        for group in &self.overlap_groups {
            for &k in group {
                if k >= self.num_classes {
                    return bad(format!("overlap group member {k} out of range"));
                }
                if seen[k] {
                    return bad(format!("class {k} appears in more than one overlap group"));
                }
                seen[k] = true;
            }
        }
        Ok(())
    }
}

/// Random orthonormal vectors via Gram-Schmidt on Gaussian draws.
fn orthonormal_directions(count: usize, dims: usize, rng: &mut Prng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dims).map(|_| rng.standard_normal()).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // a near-dependent draw is simply retried
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Class centers for `spec`, one row per class.
///
/// Classes outside overlap groups, and each overlap group as a whole, get an
/// "anchor" on a regular simplex with edge `separation` (scaled orthonormal
/// directions). Members of a group sit around the group anchor on a regular
/// simplex with edge `overlap_separation`, built from further directions
/// orthogonal to every anchor. Hence group members are `overlap_separation`
/// apart, lie within it of their centroid, and sit at least `separation` from
/// every other center. This needs one dimension per anchor plus one per group
/// member; fewer dimensions is an infeasible-geometry error.
pub fn synthetic_centers(spec: &SyntheticSpec) -> Result<RealMatrix> {
    spec.validate()?;
    let k = spec.num_classes;
    let groups: Vec<&Vec<usize>> = spec.overlap_groups.iter().filter(|g| g.len() >= 2).collect();

    // anchor id per class
    let mut anchor_of = vec![usize::MAX; k];
    let mut n_anchors = 0;
    for g in &groups {
        for &c in g.iter() {
            anchor_of[c] = n_anchors;
        }
        n_anchors += 1;
    }
    for a in anchor_of.iter_mut().filter(|a| **a == usize::MAX) {
        *a = n_anchors;
        n_anchors += 1;
    }

    let offset_dims: usize = groups.iter().map(|g| g.len()).sum();
    let needed = n_anchors + offset_dims;
    if needed > spec.n_dims {
        return Err(Error::InfeasibleGeometry(format!(
            "{k} classes with overlap groups {:?} need {needed} dimensions, have {}",
            spec.overlap_groups, spec.n_dims
        )));
    }

    let mut rng = Prng::new(spec.seed).substream("centers");
    let dirs = orthonormal_directions(needed, spec.n_dims, &mut rng);
    let anchor_scale = spec.separation / std::f64::consts::SQRT_2;
    let offset_scale = spec.overlap_separation / std::f64::consts::SQRT_2;

    let mut centers = RealMatrix::zeros(k, spec.n_dims);
    for c in 0..k {
        for (x, d) in centers.row_mut(c).iter_mut().zip(&dirs[anchor_of[c]]) {
            *x = anchor_scale * d;
        }
    }
    let mut next_dir = n_anchors;
    for g in &groups {
        let local = &dirs[next_dir..next_dir + g.len()];
        next_dir += g.len();
        let mean: Vec<f64> = (0..spec.n_dims)
            .map(|j| local.iter().map(|v| v[j]).sum::<f64>() / g.len() as f64)
            .collect();
        for (&c, v) in g.iter().zip(local) {
            for ((x, vj), mj) in centers.row_mut(c).iter_mut().zip(v).zip(&mean) {
                *x += offset_scale * (vj - mj);
            }
        }
    }

    verify_geometry(spec, &centers, &anchor_of)?;
    Ok(centers)
}

fn verify_geometry(spec: &SyntheticSpec, centers: &RealMatrix, anchor_of: &[usize]) -> Result<()> {
    let tol = 1e-9 * spec.separation.max(1.0);
    for i in 0..spec.num_classes {
        for j in i + 1..spec.num_classes {
            let d = distance(centers.row(i), centers.row(j));
            let same_group = anchor_of[i] == anchor_of[j];
            if !same_group && d < spec.separation - tol {
                return Err(Error::InfeasibleGeometry(format!(
                    "classes {i} and {j} are {d} apart, below separation {}",
                    spec.separation
                )));
            }
        }
    }
    for g in spec.overlap_groups.iter().filter(|g| g.len() >= 2) {
        let dims = spec.n_dims;
        let centroid: Vec<f64> = (0..dims)
            .map(|j| g.iter().map(|&c| centers[(c, j)]).sum::<f64>() / g.len() as f64)
            .collect();
        for &c in g {
            if distance(centers.row(c), &centroid) > spec.overlap_separation + tol {
                return Err(Error::InfeasibleGeometry(format!(
                    "class {c} is farther than {} from its group centroid",
                    spec.overlap_separation
                )));
            }
        }
    }
    Ok(())
}

/// Draws `samples_per_class` isotropic Gaussian samples around each class
/// center. Samples are ordered by class.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    let centers = synthetic_centers(spec)?;
    let root = Prng::new(spec.seed).substream("samples");
    let n = spec.num_classes * spec.samples_per_class;
    let mut data = Vec::with_capacity(n * spec.n_dims);
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.num_classes {
        let mut rng = root.substream_indexed("class", c as u64);
        for _ in 0..spec.samples_per_class {
            for &mu in centers.row(c) {
                data.push(mu + spec.noise_sigma * rng.standard_normal());
            }
            labels.push(c);
        }
    }
    Dataset::new(RealMatrix::from_vec(n, spec.n_dims, data)?, labels, spec.num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_geometry_holds() {
        let spec = SyntheticSpec::reference();
        let c = synthetic_centers(&spec).unwrap();
        let d = |i: usize, j: usize| distance(c.row(i), c.row(j));
        assert!((d(2, 3) - 2.0).abs() < 1e-9);
        assert!((d(3, 5) - 2.0).abs() < 1e-9);
        assert!((d(0, 1) - 4.5).abs() < 1e-9);
        assert!(d(2, 7) >= 4.5 - 1e-9);
    }

    #[test]
    fn deterministic() {
        let spec = SyntheticSpec {
            samples_per_class: 20,
            ..SyntheticSpec::reference()
        };
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
    }

    #[test]
    fn too_few_dimensions() {
        let spec = SyntheticSpec {
            n_dims: 8,
            ..SyntheticSpec::reference()
        };
        assert!(matches!(generate_synthetic(&spec), Err(Error::InfeasibleGeometry(_))));
    }

    #[test]
    fn rejects_invalid_specs() {
        let base = SyntheticSpec::reference();
        let overlapping = SyntheticSpec {
            overlap_groups: vec![vec![1, 2], vec![2, 3]],
            ..base.clone()
        };
        assert!(overlapping.validate().is_err());
        let wide = SyntheticSpec {
            overlap_separation: 5.0,
            ..base.clone()
        };
        assert!(wide.validate().is_err());
        let out_of_range = SyntheticSpec {
            overlap_groups: vec![vec![10]],
            ..base
        };
        assert!(out_of_range.validate().is_err());
    }

    #[test]
    fn sample_counts() {
        let spec = SyntheticSpec {
            num_classes: 3,
            n_dims: 3,
            samples_per_class: 7,
            overlap_groups: vec![],
            ..SyntheticSpec::reference()
        };
        let ds = generate_synthetic(&spec).unwrap();
        assert_eq!(ds.class_counts(), vec![7, 7, 7]);
        assert_eq!(ds.n_dims(), 3);
    }
}
