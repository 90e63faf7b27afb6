//! Dense kernels, loss, optimizer and random number generation.
//!
//! Everything here is single-threaded with a fixed reduction order, so
//! repeated evaluation on identical inputs is bit-identical.

mod matrix;
mod rng;

pub use matrix::{matmul, matmul_transpose_a, matmul_transpose_b, RealMatrix};
pub use rng::{derive_seed, Prng, PRNG_ALGORITHM};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp applied to the true-class probability before taking its log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Stochastic gradient descent with classical momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub shuffle_seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            momentum: 0.9,
            batch_size: 32,
            epochs: 30,
            shuffle_seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(logits: &RealMatrix) -> RealMatrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
    out
}

/// Class-weighted mean cross-entropy and its gradient with respect to the logits.
///
/// `loss = (1/n) Σ w[y_i] · −ln max(p[i, y_i], 1e-12)` and
/// `grad[i] = (1/n) · w[y_i] · (p[i] − onehot(y_i))`. The clamp only changes the
/// loss value; the gradient is the exact softmax gradient.
pub fn weighted_cross_entropy(
    probs: &RealMatrix,
    labels: &[usize],
    class_weights: &[f64],
) -> Result<(f64, RealMatrix)> {
    let (n, k) = probs.shape();
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for {n} probability rows",
            labels.len()
        )));
    }
    if class_weights.len() != k {
        return Err(Error::Dimension(format!(
            "{} class weights for {k} classes",
            class_weights.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {k} classes"
            )));
        }
        let w = class_weights[y];
        loss -= w * probs[(i, y)].max(LOG_CLAMP).ln();
        let row = grad.row_mut(i);
        row[y] -= 1.0;
        for g in row.iter_mut() {
            *g *= w * inv_n;
        }
    }
    Ok((loss * inv_n, grad))
}

/// One momentum step: `v ← μ·v − lr·g`, then `p ← p + v`.
pub fn sgd_step(params: &mut [f64], velocity: &mut [f64], grads: &[f64], config: &SgdConfig) -> Result<()> {
    if params.len() != velocity.len() || params.len() != grads.len() {
        return Err(Error::Dimension(format!(
            "sgd_step: params {}, velocity {}, grads {}",
            params.len(),
            velocity.len(),
            grads.len()
        )));
    }
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        *v = config.momentum * *v - config.learning_rate * g;
        *p += *v;
    }
    Ok(())
}

/// Glorot-uniform initialization, entries in `(−a, a)` with `a = √(6/(rows+cols))`.
pub fn xavier_init(rows: usize, cols: usize, rng: &mut Prng) -> RealMatrix {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.uniform(-a, a)).collect();
    RealMatrix::from_vec(rows, cols, data).expect("length matches by construction")
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Arithmetic mean and population variance (divide by n), two-pass.
pub fn mean_and_population_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Prng) -> RealMatrix {
        let data = (0..rows * cols).map(|_| rng.uniform(-scale, scale)).collect();
        RealMatrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let p = softmax_rows(&RealMatrix::from_rows(&[[3.0; 4]]).unwrap());
        for &x in p.as_slice() {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let p = softmax_rows(&RealMatrix::from_rows(&[[1000.0, 0.0]]).unwrap());
        assert!(p.is_finite());
        assert!((p[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(p[(0, 1)] < 1e-300);
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut rng = Prng::new(21);
        for _ in 0..50 {
            let logits = random_matrix(5, 6, 10.0, &mut rng);
            let mut shifted = logits.clone();
            for i in 0..shifted.rows() {
                let c = rng.uniform(-50.0, 50.0);
                for x in shifted.row_mut(i) {
                    *x += c;
                }
            }
            let a = softmax_rows(&logits);
            let b = softmax_rows(&shifted);
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() < 1e-12);
            }
            for row in a.iter_rows() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cross_entropy_at_optimum_is_zero() {
        let probs = RealMatrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let (loss, grad) = weighted_cross_entropy(&probs, &[0, 2], &[3.0, 0.5, 2.0]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn unit_weights_reduce_to_plain_cross_entropy() {
        let probs = RealMatrix::from_rows(&[[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]]).unwrap();
        let (loss, _) = weighted_cross_entropy(&probs, &[0, 1], &[1.0; 3]).unwrap();
        let expected = -(0.7f64.ln() + 0.3f64.ln()) / 2.0;
        assert!((loss - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let probs = RealMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let (loss, _) = weighted_cross_entropy(&probs, &[1], &[1.0, 1.0]).unwrap();
        assert!((loss - -(LOG_CLAMP.ln())).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = Prng::new(77);
        let logits = random_matrix(3, 4, 2.0, &mut rng);
        let labels = [2, 0, 3];
        let weights = [0.5, 1.0, 2.0, 4.0];
        let loss_at = |l: &RealMatrix| weighted_cross_entropy(&softmax_rows(l), &labels, &weights).unwrap().0;
        let (_, grad) = weighted_cross_entropy(&softmax_rows(&logits), &labels, &weights).unwrap();
        let h = 1e-6;
        let mut max_rel = 0.0f64;
        for idx in 0..logits.as_slice().len() {
            let mut plus = logits.clone();
            plus.as_mut_slice()[idx] += h;
            let mut minus = logits.clone();
            minus.as_mut_slice()[idx] -= h;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let analytic = grad.as_slice()[idx];
            let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn plain_gradient_step() {
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            ..SgdConfig::default()
        };
        let mut p = [0.0];
        let mut v = [0.0];
        sgd_step(&mut p, &mut v, &[1.0], &cfg).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-15);

        let mut q = [1.5, -2.0];
        let mut w = [0.0, 0.0];
        sgd_step(&mut q, &mut w, &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(q, [1.5, -2.0]);
    }

    #[test]
    fn momentum_matches_unrolled_recurrence() {
        let cfg = SgdConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            ..SgdConfig::default()
        };
        let (p0, g1, g2) = (0.3, 1.2, -0.7);
        let mut p = [p0];
        let mut v = [0.0];
        sgd_step(&mut p, &mut v, &[g1], &cfg).unwrap();
        sgd_step(&mut p, &mut v, &[g2], &cfg).unwrap();
        let v1 = -0.05 * g1;
        let v2 = 0.9 * v1 - 0.05 * g2;
        let expected = p0 + v1 + v2;
        assert!((p[0] - expected).abs() < 1e-12);
        assert!((v[0] - v2).abs() < 1e-12);
    }

    #[test]
    fn sgd_rejects_shape_mismatch() {
        let cfg = SgdConfig::default();
        assert!(sgd_step(&mut [0.0; 2], &mut [0.0; 2], &[0.0; 3], &cfg).is_err());
    }

    #[test]
    fn xavier_support_and_determinism() {
        let a = (6.0f64 / 30.0).sqrt();
        let m1 = xavier_init(10, 20, &mut Prng::new(4));
        let m2 = xavier_init(10, 20, &mut Prng::new(4));
        assert_eq!(m1, m2);
        assert!(m1.as_slice().iter().all(|x| x.abs() < a));
    }

    #[test]
    fn xavier_second_moment() {
        // Uniform(-a, a) has variance a²/3.
        let m = xavier_init(200, 500, &mut Prng::new(8));
        let a2 = 6.0 / 700.0;
        let (_, var) = mean_and_population_variance(m.as_slice());
        assert!((var - a2 / 3.0).abs() < 0.1 * a2 / 3.0, "var {var}");
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn config_validation() {
        assert!(SgdConfig::default().validate().is_ok());
        let bad = SgdConfig {
            momentum: 1.0,
            ..SgdConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SgdConfig {
            epochs: 0,
            ..SgdConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
