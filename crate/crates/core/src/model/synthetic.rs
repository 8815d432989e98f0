use std::f64::consts::TAU;

use crate::data::Matrix;
use crate::error::{invalid, Result};
use crate::seed;
use crate::synth::GroundTruth;

use super::{Model, Transfer};

/// Ground-truth function plus a fixed deviation γ(x) ~ N(0, σ²).
///
/// γ is a function of the input point: it is drawn from a hash of the row's
/// bit pattern and the noise seed, so the same row always gets the same
/// deviation, in any process and in any call order.
#[derive(Debug, Clone)]
pub struct SyntheticModel {
    truth: GroundTruth,
    sigma: f64,
    noise_seed: u64,
}

pub fn make_synthetic_model(truth: GroundTruth, sigma: f64, noise_seed: u64) -> Result<SyntheticModel> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("noise scale must be finite and >= 0, got {sigma}")));
    }
    Ok(SyntheticModel {
        truth,
        sigma,
        noise_seed,
    })
}

impl SyntheticModel {
    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise_seed
    }

    /// Standard-normal deviate attached to `row`.
    pub fn standard_deviate(&self, row: &[f64]) -> f64 {
        let h = seed::hash_row(self.noise_seed, row);
        let u1 = seed::unit_open(h);
        let u2 = seed::unit_open(seed::mix64(h));
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }

    /// γ(row).
    pub fn deviation(&self, row: &[f64]) -> f64 {
        if self.sigma == 0.0 {
            0.0
        } else {
            self.sigma * self.standard_deviate(row)
        }
    }

    pub fn output(&self, row: &[f64]) -> f64 {
        let base = self.truth.value(row);
        if self.sigma == 0.0 {
            base
        } else {
            base + self.deviation(row)
        }
    }
}

impl Model for SyntheticModel {
    fn arity(&self) -> usize {
        self.truth.n_features
    }

    fn transfer(&self) -> Transfer {
        Transfer::Identity
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(x.row_iter().map(|r| self.output(r)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::predict;
    use rand::Rng;

    #[test]
    fn linear_identity() {
        let gt = GroundTruth::from_terms(1, vec![(0, 1.0)], vec![]).unwrap();
        let m = make_synthetic_model(gt, 0.0, 0).unwrap();
        let x = Matrix::from_rows(&[[1.0], [0.0]]).unwrap();
        assert_eq!(predict(&m, &x).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn product_term() {
        let gt = GroundTruth::from_terms(2, vec![], vec![((0, 1), 1.0)]).unwrap();
        let m = make_synthetic_model(gt, 0.0, 0).unwrap();
        let x = Matrix::from_rows(&[[1.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(predict(&m, &x).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn noisy_model_is_deterministic() {
        let gt = GroundTruth::from_terms(3, vec![(0, 0.5)], vec![((1, 2), 0.25)]).unwrap();
        let m = make_synthetic_model(gt.clone(), 0.3, 11).unwrap();
        let x = Matrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 0.0, 1.0]]).unwrap();
        let a = predict(&m, &x).unwrap();
        let b = predict(&m, &x).unwrap();
        assert_eq!(a, b);
        // identical rows, identical outputs, independent of position
        assert_eq!(a[0], a[2]);
        let other = make_synthetic_model(gt, 0.3, 12).unwrap();
        assert_ne!(predict(&other, &x).unwrap(), a);
    }

    #[test]
    fn rejects_negative_sigma() {
        let gt = GroundTruth::from_terms(1, vec![], vec![]).unwrap();
        assert!(make_synthetic_model(gt.clone(), -0.1, 0).is_err());
        assert!(make_synthetic_model(gt, f64::NAN, 0).is_err());
    }

    #[test]
    fn deviation_distribution() {
        let sigma = 0.7;
        let gt = GroundTruth::from_terms(8, vec![], vec![]).unwrap();
        let m = make_synthetic_model(gt, sigma, 5).unwrap();
        let mut rng = seed::rng(99);
        let n = 100_000;
        let mut seen = std::collections::HashSet::new();
        let (mut sum, mut sumsq) = (0.0, 0.0);
        while seen.len() < n {
            let row: Vec<f64> = (0..8).map(|_| rng.gen_range(-1000i32..1000) as f64).collect();
            let bits: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            if !seen.insert(bits) {
                continue;
            }
            let g = m.deviation(&row);
            sum += g;
            sumsq += g * g;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "var {var}");
    }
}
