//! Discrete-ordinate sets: the directions mu_l in (-1, 1) and weights w_l
//! that replace angular integrals by finite sums. Weights are normalized to
//! the measure d(mu)/2, so they sum to one and the angular average of a
//! constant is that constant.

use crate::basis::GaussRule;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct AngularQuadrature {
    ordinates: Vec<f64>,
    weights: Vec<f64>,
}

impl AngularQuadrature {
    /// Gauss-Legendre ordinate set with `n` directions; `n` must be even and
    /// at least 2 so that no ordinate sits at mu = 0 and each direction has a
    /// mirror partner.
    pub fn gauss(n: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "ordinate count must be even and >= 2, got {n}"
            )));
        }
        let rule = GaussRule::new(n)?;
        let weights = rule.weights.iter().map(|w| 0.5 * w).collect();
        let quad = Self {
            ordinates: rule.nodes,
            weights,
        };
        quad.validate()?;
        Ok(quad)
    }

    /// Build from explicit ordinates and weights, enforcing the same
    /// invariants as `gauss`.
    pub fn from_parts(ordinates: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let quad = Self { ordinates, weights };
        quad.validate()?;
        Ok(quad)
    }

    /// Bypasses validation. Exists so verification tooling can construct a
    /// deliberately broken set and watch its checks fail.
    #[doc(hidden)]
    pub fn from_parts_unchecked(ordinates: Vec<f64>, weights: Vec<f64>) -> Self {
        Self { ordinates, weights }
    }

    fn validate(&self) -> Result<()> {
        let n = self.ordinates.len();
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "ordinate count must be even and >= 2, got {n}"
            )));
        }
        if self.weights.len() != n {
            return Err(Error::InvalidArgument(
                "ordinates and weights must have equal length".into(),
            ));
        }
        for i in 0..n {
            let mu = self.ordinates[i];
            if !(-1.0..=1.0).contains(&mu) || mu == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "ordinate {i} = {mu} outside (-1,1)\\{{0}}"
                )));
            }
            if i > 0 && self.ordinates[i - 1] >= mu {
                return Err(Error::InvalidArgument(
                    "ordinates must be strictly increasing".into(),
                ));
            }
            if !(self.weights[i] > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "weight {i} = {} not positive",
                    self.weights[i]
                )));
            }
            // mirror pairing must be exact, not approximate
            if self.ordinates[i] != -self.ordinates[n - 1 - i]
                || self.weights[i] != self.weights[n - 1 - i]
            {
                return Err(Error::InvalidArgument(format!(
                    "ordinate/weight pair {i} has no exact mirror partner"
                )));
            }
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-14 {
            return Err(Error::InvalidArgument(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ordinates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordinates.is_empty()
    }

    pub fn ordinates(&self) -> &[f64] {
        &self.ordinates
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Angular average: sum of w_l * values_l.
    pub fn average(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} per-ordinate values, got {}",
                self.len(),
                values.len()
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_ordinates_are_analytic() {
        let q = AngularQuadrature::gauss(2).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert!((q.ordinates()[0] + r).abs() <= 1e-15);
        assert!((q.ordinates()[1] - r).abs() <= 1e-15);
        assert!((q.weights()[0] - 0.5).abs() <= 1e-15);
        assert!((q.weights()[1] - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn moments_of_eight_ordinates() {
        // exact for polynomial degree <= 15 against the d(mu)/2 measure
        let q = AngularQuadrature::gauss(8).unwrap();
        for p in 0..=15u32 {
            let got: f64 = q
                .ordinates()
                .iter()
                .zip(q.weights())
                .map(|(mu, w)| w * mu.powi(p as i32))
                .sum();
            let exact = if p % 2 == 1 {
                0.0
            } else {
                1.0 / (p as f64 + 1.0)
            };
            assert!((got - exact).abs() <= 1e-15, "p={p} got={got}");
        }
    }

    #[test]
    fn weight_sum_and_mean_direction() {
        for n in [2usize, 4, 8, 16, 32] {
            let q = AngularQuadrature::gauss(n).unwrap();
            let sum: f64 = q.weights().iter().sum();
            assert!((sum - 1.0).abs() <= 1e-14);
            let mean: f64 = q
                .ordinates()
                .iter()
                .zip(q.weights())
                .map(|(mu, w)| w * mu)
                .sum();
            assert!(mean.abs() <= 1e-14);
        }
    }

    #[test]
    fn mirror_pairing_is_exact() {
        let q = AngularQuadrature::gauss(12).unwrap();
        let n = q.len();
        for i in 0..n {
            assert_eq!(q.ordinates()[i], -q.ordinates()[n - 1 - i]);
            assert_eq!(q.weights()[i], q.weights()[n - 1 - i]);
        }
    }

    #[test]
    fn odd_or_tiny_counts_rejected() {
        assert!(AngularQuadrature::gauss(9).is_err());
        assert!(AngularQuadrature::gauss(1).is_err());
        assert!(AngularQuadrature::gauss(0).is_err());
    }

    #[test]
    fn from_parts_validates() {
        let q = AngularQuadrature::gauss(4).unwrap();
        assert!(
            AngularQuadrature::from_parts(q.ordinates().to_vec(), q.weights().to_vec()).is_ok()
        );
        // perturbed weight breaks the mirror/sum invariants
        let mut w = q.weights().to_vec();
        w[1] += 1e-3;
        assert!(AngularQuadrature::from_parts(q.ordinates().to_vec(), w).is_err());
    }

    #[test]
    fn average_requires_matching_length() {
        let q = AngularQuadrature::gauss(4).unwrap();
        assert!(q.average(&[1.0, 2.0]).is_err());
        let avg = q.average(&[3.0; 4]).unwrap();
        assert!((avg - 3.0).abs() <= 1e-15);
    }

    #[test]
    fn average_is_linear() {
        let q = AngularQuadrature::gauss(6).unwrap();
        let v: Vec<f64> = (0..6).map(|i| (i as f64).sin()).collect();
        let u: Vec<f64> = (0..6).map(|i| (i as f64 * 0.3).cos()).collect();
        let combo: Vec<f64> = v.iter().zip(&u).map(|(a, b)| 2.5 * a - 0.75 * b).collect();
        let lhs = q.average(&combo).unwrap();
        let rhs = 2.5 * q.average(&v).unwrap() - 0.75 * q.average(&u).unwrap();
        assert!((lhs - rhs).abs() <= 1e-14);
    }
}
