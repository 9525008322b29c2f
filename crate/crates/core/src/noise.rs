//! Perturbation model for the chance-constrained trainer: noise quantiles,
//! the symmetry check that makes the deterministic reformulation valid, and
//! the homoscedastic perturbation magnitude `quantile(alpha) * std(x_k)`.
//!
//! Quantiles are computed by numerical inversion of the CDF:
//!
//! * Gaussian: Acklam's rational approximation, then Halley steps on
//!   `Phi(z) = erfc(-z / sqrt 2) / 2`.
//! * Student-t: bisection on the CDF, which is evaluated through the
//!   regularized incomplete beta function. The lower tail is solved
//!   directly and the upper tail by symmetry, so both tails keep full
//!   relative precision.

use serde::{Deserialize, Serialize};
use statrs::function::{beta::beta_reg, erf::erfc};
use thiserror::Error;

use crate::data::{sample_std, Dataset};

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("probability must lie in (0, 1), got {0}")]
    Probability(f64),
    #[error("degrees of freedom must be positive and finite, got {0}")]
    Dof(f64),
    #[error("alpha level must lie in [0.5, 1), got {0}")]
    AlphaLevel(f64),
    #[error("feature index {index} out of range for dimension {dimension}")]
    FeatureIndex { index: usize, dimension: usize },
    #[error("need at least 2 rows to estimate a standard deviation, found {0}")]
    TooFewRows(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    Gaussian,
    StudentT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    /// Degrees of freedom; ignored for the Gaussian family.
    pub dof: f64,
    pub alpha_level: f64,
}

impl NoiseSpec {
    pub fn gaussian(alpha_level: f64) -> Result<Self, NoiseError> {
        let spec = Self {
            family: NoiseFamily::Gaussian,
            dof: f64::INFINITY,
            alpha_level,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn student_t(dof: f64, alpha_level: f64) -> Result<Self, NoiseError> {
        let spec = Self {
            family: NoiseFamily::StudentT,
            dof,
            alpha_level,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        if self.family == NoiseFamily::StudentT && !(self.dof > 0.0 && self.dof.is_finite()) {
            return Err(NoiseError::Dof(self.dof));
        }
        if !(0.5..1.0).contains(&self.alpha_level) {
            return Err(NoiseError::AlphaLevel(self.alpha_level));
        }
        Ok(())
    }

    pub fn quantile(&self) -> Result<f64, NoiseError> {
        quantile(self.family, self.dof, self.alpha_level)
    }
}

/// Magnitudes `a_i` of the shift applied to feature `feature_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationVector {
    pub feature_index: usize,
    pub magnitudes: Vec<f64>,
}

impl PerturbationVector {
    pub fn is_zero(&self) -> bool {
        self.magnitudes.iter().all(|&a| a == 0.0)
    }
}

pub fn cdf(family: NoiseFamily, dof: f64, z: f64) -> f64 {
    match family {
        NoiseFamily::Gaussian => 0.5 * erfc(-z / std::f64::consts::SQRT_2),
        NoiseFamily::StudentT => {
            let tail = student_lower_tail(dof, -z.abs());
            if z > 0.0 {
                1.0 - tail
            } else {
                tail
            }
        }
    }
}

/// `P(T <= t)` for `t <= 0`.
fn student_lower_tail(dof: f64, t: f64) -> f64 {
    if t == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * beta_reg(0.5 * dof, 0.5, dof / (dof + t * t))
}

fn normal_density(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Acklam's rational approximation to the standard normal quantile
/// (relative error about 1.15e-9).
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239e0,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838e0,
        -2.549732539343734e0,
        4.374664141464968e0,
        2.938163982698783e0,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996e0,
        3.754408661907416e0,
    ];
    const P_LOW: f64 = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

fn gaussian_quantile(p: f64) -> f64 {
    // solve in the lower tail and reflect, so that 1 - p never loses digits
    if p > 0.5 {
        return -gaussian_quantile(1.0 - p);
    }
    if p == 0.5 {
        return 0.0;
    }
    let mut z = acklam(p);
    for _ in 0..3 {
        let f = cdf(NoiseFamily::Gaussian, 0.0, z) - p;
        let dens = normal_density(z);
        if dens == 0.0 {
            break;
        }
        // Halley step
        let u = f / dens;
        z -= u / (1.0 + 0.5 * z * u);
    }
    z
}

fn student_quantile(dof: f64, p: f64) -> f64 {
    if p > 0.5 {
        return -student_quantile(dof, 1.0 - p);
    }
    if p == 0.5 {
        return 0.0;
    }
    let mut lo = -1.0;
    while student_lower_tail(dof, lo) > p {
        lo *= 2.0;
    }
    let mut hi = 0.0;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi || hi - lo <= 1e-14 * mid.abs().max(1.0) {
            break;
        }
        if student_lower_tail(dof, mid) > p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Inverse CDF of the standard member of `family` (location 0, scale 1).
pub fn quantile(family: NoiseFamily, dof: f64, p: f64) -> Result<f64, NoiseError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(NoiseError::Probability(p));
    }
    match family {
        NoiseFamily::Gaussian => Ok(gaussian_quantile(p)),
        NoiseFamily::StudentT => {
            if !(dof > 0.0 && dof.is_finite()) {
                return Err(NoiseError::Dof(dof));
            }
            Ok(student_quantile(dof, p))
        }
    }
}

/// `quantile(alpha) + quantile(1 - alpha) == 0` within 1e-9.
pub fn assumption1_check(family: NoiseFamily, dof: f64, alpha_level: f64) -> bool {
    match (
        quantile(family, dof, alpha_level),
        quantile(family, dof, 1.0 - alpha_level),
    ) {
        (Ok(a), Ok(b)) => (a + b).abs() <= 1e-9,
        _ => false,
    }
}

/// Homoscedastic magnitudes: every `a_i` equals `quantile(alpha) * std(x_k)`.
pub fn compute_perturbation(
    ds: &Dataset,
    k: usize,
    spec: &NoiseSpec,
) -> Result<PerturbationVector, NoiseError> {
    spec.validate()?;
    if k >= ds.dim() {
        return Err(NoiseError::FeatureIndex {
            index: k,
            dimension: ds.dim(),
        });
    }
    if ds.len() < 2 {
        return Err(NoiseError::TooFewRows(ds.len()));
    }
    let std = sample_std(&ds.column(k));
    if std == 0.0 {
        log::warn!("feature {k} is constant; perturbation is zero");
    }
    let a = spec.quantile()? * std;
    Ok(PerturbationVector {
        feature_index: k,
        magnitudes: vec![a; ds.len()],
    })
}

/// Feature with the largest sample standard deviation; lowest index on ties.
pub fn select_noisy_feature(ds: &Dataset) -> usize {
    let mut best = 0;
    let mut best_std = f64::NEG_INFINITY;
    for k in 0..ds.dim() {
        let s = sample_std(&ds.column(k));
        if s > best_std {
            best = k;
            best_std = s;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_quantiles() {
        assert_eq!(quantile(NoiseFamily::Gaussian, 0.0, 0.5).unwrap(), 0.0);
        assert!(
            (quantile(NoiseFamily::Gaussian, 0.0, 0.975).unwrap() - 1.959963984540054).abs()
                < 1e-10
        );
        assert!((quantile(NoiseFamily::StudentT, 1.0, 0.75).unwrap() - 1.0).abs() < 1e-10);
        assert!(quantile(NoiseFamily::Gaussian, 0.0, 1.0).is_err());
        assert!(quantile(NoiseFamily::StudentT, -1.0, 0.3).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(NoiseSpec::gaussian(0.49).is_err());
        assert!(NoiseSpec::gaussian(1.0).is_err());
        assert!(NoiseSpec::student_t(0.0, 0.6).is_err());
        assert!(NoiseSpec::student_t(5.0, 0.6).is_ok());
    }

    #[test]
    fn symmetry_assumption() {
        assert!(assumption1_check(NoiseFamily::Gaussian, 0.0, 0.8));
        assert!(assumption1_check(NoiseFamily::StudentT, 5.0, 0.6));
        assert!(assumption1_check(NoiseFamily::StudentT, 1.0, 0.5));
    }

    #[test]
    fn perturbation_recipe() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![2.0]], vec![-1.0, 1.0]).unwrap();
        let a = compute_perturbation(&ds, 0, &NoiseSpec::gaussian(0.975).unwrap()).unwrap();
        assert_eq!(a.magnitudes.len(), 2);
        assert!((a.magnitudes[0] - 2.771808).abs() < 1e-6);
        let zero = compute_perturbation(&ds, 0, &NoiseSpec::gaussian(0.5).unwrap()).unwrap();
        assert!(zero.is_zero());
        let flat = Dataset::from_rows(&[vec![3.0], vec![3.0]], vec![-1.0, 1.0]).unwrap();
        assert!(
            compute_perturbation(&flat, 0, &NoiseSpec::gaussian(0.9).unwrap())
                .unwrap()
                .is_zero()
        );
        assert!(compute_perturbation(&ds, 1, &NoiseSpec::gaussian(0.9).unwrap()).is_err());
    }

    #[test]
    fn noisy_feature_selection() {
        let ds = Dataset::from_rows(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.5]], vec![-1.0, 1.0])
            .unwrap();
        assert_eq!(select_noisy_feature(&ds), 0);
        let ds = Dataset::from_rows(&[vec![1.0, 0.0], vec![1.1, 5.0]], vec![-1.0, 1.0]).unwrap();
        assert_eq!(select_noisy_feature(&ds), 1);
    }
}
