//! Kernel evaluation, Gram matrices, and the shifted input points used by
//! the single-perturbation trainer.
//!
//! The perturbation of feature `k` is applied in input space: the shifted
//! copies are `x - a e_k` and `x + a e_k`, and every feature-space inner
//! product is a kernel evaluation at those points. For the linear kernel
//! this is the same as shifting the `k`-th synthetic feature.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("RBF gamma must be positive and finite, got {0}")]
    BadGamma(f64),
    #[error("feature index {index} out of range for dimension {dimension}")]
    FeatureIndex { index: usize, dimension: usize },
    #[error("perturbation has {0} magnitudes for {1} points")]
    PerturbationLength(usize, usize),
    #[error("matrix is not positive definite even after jitter")]
    NotPositiveDefinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self, KernelError> {
        let spec = KernelSpec::Rbf { gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { gamma } if gamma > 0.0 && gamma.is_finite() => Ok(()),
            KernelSpec::Rbf { gamma } => Err(KernelError::BadGamma(gamma)),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, KernelSpec::Linear)
    }

    /// Unchecked evaluation; callers guarantee equal lengths.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], x2: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => x.iter().zip(x2).map(|(a, b)| a * b).sum(),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

impl std::fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Rbf { gamma } => write!(f, "rbf(gamma={gamma})"),
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], x2: &[f64]) -> Result<f64, KernelError> {
    if x.len() != x2.len() {
        return Err(KernelError::Dimension(x.len(), x2.len()));
    }
    Ok(spec.eval_unchecked(x, x2))
}

fn common_dim<R: AsRef<[f64]>>(rows: &[R]) -> Result<Option<usize>, KernelError> {
    let mut dim = None;
    for r in rows {
        let len = r.as_ref().len();
        match dim {
            None => dim = Some(len),
            Some(d) if d != len => return Err(KernelError::Dimension(d, len)),
            _ => {}
        }
    }
    Ok(dim)
}

/// `G[i, j] = k(a_i, b_j)`.
pub fn gram<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    spec: &KernelSpec,
    a: &[A],
    b: &[B],
) -> Result<DMatrix<f64>, KernelError> {
    if let (Some(da), Some(db)) = (common_dim(a)?, common_dim(b)?) {
        if da != db {
            return Err(KernelError::Dimension(da, db));
        }
    }
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
        spec.eval_unchecked(a[i].as_ref(), b[j].as_ref())
    }))
}

/// Gram matrix of a point set with itself; exactly symmetric.
pub fn gram_symmetric<A: AsRef<[f64]>>(
    spec: &KernelSpec,
    a: &[A],
) -> Result<DMatrix<f64>, KernelError> {
    common_dim(a)?;
    let n = a.len();
    let mut g = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = spec.eval_unchecked(a[i].as_ref(), a[j].as_ref());
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Rows `x_i - a_i e_k` and `x_i + a_i e_k`.
pub fn perturbed_points<R: AsRef<[f64]>>(
    x: &[R],
    k: usize,
    magnitudes: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), KernelError> {
    if magnitudes.len() != x.len() {
        return Err(KernelError::PerturbationLength(magnitudes.len(), x.len()));
    }
    let dim = common_dim(x)?.unwrap_or(0);
    if k >= dim {
        return Err(KernelError::FeatureIndex {
            index: k,
            dimension: dim,
        });
    }
    let mut minus = Vec::with_capacity(x.len());
    let mut plus = Vec::with_capacity(x.len());
    for (row, &a) in x.iter().zip(magnitudes) {
        let mut lo = row.as_ref().to_vec();
        let mut hi = lo.clone();
        lo[k] -= a;
        hi[k] += a;
        minus.push(lo);
        plus.push(hi);
    }
    Ok((minus, plus))
}

/// Cholesky factorization with the one-shot jitter policy: on failure the
/// diagonal is raised by `1e-10 * mean(diag)` once; a second failure is an error.
pub fn cholesky_with_jitter(
    m: DMatrix<f64>,
) -> Result<(Cholesky<f64, nalgebra::Dyn>, bool), KernelError> {
    let n = m.nrows();
    let mean_diag = if n == 0 {
        0.0
    } else {
        m.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n as f64
    };
    match Cholesky::new(m.clone()) {
        Some(c) => Ok((c, false)),
        None => {
            let ridge = 1e-10 * mean_diag.max(f64::MIN_POSITIVE);
            let mut jittered = m;
            for i in 0..n {
                jittered[(i, i)] += ridge;
            }
            Cholesky::new(jittered)
                .map(|c| (c, true))
                .ok_or(KernelError::NotPositiveDefinite)
        }
    }
}
