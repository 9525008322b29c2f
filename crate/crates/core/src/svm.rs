//! C-SVM, single-perturbation SVM and extreme-empirical-loss SVM trained
//! through their dual quadratic programs.
//!
//! All three duals share the label-scaled kernel matrix
//! `T[i, j] = y_i k(x_i, x_j) y_j`.
//!
//! * C-SVM: `min 1/2 a'Ta - 1'a`, `0 <= a <= C`, `y'a = 0`. Solved by the
//!   pairwise decomposition engine.
//! * SP-SVM: the same objective over the stacked `[alpha; beta; gamma]`
//!   with the 3N x 3N block matrix built from the points `x`, `x - a e_k`
//!   and `x + a e_k`, group caps `alpha_i + beta_i + gamma_i <= C` and
//!   `y'(alpha + beta + gamma) = 0`. Also solved by decomposition, with
//!   one group per training point.
//! * EEL-SVM: `min 1/2 alpha'T alpha - 1'alpha` with
//!   `alpha + beta + gamma = D1`, `y'alpha = 0`, `1'alpha + 1'beta = D` and
//!   `D1 = D / (N (1 - level))`. Solved by the interior-point engine over
//!   `(alpha, beta)` with `gamma` as the slack of `alpha + beta <= D1`.
//!
//! Bias recovery:
//!
//! * C-SVM averages `y_j - sum_i a_i y_i k(x_i, x_j)` over margin vectors
//!   `1e-8 C < a_j < (1 - 1e-8) C`. Without margin vectors it takes the
//!   midpoint of the interval of biases allowed by the KKT conditions.
//! * SP-SVM picks the largest of the sets
//!   `S_l = { i : theta_il > 1e-8 C and C - alpha_i - beta_i - gamma_i > 1e-8 C }`
//!   and averages `y_j - w'phi_l(x_j)` over it, where `phi_l` is the feature
//!   map of the shifted point that the active constraint refers to. When all
//!   three sets are empty the bias minimizes the primal hinge penalty for the
//!   fixed `w` (midpoint of the minimizing interval).
//! * EEL-SVM uses `S3 = { alpha, beta, gamma > tau }` or
//!   `S4 = { alpha, beta > tau, gamma <= tau }` with `tau = 1e-8 D1`,
//!   whichever is larger (`S3` on ties), with `z = 0`. When both are empty
//!   it falls back to the C-SVM rule with box `D1`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, RescaleParams};
use crate::kernels::{gram_symmetric, perturbed_points, KernelError, KernelSpec};
use crate::noise::{self, NoiseError, NoiseSpec, PerturbationVector};
use crate::qp::{self, GroupedProblem, QpError, QpStatus, QuadraticProgram, SolverOptions};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Relative tolerance for active-set membership in the bias rules.
const ACTIVE_TOL: f64 = 1e-8;
/// Tolerance for the post-training feasibility invariants.
const INVARIANT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("invalid hyperparameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("dual solver stopped with status {status:?} (kkt residual {kkt:.3e}, feasibility residual {feas:.3e})")]
    Solver {
        status: QpStatus,
        kkt: f64,
        feas: f64,
    },
    #[error("trained model violates its invariants: {0}")]
    Invariant(String),
    #[error("input has dimension {found}, model expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("unsupported model format version {0}")]
    FormatVersion(u32),
    #[error("model (de)serialization failed: {0}")]
    Serde(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[serde(alias = "csvm")]
    CSvm,
    #[serde(alias = "spsvm")]
    SpSvm,
    #[serde(alias = "eelsvm")]
    EelSvm,
}

impl std::str::FromStr for Variant {
    type Err = SvmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "c-svm" | "csvm" => Ok(Variant::CSvm),
            "sp-svm" | "spsvm" => Ok(Variant::SpSvm),
            "eel-svm" | "eelsvm" => Ok(Variant::EelSvm),
            _ => Err(SvmError::Parameter(format!("unknown model `{s}`"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::CSvm => "c-svm",
            Variant::SpSvm => "sp-svm",
            Variant::EelSvm => "eel-svm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// `C` for C-SVM and SP-SVM, `D` for EEL-SVM.
    pub penalty: f64,
    /// EEL level `alpha`.
    pub level: Option<f64>,
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub variant: Variant,
    pub kernel: KernelSpec,
    pub hyperparams: Hyperparams,
    pub support_data: Vec<Vec<f64>>,
    pub support_labels: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Empty for C-SVM.
    pub beta: Vec<f64>,
    /// Empty for C-SVM.
    pub gamma_coef: Vec<f64>,
    pub bias: f64,
    pub z_star: f64,
    pub perturbation: Option<PerturbationVector>,
    pub rescale: Option<RescaleParams>,
    /// Optimal value of the dual in minimization form.
    pub dual_objective: f64,
}

fn check_training_data(ds: &Dataset) -> Result<(), SvmError> {
    let (pos, neg) = ds.class_counts();
    if pos == 0 || neg == 0 {
        return Err(SvmError::SingleClass);
    }
    Ok(())
}

fn check_penalty(name: &str, v: f64) -> Result<(), SvmError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SvmError::Parameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn rows_of(ds: &Dataset) -> Vec<Vec<f64>> {
    ds.rows().map(|r| r.to_vec()).collect()
}

fn label_scaled(k: &DMatrix<f64>, y: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| y[i] * y[j] * k[(i, j)])
}

fn decomposition_options() -> SolverOptions {
    SolverOptions {
        tol_kkt: 1e-8,
        max_iter: 10_000_000,
        ..SolverOptions::default()
    }
}

fn require_optimal(sol: &qp::QpSolution) -> Result<(), SvmError> {
    if sol.status == QpStatus::Optimal {
        Ok(())
    } else {
        Err(SvmError::Solver {
            status: sol.status,
            kkt: sol.kkt_residual,
            feas: sol.feasibility_residual,
        })
    }
}

/// Bias from margin vectors of a boxed dual, else the KKT interval midpoint.
/// `g[j]` is `sum_i a_i y_i k(x_i, x_j)`.
fn box_bias(a: &[f64], y: &[f64], g: &[f64], upper: f64) -> f64 {
    let tol = ACTIVE_TOL * upper;
    let margin: Vec<f64> = (0..a.len())
        .filter(|&j| a[j] > tol && a[j] < upper - tol)
        .map(|j| y[j] - g[j])
        .collect();
    if !margin.is_empty() {
        return margin.iter().sum::<f64>() / margin.len() as f64;
    }
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for j in 0..a.len() {
        let at_zero = a[j] <= tol;
        let v = y[j] - g[j];
        // at zero: y f >= 1; at the cap: y f <= 1
        if (at_zero && y[j] > 0.0) || (!at_zero && y[j] < 0.0) {
            lo = lo.max(v);
        } else {
            hi = hi.min(v);
        }
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

/// Minimizes `sum_i max(0, 1 - y_i (h_i + b))` over `b`; midpoint of the
/// minimizing interval.
fn hinge_bias(h: &[f64], y: &[f64]) -> f64 {
    let cost = |b: f64| {
        h.iter()
            .zip(y)
            .map(|(hi, yi)| (1.0 - yi * (hi + b)).max(0.0))
            .sum::<f64>()
    };
    let mut breaks: Vec<f64> = h.iter().zip(y).map(|(hi, yi)| yi - hi).collect();
    breaks.sort_by(f64::total_cmp);
    let values: Vec<f64> = breaks.iter().map(|&b| cost(b)).collect();
    let best = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * (1.0 + best.abs());
    let first = values.iter().position(|&v| v <= best + tol).unwrap_or(0);
    let last = values.iter().rposition(|&v| v <= best + tol).unwrap_or(0);
    0.5 * (breaks[first] + breaks[last])
}

fn csvm_problem(ds: &Dataset, c: f64, kernel: &KernelSpec) -> Result<GroupedProblem, SvmError> {
    let x = rows_of(ds);
    let y = ds.labels().to_vec();
    let n = x.len();
    let q = label_scaled(&gram_symmetric(kernel, &x)?, &y);
    Ok(GroupedProblem::boxed(
        q,
        DVector::from_element(n, -1.0),
        y,
        vec![c; n],
    ))
}

pub fn train_csvm(ds: &Dataset, c: f64, kernel: KernelSpec) -> Result<TrainedModel, SvmError> {
    check_training_data(ds)?;
    check_penalty("C", c)?;
    kernel.validate()?;
    let x = rows_of(ds);
    let y = ds.labels().to_vec();
    let n = x.len();
    let problem = csvm_problem(ds, c, &kernel)?;
    let sol = qp::solve_grouped(&problem, &decomposition_options())?;
    require_optimal(&sol)?;
    let a: Vec<f64> = sol.x.iter().copied().collect();
    // (T a)_j = y_j g_j
    let ta = &problem.q * &sol.x;
    let g: Vec<f64> = (0..n).map(|j| y[j] * ta[j]).collect();
    let bias = box_bias(&a, &y, &g, c);
    let model = TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        variant: Variant::CSvm,
        kernel,
        hyperparams: Hyperparams {
            penalty: c,
            level: None,
            noise: None,
        },
        support_data: x,
        support_labels: y,
        alpha: a,
        beta: Vec::new(),
        gamma_coef: Vec::new(),
        bias,
        z_star: 0.0,
        perturbation: None,
        rescale: None,
        dual_objective: sol.objective,
    };
    model.check_invariants().map_err(SvmError::Invariant)?;
    Ok(model)
}

/// Stacked dual over `[x; x - a e_k; x + a e_k]` with one cap per point.
fn sp_problem(
    ds: &Dataset,
    c: f64,
    kernel: &KernelSpec,
    noise: &NoiseSpec,
    feature_index: Option<usize>,
) -> Result<(GroupedProblem, PerturbationVector), SvmError> {
    let k = feature_index.unwrap_or_else(|| noise::select_noisy_feature(ds));
    let perturbation = noise::compute_perturbation(ds, k, noise)?;
    if perturbation.is_zero() {
        log::warn!("perturbation of feature {k} is zero; SP-SVM reduces to C-SVM");
    }
    let x = rows_of(ds);
    let y = ds.labels().to_vec();
    let n = x.len();
    let (minus, plus) = perturbed_points(&x, k, &perturbation.magnitudes)?;
    let points: Vec<&[f64]> = x
        .iter()
        .chain(minus.iter())
        .chain(plus.iter())
        .map(|r| r.as_slice())
        .collect();
    let y3: Vec<f64> = y.iter().cycle().take(3 * n).copied().collect();
    let q = label_scaled(&gram_symmetric(kernel, &points)?, &y3);
    let problem = GroupedProblem {
        q,
        c: DVector::from_element(3 * n, -1.0),
        y: y3,
        group_of: (0..3 * n).map(|u| u % n).collect(),
        caps: vec![c; n],
    };
    Ok((problem, perturbation))
}

/// `feature_index = None` selects the feature with the largest standard deviation.
pub fn train_spsvm(
    ds: &Dataset,
    c: f64,
    kernel: KernelSpec,
    noise: &NoiseSpec,
    feature_index: Option<usize>,
) -> Result<TrainedModel, SvmError> {
    check_training_data(ds)?;
    check_penalty("C", c)?;
    kernel.validate()?;
    noise.validate()?;
    let (problem, perturbation) = sp_problem(ds, c, &kernel, noise, feature_index)?;
    let x = rows_of(ds);
    let y = ds.labels().to_vec();
    let n = x.len();
    let sol = qp::solve_grouped(&problem, &decomposition_options())?;
    require_optimal(&sol)?;
    let theta = &sol.x;
    let alpha: Vec<f64> = theta.rows(0, n).iter().copied().collect();
    let beta: Vec<f64> = theta.rows(n, n).iter().copied().collect();
    let gamma: Vec<f64> = theta.rows(2 * n, n).iter().copied().collect();

    // w'phi_l(x_j) = y_j (T theta)_(l, j)
    let t_theta = &problem.q * theta;
    let f_l = |l: usize, j: usize| y[j] * t_theta[l * n + j];
    let tol = ACTIVE_TOL * c;
    let coef = [&alpha, &beta, &gamma];
    let sets: Vec<Vec<usize>> = (0..3)
        .map(|l| {
            (0..n)
                .filter(|&i| coef[l][i] > tol && c - alpha[i] - beta[i] - gamma[i] > tol)
                .collect()
        })
        .collect();
    // largest set, lowest family index on ties
    let (best_l, best_set) = sets.iter().enumerate().fold((0, &sets[0]), |acc, (l, s)| {
        if s.len() > acc.1.len() {
            (l, s)
        } else {
            acc
        }
    });
    let bias = if !best_set.is_empty() {
        best_set.iter().map(|&j| y[j] - f_l(best_l, j)).sum::<f64>() / best_set.len() as f64
    } else {
        // worst case over the three constraint families for each point
        let h: Vec<f64> = (0..n)
            .map(|j| {
                let vals = [f_l(0, j), f_l(1, j), f_l(2, j)];
                if y[j] > 0.0 {
                    vals.iter().cloned().fold(f64::INFINITY, f64::min)
                } else {
                    vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect();
        hinge_bias(&h, &y)
    };

    let model = TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        variant: Variant::SpSvm,
        kernel,
        hyperparams: Hyperparams {
            penalty: c,
            level: None,
            noise: Some(*noise),
        },
        support_data: x,
        support_labels: y,
        alpha,
        beta,
        gamma_coef: gamma,
        bias,
        z_star: 0.0,
        perturbation: Some(perturbation),
        rescale: None,
        dual_objective: sol.objective,
    };
    model.check_invariants().map_err(SvmError::Invariant)?;
    Ok(model)
}

fn eel_options() -> SolverOptions {
    SolverOptions {
        tol_kkt: 1e-11,
        tol_feas: 1e-13,
        phase_one: false,
        ..SolverOptions::default()
    }
}

/// Accepts a stalled interior-point run whose residuals are still small.
fn accept_ipm(sol: &qp::QpSolution) -> Result<(), SvmError> {
    if sol.status == QpStatus::Optimal
        || (sol.kkt_residual <= 1e-8 && sol.feasibility_residual <= 1e-11)
    {
        if sol.status != QpStatus::Optimal {
            log::debug!(
                "accepting interior-point iterate with kkt residual {:.3e}",
                sol.kkt_residual
            );
        }
        Ok(())
    } else {
        Err(SvmError::Solver {
            status: sol.status,
            kkt: sol.kkt_residual,
            feas: sol.feasibility_residual,
        })
    }
}

fn eel_box(d: f64, n: usize, level: f64) -> Result<f64, SvmError> {
    check_penalty("D", d)?;
    if !(0.0..1.0).contains(&level) {
        return Err(SvmError::Parameter(format!(
            "EEL level must lie in [0, 1), got {level}"
        )));
    }
    Ok(d / (n as f64 * (1.0 - level)))
}

/// Variables `(alpha, beta)`; `gamma` is the slack of `alpha + beta <= D1`.
fn eel_program(t: &DMatrix<f64>, y: &[f64], d: f64, d1: f64) -> QuadraticProgram {
    let n = y.len();
    let mut q = DMatrix::zeros(2 * n, 2 * n);
    q.view_mut((0, 0), (n, n)).copy_from(t);
    let mut c = DVector::zeros(2 * n);
    c.rows_mut(0, n).fill(-1.0);
    let mut a_eq = DMatrix::zeros(2, 2 * n);
    for i in 0..n {
        a_eq[(0, i)] = y[i];
        a_eq[(1, i)] = 1.0;
        a_eq[(1, n + i)] = 1.0;
    }
    let mut a_in = DMatrix::zeros(n, 2 * n);
    for i in 0..n {
        a_in[(i, i)] = 1.0;
        a_in[(i, n + i)] = 1.0;
    }
    QuadraticProgram::new(q, c)
        .with_equalities(a_eq, DVector::from_vec(vec![0.0, d]))
        .with_inequalities(a_in, DVector::from_element(n, d1))
        .with_bounds(
            DVector::zeros(2 * n),
            DVector::from_element(2 * n, f64::INFINITY),
        )
}

pub fn train_eelsvm(
    ds: &Dataset,
    d: f64,
    kernel: KernelSpec,
    level: f64,
) -> Result<TrainedModel, SvmError> {
    check_training_data(ds)?;
    kernel.validate()?;
    let x = rows_of(ds);
    let y = ds.labels().to_vec();
    let n = x.len();
    let d1 = eel_box(d, n, level)?;
    let t = label_scaled(&gram_symmetric(&kernel, &x)?, &y);
    let (alpha, beta, objective): (Vec<f64>, Vec<f64>, f64) = if level == 0.0 {
        // N D1 = D pins every alpha_i + beta_i to D1, so the program has no
        // interior. Eliminate beta and solve the box-constrained remainder.
        let sol = qp::solve_grouped(&csvm_problem(ds, d1, &kernel)?, &decomposition_options())?;
        require_optimal(&sol)?;
        let alpha: Vec<f64> = sol.x.iter().map(|v| v.clamp(0.0, d1)).collect();
        let beta = alpha.iter().map(|a| d1 - a).collect();
        (alpha, beta, sol.objective)
    } else {
        let sol = qp::solve_with(&eel_program(&t, &y, d, d1), &eel_options())?;
        accept_ipm(&sol)?;
        let alpha = sol.x.rows(0, n).iter().map(|v| v.max(0.0)).collect();
        let beta = sol.x.rows(n, n).iter().map(|v| v.max(0.0)).collect();
        (alpha, beta, sol.objective)
    };
    let gamma: Vec<f64> = (0..n).map(|i| (d1 - alpha[i] - beta[i]).max(0.0)).collect();

    let ta = &t * DVector::from_column_slice(&alpha);
    let g: Vec<f64> = (0..n).map(|j| y[j] * ta[j]).collect();
    let tau = ACTIVE_TOL * d1;
    let s3: Vec<usize> = (0..n)
        .filter(|&i| alpha[i] > tau && beta[i] > tau && gamma[i] > tau)
        .collect();
    let s4: Vec<usize> = (0..n)
        .filter(|&i| alpha[i] > tau && beta[i] > tau && gamma[i] <= tau)
        .collect();
    let chosen = if s4.len() > s3.len() { &s4 } else { &s3 };
    let bias = if !chosen.is_empty() {
        chosen.iter().map(|&j| y[j] - g[j]).sum::<f64>() / chosen.len() as f64
    } else {
        box_bias(&alpha, &y, &g, d1)
    };

    let model = TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        variant: Variant::EelSvm,
        kernel,
        hyperparams: Hyperparams {
            penalty: d,
            level: Some(level),
            noise: None,
        },
        support_data: x,
        support_labels: y,
        alpha,
        beta,
        gamma_coef: gamma,
        bias,
        z_star: 0.0,
        perturbation: None,
        rescale: None,
        dual_objective: objective,
    };
    model.check_invariants().map_err(SvmError::Invariant)?;
    Ok(model)
}

/// Optimal value of the reduced EEL dual
/// `min 1/2 a'Ta - 1'a` s.t. `0 <= a <= D1`, `y'a = 0`, `1'a <= D`.
/// It must agree with the full three-block dual.
pub fn eel_reduced_dual_objective(
    ds: &Dataset,
    d: f64,
    kernel: KernelSpec,
    level: f64,
) -> Result<f64, SvmError> {
    check_training_data(ds)?;
    kernel.validate()?;
    let x = rows_of(ds);
    let y = ds.labels().to_vec();
    let n = x.len();
    let d1 = eel_box(d, n, level)?;
    let t = label_scaled(&gram_symmetric(&kernel, &x)?, &y);
    let program = QuadraticProgram::new(t, DVector::from_element(n, -1.0))
        .with_equalities(DMatrix::from_row_slice(1, n, &y), DVector::zeros(1))
        .with_inequalities(
            DMatrix::from_element(1, n, 1.0),
            DVector::from_element(1, d),
        )
        .with_bounds(DVector::zeros(n), DVector::from_element(n, d1));
    let sol = qp::solve_with(&program, &eel_options())?;
    accept_ipm(&sol)?;
    Ok(sol.objective)
}

/// One fit request: the variant plus its hyperparameters. SP-SVM reads its
/// level from `noise`; EEL-SVM from `level`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    pub variant: Variant,
    pub penalty: f64,
    pub kernel: KernelSpec,
    pub level: Option<f64>,
    pub noise: Option<NoiseSpec>,
    pub feature_index: Option<usize>,
}

impl TrainSpec {
    fn level(&self) -> Result<f64, SvmError> {
        self.level
            .ok_or_else(|| SvmError::Parameter("EEL-SVM needs a level alpha".into()))
    }

    fn noise(&self) -> Result<&NoiseSpec, SvmError> {
        self.noise
            .as_ref()
            .ok_or_else(|| SvmError::Parameter("SP-SVM needs a noise model".into()))
    }

    pub fn train(&self, ds: &Dataset) -> Result<TrainedModel, SvmError> {
        match self.variant {
            Variant::CSvm => train_csvm(ds, self.penalty, self.kernel),
            Variant::SpSvm => train_spsvm(
                ds,
                self.penalty,
                self.kernel,
                self.noise()?,
                self.feature_index,
            ),
            Variant::EelSvm => train_eelsvm(ds, self.penalty, self.kernel, self.level()?),
        }
    }

    /// The dual program the trainer solves, in general form.
    pub fn dual_program(&self, ds: &Dataset) -> Result<QuadraticProgram, SvmError> {
        check_training_data(ds)?;
        self.kernel.validate()?;
        match self.variant {
            Variant::CSvm => {
                check_penalty("C", self.penalty)?;
                Ok(csvm_problem(ds, self.penalty, &self.kernel)?.to_quadratic_program())
            }
            Variant::SpSvm => {
                check_penalty("C", self.penalty)?;
                let noise = self.noise()?;
                noise.validate()?;
                Ok(
                    sp_problem(ds, self.penalty, &self.kernel, noise, self.feature_index)?
                        .0
                        .to_quadratic_program(),
                )
            }
            Variant::EelSvm => {
                let y = ds.labels();
                let d1 = eel_box(self.penalty, ds.len(), self.level()?)?;
                let t = label_scaled(&gram_symmetric(&self.kernel, &rows_of(ds))?, y);
                Ok(eel_program(&t, y, self.penalty, d1))
            }
        }
    }
}

impl TrainedModel {
    pub fn dim(&self) -> usize {
        self.support_data.first().map_or(0, |r| r.len())
    }

    pub fn n_train(&self) -> usize {
        self.support_labels.len()
    }

    /// Attaches the rescaling that prediction applies to raw inputs.
    pub fn with_rescale(mut self, rescale: RescaleParams) -> Self {
        self.rescale = Some(rescale);
        self
    }

    /// Checks the dual feasibility invariants; returns a description of the
    /// first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.n_train();
        let tol = INVARIANT_TOL;
        let y = &self.support_labels;
        if self.alpha.len() != n || self.support_data.len() != n {
            return Err("coefficient vector length differs from training size".into());
        }
        let nonneg = |name: &str, v: &[f64]| match v.iter().position(|&a| a < -1e-8) {
            Some(i) => Err(format!("{name}[{i}] = {} is negative", v[i])),
            None => Ok(()),
        };
        nonneg("alpha", &self.alpha)?;
        let dot = |v: &[f64]| v.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        let penalty = self.hyperparams.penalty;
        match self.variant {
            Variant::CSvm => {
                if let Some(i) = self.alpha.iter().position(|&a| a > penalty + tol) {
                    return Err(format!("alpha[{i}] exceeds C"));
                }
                let s = dot(&self.alpha);
                if s.abs() > tol {
                    return Err(format!("y'alpha = {s:e}"));
                }
            }
            Variant::SpSvm => {
                nonneg("beta", &self.beta)?;
                nonneg("gamma", &self.gamma_coef)?;
                if self.beta.len() != n || self.gamma_coef.len() != n {
                    return Err("beta/gamma length differs from training size".into());
                }
                for i in 0..n {
                    if self.alpha[i] + self.beta[i] + self.gamma_coef[i] > penalty + tol {
                        return Err(format!("group {i} exceeds C"));
                    }
                }
                let s = dot(&self.alpha) + dot(&self.beta) + dot(&self.gamma_coef);
                if s.abs() > tol {
                    return Err(format!("y'(alpha + beta + gamma) = {s:e}"));
                }
            }
            Variant::EelSvm => {
                nonneg("beta", &self.beta)?;
                nonneg("gamma", &self.gamma_coef)?;
                if self.beta.len() != n || self.gamma_coef.len() != n {
                    return Err("beta/gamma length differs from training size".into());
                }
                let level = self.hyperparams.level.unwrap_or(0.0);
                let d1 = penalty / (n as f64 * (1.0 - level));
                for i in 0..n {
                    let s = self.alpha[i] + self.beta[i] + self.gamma_coef[i];
                    if (s - d1).abs() > tol {
                        return Err(format!("alpha + beta + gamma = {s} at {i}, expected {d1}"));
                    }
                }
                let s = dot(&self.alpha);
                if s.abs() > tol {
                    return Err(format!("y'alpha = {s:e}"));
                }
                let total: f64 = self.alpha.iter().chain(&self.beta).sum();
                if (total - penalty).abs() > tol {
                    return Err(format!("1'alpha + 1'beta = {total}, expected {penalty}"));
                }
            }
        }
        Ok(())
    }

    /// Expansion points and their coefficients `y_i * coefficient`.
    fn expansion(&self) -> Vec<(Vec<f64>, f64)> {
        let y = &self.support_labels;
        let mut terms = Vec::new();
        for (i, row) in self.support_data.iter().enumerate() {
            if self.alpha[i] != 0.0 {
                terms.push((row.clone(), y[i] * self.alpha[i]));
            }
        }
        if self.variant == Variant::SpSvm {
            if let Some(p) = &self.perturbation {
                let k = p.feature_index;
                for (i, row) in self.support_data.iter().enumerate() {
                    for (coef, sign) in [(self.beta[i], -1.0), (self.gamma_coef[i], 1.0)] {
                        if coef != 0.0 {
                            let mut r = row.clone();
                            r[k] += sign * p.magnitudes[i];
                            terms.push((r, y[i] * coef));
                        }
                    }
                }
            }
        }
        terms
    }

    /// Decision values for raw (un-rescaled) input rows.
    pub fn decision_function<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<Vec<f64>, SvmError> {
        let d = self.dim();
        let terms = self.expansion();
        rows.iter()
            .map(|r| {
                let r = r.as_ref();
                if r.len() != d {
                    return Err(SvmError::Dimension {
                        expected: d,
                        found: r.len(),
                    });
                }
                let scaled;
                let x = match &self.rescale {
                    Some(p) => {
                        scaled = p.apply_row(r);
                        scaled.as_slice()
                    }
                    None => r,
                };
                let s: f64 = terms
                    .iter()
                    .map(|(p, c)| c * self.kernel.eval_unchecked(p, x))
                    .sum();
                Ok(s + self.bias)
            })
            .collect()
    }

    /// Labels (`sign`, with `sign(0) = +1`) and decision values.
    pub fn predict<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<(Vec<f64>, Vec<f64>), SvmError> {
        let values = self.decision_function(rows)?;
        let labels = values
            .iter()
            .map(|&v| if v >= 0.0 { 1.0 } else { -1.0 })
            .collect();
        Ok((labels, values))
    }

    pub fn predict_dataset(&self, ds: &Dataset) -> Result<(Vec<f64>, Vec<f64>), SvmError> {
        let rows: Vec<&[f64]> = ds.rows().collect();
        self.predict(&rows)
    }

    /// Primal weight vector in the model's input space (linear kernel only).
    pub fn linear_weights(&self) -> Option<Vec<f64>> {
        if !self.kernel.is_linear() {
            return None;
        }
        let mut w = vec![0.0; self.dim()];
        for (p, c) in self.expansion() {
            for (wj, pj) in w.iter_mut().zip(&p) {
                *wj += c * pj;
            }
        }
        Some(w)
    }

    /// `||w||^2`, evaluated through the kernel expansion.
    pub fn weight_norm_sq(&self) -> f64 {
        let terms = self.expansion();
        let mut s = 0.0;
        for (p, c) in &terms {
            for (p2, c2) in &terms {
                s += c * c2 * self.kernel.eval_unchecked(p, p2);
            }
        }
        s
    }

    /// Value of the primal objective at the trained `(w, b)`, with the
    /// slacks implied by the constraints. For EEL-SVM the free variable `z`
    /// is minimized out, which gives `1/2 ||w||^2 + D eel(hinge, level)`.
    pub fn primal_objective(&self) -> f64 {
        let half_norm = 0.5 * self.weight_norm_sq();
        let y = &self.support_labels;
        let f = self.decision_function_internal(&self.support_data);
        match self.variant {
            Variant::CSvm => {
                half_norm
                    + self.hyperparams.penalty
                        * f.iter()
                            .zip(y)
                            .map(|(fi, yi)| (1.0 - yi * fi).max(0.0))
                            .sum::<f64>()
            }
            Variant::SpSvm => {
                let p = self
                    .perturbation
                    .as_ref()
                    .expect("SP model carries its perturbation");
                let k = p.feature_index;
                let mut minus = self.support_data.clone();
                let mut plus = self.support_data.clone();
                for i in 0..minus.len() {
                    minus[i][k] -= p.magnitudes[i];
                    plus[i][k] += p.magnitudes[i];
                }
                let fm = self.decision_function_internal(&minus);
                let fp = self.decision_function_internal(&plus);
                let xi: f64 = (0..y.len())
                    .map(|i| {
                        [f[i], fm[i], fp[i]]
                            .iter()
                            .map(|v| (1.0 - y[i] * v).max(0.0))
                            .fold(0.0, f64::max)
                    })
                    .sum();
                half_norm + self.hyperparams.penalty * xi
            }
            Variant::EelSvm => {
                let hinge: Vec<f64> = f
                    .iter()
                    .zip(y)
                    .map(|(fi, yi)| (1.0 - yi * fi).max(0.0))
                    .collect();
                let level = self.hyperparams.level.unwrap_or(0.0);
                half_norm
                    + self.hyperparams.penalty
                        * crate::losses::eel(&hinge, level).unwrap_or(f64::NAN)
            }
        }
    }

    /// Decision values for rows already in the model's input space.
    fn decision_function_internal(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        let terms = self.expansion();
        rows.iter()
            .map(|x| {
                terms
                    .iter()
                    .map(|(p, c)| c * self.kernel.eval_unchecked(p, x))
                    .sum::<f64>()
                    + self.bias
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String, SvmError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, SvmError> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(s)?;
        if header.format_version != MODEL_FORMAT_VERSION {
            return Err(SvmError::FormatVersion(header.format_version));
        }
        Ok(serde_json::from_str(s)?)
    }
}
