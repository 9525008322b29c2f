//! Convex linearly-constrained quadratic programs.
//!
//! ```text
//!     minimize    1/2 x'Qx + c'x
//!     subject to  A_eq x  = b_eq
//!                 A_in x <= b_in
//!                 lower <= x <= upper
//! ```
//!
//! Two engines share one solution contract:
//!
//! * [`solve`] / [`solve_with`]: a primal-dual interior-point method
//!   (Mehrotra predictor-corrector) for any instance, preceded by a
//!   phase-one feasibility solve.
//! * [`solve_grouped`] / [`solve_box_single_equality`]: a pairwise
//!   decomposition method for `min 1/2 x'Qx + c'x` with `y'x = 0`, `x >= 0`
//!   and disjoint group caps `sum_{u in g} x_u <= cap_g`. Singleton groups
//!   give the classical SVM box.
//!
//! Residuals are reported in relative form:
//!
//! * `feasibility_residual` is the largest constraint violation divided by
//!   `1 + max |b|` over the finite right-hand sides and bounds.
//! * `kkt_residual` is the larger of the stationarity residual divided by
//!   `1 + ||c||_inf + ||Qx||_inf` and the largest complementarity product
//!   divided by `1 + |objective|`. The decomposition engine reports its
//!   maximal violating-pair gap divided by `1 + ||c||_inf` instead.

mod decomposition;
mod dump;
mod ipm;
mod polish;

pub use decomposition::{solve_box_single_equality, solve_grouped, GroupedProblem};
pub use dump::{read_qp, write_qp};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("invalid quadratic program: {0}")]
    Invalid(String),
    #[error("linear algebra failure: {0}")]
    Numerical(String),
    #[error("cannot parse quadratic program dump: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QuadraticProgram {
    /// Unconstrained instance; add constraints with the `with_*` builders.
    pub fn new(q: DMatrix<f64>, c: DVector<f64>) -> Self {
        let n = c.len();
        Self {
            q,
            c,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_in = a;
        self.b_in = b;
        self
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.n();
        let bad = |msg: String| Err(QpError::Invalid(msg));
        if self.q.nrows() != n || self.q.ncols() != n {
            return bad(format!(
                "Q is {}x{}, expected {n}x{n}",
                self.q.nrows(),
                self.q.ncols()
            ));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return bad("equality block has inconsistent shape".into());
        }
        if self.a_in.ncols() != n || self.a_in.nrows() != self.b_in.len() {
            return bad("inequality block has inconsistent shape".into());
        }
        if self.lower.len() != n || self.upper.len() != n {
            return bad("bounds have wrong length".into());
        }
        let finite = self
            .q
            .iter()
            .chain(self.c.iter())
            .chain(self.a_eq.iter())
            .chain(self.b_eq.iter());
        let finite = finite.chain(self.a_in.iter()).chain(self.b_in.iter());
        if finite.into_iter().any(|v| !v.is_finite()) {
            return bad("non-finite data".into());
        }
        let scale = 1.0 + self.q.amax();
        for i in 0..n {
            for j in 0..i {
                if (self.q[(i, j)] - self.q[(j, i)]).abs() > 1e-10 * scale {
                    return bad(format!("Q not symmetric at ({i},{j})"));
                }
            }
        }
        for i in 0..n {
            let (l, u) = (self.lower[i], self.upper[i]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return bad(format!("invalid bounds [{l}, {u}] for variable {i}"));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x)
    }

    fn rhs_scale(&self) -> f64 {
        let finite = |v: &f64| v.is_finite();
        let m = self
            .b_eq
            .iter()
            .chain(self.b_in.iter())
            .chain(self.lower.iter().filter(|v| finite(v)))
            .chain(self.upper.iter().filter(|v| finite(v)))
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        1.0 + m
    }

    /// Largest constraint violation of `x`, relative to the right-hand-side scale.
    pub fn feasibility_residual(&self, x: &DVector<f64>) -> f64 {
        let mut worst = 0.0f64;
        if self.a_eq.nrows() > 0 {
            worst = worst.max((&self.a_eq * x - &self.b_eq).amax());
        }
        if self.a_in.nrows() > 0 {
            let r = &self.a_in * x - &self.b_in;
            worst = worst.max(r.iter().fold(0.0f64, |m, v| m.max(*v)));
        }
        for i in 0..self.n() {
            worst = worst.max(self.lower[i] - x[i]).max(x[i] - self.upper[i]);
        }
        worst / self.rhs_scale()
    }

    /// KKT residual of `(x, multipliers)` in the relative form documented at module level.
    pub fn kkt_residual(&self, x: &DVector<f64>, m: &Multipliers) -> f64 {
        let qx = &self.q * x;
        let mut grad = &qx + &self.c;
        if self.a_eq.nrows() > 0 {
            grad += self.a_eq.tr_mul(&m.eq);
        }
        if self.a_in.nrows() > 0 {
            grad += self.a_in.tr_mul(&m.ineq);
        }
        grad -= &m.lower;
        grad += &m.upper;
        let stationarity = grad.amax() / (1.0 + self.c.amax() + qx.amax());

        let mut comp = 0.0f64;
        if self.a_in.nrows() > 0 {
            let slack = &self.b_in - &self.a_in * x;
            for i in 0..slack.len() {
                comp = comp.max((slack[i] * m.ineq[i]).abs());
            }
        }
        for i in 0..self.n() {
            if self.lower[i].is_finite() {
                comp = comp.max(((x[i] - self.lower[i]) * m.lower[i]).abs());
            }
            if self.upper[i].is_finite() {
                comp = comp.max(((self.upper[i] - x[i]) * m.upper[i]).abs());
            }
        }
        let comp = comp / (1.0 + self.objective(x).abs());
        stationarity.max(comp)
    }

    /// Wolfe dual value `-1/2 x'Qx - b_eq'y - b_in'lambda + l'z_l - u'z_u`;
    /// a lower bound on the optimum when `(x, multipliers)` is stationary.
    pub fn dual_objective(&self, x: &DVector<f64>, m: &Multipliers) -> f64 {
        let mut v = -0.5 * x.dot(&(&self.q * x)) - self.b_eq.dot(&m.eq) - self.b_in.dot(&m.ineq);
        for i in 0..self.n() {
            if self.lower[i].is_finite() {
                v += self.lower[i] * m.lower[i];
            }
            if self.upper[i].is_finite() {
                v -= self.upper[i] * m.upper[i];
            }
        }
        v
    }
}

/// Lagrange multipliers, signed so that stationarity reads
/// `Qx + c + A_eq'eq + A_in'ineq - lower + upper = 0` with
/// `ineq, lower, upper >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub eq: DVector<f64>,
    pub ineq: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl Multipliers {
    pub fn zeros(n: usize, p: usize, q: usize) -> Self {
        Self {
            eq: DVector::zeros(p),
            ineq: DVector::zeros(q),
            lower: DVector::zeros(n),
            upper: DVector::zeros(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub feasibility_residual: f64,
    pub iterations: usize,
    pub status: QpStatus,
    pub multipliers: Multipliers,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol_kkt: f64,
    pub tol_feas: f64,
    pub max_iter: usize,
    /// Added to the diagonal of `Q` before solving (default 0).
    pub ridge: f64,
    /// Run the phase-one feasibility solve first. Callers that know a
    /// feasible point exists may switch it off.
    pub phase_one: bool,
    /// Refine the interior-point answer on its guessed active face.
    pub polish: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_kkt: 1e-6,
            tol_feas: 1e-8,
            max_iter: 50_000,
            ridge: 0.0,
            phase_one: true,
            polish: true,
        }
    }
}

/// Interior-point solve with default tolerances.
pub fn solve(qp: &QuadraticProgram) -> Result<QpSolution, QpError> {
    solve_with(qp, &SolverOptions::default())
}

pub fn solve_with(qp: &QuadraticProgram, opts: &SolverOptions) -> Result<QpSolution, QpError> {
    qp.validate()?;
    let ridged;
    let qp = if opts.ridge > 0.0 {
        let mut r = qp.clone();
        for i in 0..r.n() {
            r.q[(i, i)] += opts.ridge;
        }
        ridged = r;
        &ridged
    } else {
        qp
    };
    if opts.phase_one && !ipm::trivially_feasible(qp, opts.tol_feas) {
        if let Some(x) = ipm::phase_one(qp, opts)? {
            let n = qp.n();
            return Ok(QpSolution {
                objective: qp.objective(&x),
                feasibility_residual: qp.feasibility_residual(&x),
                kkt_residual: f64::INFINITY,
                iterations: 0,
                status: QpStatus::Infeasible,
                multipliers: Multipliers::zeros(n, qp.a_eq.nrows(), qp.a_in.nrows()),
                x,
            });
        }
    }
    let sol = ipm::interior_point(qp, opts)?;
    if !opts.polish || sol.status == QpStatus::Infeasible {
        return Ok(sol);
    }
    Ok(match polish::polish(qp, &sol, opts) {
        Some(mut p) => {
            if p.kkt_residual <= opts.tol_kkt && p.feasibility_residual <= opts.tol_feas {
                p.status = QpStatus::Optimal;
            }
            p
        }
        None => sol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(lo: f64, hi: f64) -> QuadraticProgram {
        QuadraticProgram::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, -1.0),
        )
        .with_bounds(DVector::from_element(1, lo), DVector::from_element(1, hi))
    }

    #[test]
    fn interior_minimum() {
        let s = solve(&one_d(0.0, 10.0)).unwrap();
        assert!(s.is_optimal());
        assert!((s.x[0] - 1.0).abs() < 1e-6);
        assert!((s.objective + 0.5).abs() < 1e-6);
    }

    #[test]
    fn clipped_minimum() {
        let s = solve(&one_d(0.0, 0.5)).unwrap();
        assert!(s.is_optimal());
        assert!((s.x[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn symmetric_equality() {
        let qp = QuadraticProgram::new(DMatrix::identity(2, 2), DVector::zeros(2)).with_equalities(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, 2.0),
        );
        let s = solve(&qp).unwrap();
        assert!(s.is_optimal());
        assert!((s.x[0] - 1.0).abs() < 1e-6 && (s.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn detects_infeasible() {
        // x1 + x2 = 3 with both in [0, 1]
        let qp = QuadraticProgram::new(DMatrix::identity(2, 2), DVector::zeros(2))
            .with_equalities(
                DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
                DVector::from_element(1, 3.0),
            )
            .with_bounds(DVector::zeros(2), DVector::from_element(2, 1.0));
        assert_eq!(solve(&qp).unwrap().status, QpStatus::Infeasible);

        // x <= -1 and x >= 0
        let qp = one_d(0.0, f64::INFINITY).with_inequalities(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, -1.0),
        );
        assert_eq!(solve(&qp).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn rejects_bad_shapes_and_asymmetry() {
        let qp = QuadraticProgram::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            DVector::zeros(2),
        );
        assert!(matches!(solve(&qp), Err(QpError::Invalid(_))));
        let qp = QuadraticProgram::new(DMatrix::identity(2, 2), DVector::zeros(3));
        assert!(matches!(solve(&qp), Err(QpError::Invalid(_))));
        let qp = one_d(1.0, 0.0);
        assert!(matches!(solve(&qp), Err(QpError::Invalid(_))));
    }

    #[test]
    fn polishing_lands_on_bounds() {
        let qp = QuadraticProgram::new(
            DMatrix::identity(3, 3),
            DVector::from_vec(vec![1.0, -2.0, 0.5]),
        )
        .with_bounds(DVector::zeros(3), DVector::from_element(3, 1.0));
        let s = solve(&qp).unwrap();
        assert!(s.is_optimal());
        assert_eq!(s.x.as_slice(), &[0.0, 1.0, 0.0]);
        let rough = solve_with(
            &qp,
            &SolverOptions {
                polish: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(rough.x[0] > 0.0);
    }

    #[test]
    fn max_iterations_is_honest() {
        let qp = QuadraticProgram::new(
            DMatrix::identity(3, 3),
            DVector::from_vec(vec![1.0, -2.0, 0.5]),
        )
        .with_bounds(DVector::zeros(3), DVector::from_element(3, 1.0));
        let opts = SolverOptions {
            max_iter: 1,
            polish: false,
            ..Default::default()
        };
        let s = solve_with(&qp, &opts).unwrap();
        assert_eq!(s.status, QpStatus::MaxIterations);
        assert!(s.kkt_residual > opts.tol_kkt || s.feasibility_residual > opts.tol_feas);
    }
}
