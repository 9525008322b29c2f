//! Pairwise decomposition for SVM-type duals with group caps.
//!
//! Solves
//!
//! ```text
//!     minimize    1/2 x'Qx + c'x
//!     subject to  y'x = 0,  x >= 0,  sum_{u in g} x_u <= cap_g  for every group g
//! ```
//!
//! where `y` is `±1` and constant inside each group. Every elementary
//! feasible direction of this constraint system touches at most two
//! variables, so optimality can be certified and approached with two-variable
//! steps, as in SMO. A step either trades mass between two groups along
//! `y_i e_i - y_j e_j`, or moves mass between two members of a full group.
//! The cross-group pair is chosen with the second-order rule of Fan, Chen
//! and Lin; in-group pairs of full groups compete on the same predicted gain.

use nalgebra::{DMatrix, DVector};

use super::{Multipliers, QpError, QpSolution, QpStatus, QuadraticProgram, SolverOptions};

const TAU: f64 = 1e-12;

/// Problem data for [`solve_grouped`].
#[derive(Debug, Clone)]
pub struct GroupedProblem {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub y: Vec<f64>,
    /// Group index of every variable.
    pub group_of: Vec<usize>,
    /// Cap of every group.
    pub caps: Vec<f64>,
}

impl GroupedProblem {
    /// Classical box: `0 <= x_i <= upper_i`, one group per variable.
    pub fn boxed(q: DMatrix<f64>, c: DVector<f64>, y: Vec<f64>, upper: Vec<f64>) -> Self {
        let n = y.len();
        Self {
            q,
            c,
            y,
            group_of: (0..n).collect(),
            caps: upper,
        }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.n();
        let bad = |m: &str| Err(QpError::Invalid(m.to_owned()));
        if self.q.nrows() != n
            || self.q.ncols() != n
            || self.y.len() != n
            || self.group_of.len() != n
        {
            return bad("inconsistent dimensions");
        }
        if self.y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return bad("equality coefficients must be ±1");
        }
        if self.group_of.iter().any(|&g| g >= self.caps.len()) {
            return bad("group index out of range");
        }
        if self.caps.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return bad("group caps must be finite and non-negative");
        }
        let mut label: Vec<Option<f64>> = vec![None; self.caps.len()];
        for (u, &g) in self.group_of.iter().enumerate() {
            match label[g] {
                None => label[g] = Some(self.y[u]),
                Some(l) if l != self.y[u] => return bad("labels differ inside a group"),
                _ => {}
            }
        }
        if self.q.iter().chain(self.c.iter()).any(|v| !v.is_finite()) {
            return bad("non-finite data");
        }
        Ok(())
    }

    /// The same instance in general form: one inequality row per group.
    pub fn to_quadratic_program(&self) -> QuadraticProgram {
        let n = self.n();
        let g = self.caps.len();
        let mut a_in = DMatrix::zeros(g, n);
        for (u, &grp) in self.group_of.iter().enumerate() {
            a_in[(grp, u)] = 1.0;
        }
        QuadraticProgram::new(self.q.clone(), self.c.clone())
            .with_equalities(DMatrix::from_row_slice(1, n, &self.y), DVector::zeros(1))
            .with_inequalities(a_in, DVector::from_vec(self.caps.clone()))
            .with_bounds(DVector::zeros(n), DVector::from_element(n, f64::INFINITY))
    }
}

/// Classical C-SVM dual: `0 <= x <= c_upper`, `y'x = 0`.
pub fn solve_box_single_equality(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    y: &[f64],
    c_upper: &[f64],
) -> Result<QpSolution, QpError> {
    let problem = GroupedProblem::boxed(q.clone(), c.clone(), y.to_vec(), c_upper.to_vec());
    solve_grouped(&problem, &decomposition_defaults())
}

pub(crate) fn decomposition_defaults() -> SolverOptions {
    SolverOptions {
        max_iter: 10_000_000,
        ..SolverOptions::default()
    }
}

struct State<'a> {
    p: &'a GroupedProblem,
    x: Vec<f64>,
    grad: Vec<f64>,
    group_sum: Vec<f64>,
    members: Vec<Vec<usize>>,
}

/// A two-variable direction `x_i += si*t`, `x_j += sj*t`.
#[derive(Debug, Clone, Copy)]
struct Pair {
    i: usize,
    j: usize,
    si: f64,
    sj: f64,
    gain: f64,
}

impl State<'_> {
    fn slack(&self, g: usize) -> f64 {
        self.p.caps[g] - self.group_sum[g]
    }

    fn can_up(&self, u: usize) -> bool {
        // x_u += y_u t
        if self.p.y[u] > 0.0 {
            self.slack(self.p.group_of[u]) > 0.0
        } else {
            self.x[u] > 0.0
        }
    }

    fn can_down(&self, u: usize) -> bool {
        // x_u -= y_u t
        if self.p.y[u] > 0.0 {
            self.x[u] > 0.0
        } else {
            self.slack(self.p.group_of[u]) > 0.0
        }
    }

    fn curvature(&self, pair: &Pair) -> f64 {
        let q = &self.p.q;
        let a = q[(pair.i, pair.i)]
            + q[(pair.j, pair.j)]
            + 2.0 * pair.si * pair.sj * q[(pair.i, pair.j)];
        if a > TAU {
            a
        } else {
            TAU
        }
    }

    /// Returns the best pair and the maximal first-order violation.
    fn select(&self) -> (Option<Pair>, f64) {
        let n = self.p.n();
        let y = &self.p.y;
        let f = |u: usize| -y[u] * self.grad[u];

        let mut best_up: Option<usize> = None;
        let mut min_low = f64::INFINITY;
        for u in 0..n {
            if self.can_up(u) && best_up.is_none_or(|b| f(u) > f(b)) {
                best_up = Some(u);
            }
            if self.can_down(u) {
                min_low = min_low.min(f(u));
            }
        }
        let mut violation: f64 = 0.0;
        let mut best: Option<Pair> = None;
        if let Some(i) = best_up {
            violation = violation.max(f(i) - min_low);
            for j in 0..n {
                if j == i || !self.can_down(j) {
                    continue;
                }
                let b = f(i) - f(j);
                if b <= 0.0 {
                    continue;
                }
                let mut pair = Pair {
                    i,
                    j,
                    si: y[i],
                    sj: -y[j],
                    gain: 0.0,
                };
                pair.gain = b * b / self.curvature(&pair);
                if best.is_none_or(|p| pair.gain > p.gain) {
                    best = Some(pair);
                }
            }
        }

        // redistribution inside full groups
        for (g, members) in self.members.iter().enumerate() {
            if members.len() < 2 || self.slack(g) > 0.0 {
                continue;
            }
            for &u in members {
                for &v in members {
                    if u == v || self.x[v] <= 0.0 {
                        continue;
                    }
                    let b = self.grad[v] - self.grad[u];
                    if b <= 0.0 {
                        continue;
                    }
                    violation = violation.max(b);
                    let mut pair = Pair {
                        i: u,
                        j: v,
                        si: 1.0,
                        sj: -1.0,
                        gain: 0.0,
                    };
                    pair.gain = b * b / self.curvature(&pair);
                    if best.is_none_or(|p| pair.gain > p.gain) {
                        best = Some(pair);
                    }
                }
            }
        }
        (best, violation)
    }

    fn max_step(&self, pair: &Pair) -> f64 {
        let (gi, gj) = (self.p.group_of[pair.i], self.p.group_of[pair.j]);
        let mut t = f64::INFINITY;
        for (u, s) in [(pair.i, pair.si), (pair.j, pair.sj)] {
            if s < 0.0 {
                t = t.min(self.x[u] / -s);
            }
        }
        if gi == gj {
            let net = pair.si + pair.sj;
            if net > 0.0 {
                t = t.min(self.slack(gi) / net);
            }
        } else {
            if pair.si > 0.0 {
                t = t.min(self.slack(gi) / pair.si);
            }
            if pair.sj > 0.0 {
                t = t.min(self.slack(gj) / pair.sj);
            }
        }
        t.max(0.0)
    }

    fn apply(&mut self, pair: &Pair) {
        let g = pair.si * self.grad[pair.i] + pair.sj * self.grad[pair.j];
        let a = self.curvature(pair);
        let t_max = self.max_step(pair);
        let t_newton = -g / a;
        let t = t_newton.min(t_max);
        let hits_limit = t_newton >= t_max;

        let mut dx = [(pair.i, pair.si * t), (pair.j, pair.sj * t)];
        for (u, d) in dx.iter_mut() {
            let new = self.x[*u] + *d;
            if new <= 0.0
                || (hits_limit && *d < 0.0 && new <= 1e-15 * self.p.caps[self.p.group_of[*u]])
            {
                *d = -self.x[*u];
                self.x[*u] = 0.0;
            } else {
                self.x[*u] = new;
            }
        }
        for &(u, d) in &dx {
            if d != 0.0 {
                let col = self.p.q.column(u);
                for (gk, qk) in self.grad.iter_mut().zip(col.iter()) {
                    *gk += d * qk;
                }
            }
        }
        for grp in [self.p.group_of[pair.i], self.p.group_of[pair.j]] {
            let sum: f64 = self.members[grp].iter().map(|&u| self.x[u]).sum();
            let cap = self.p.caps[grp];
            self.group_sum[grp] = if hits_limit && sum >= cap * (1.0 - 1e-14) {
                cap
            } else {
                sum.min(cap)
            };
        }
    }

    /// Multipliers in the general-form convention of `to_quadratic_program`.
    fn multipliers(&self) -> Multipliers {
        let n = self.p.n();
        let y = &self.p.y;
        let f = |u: usize| -y[u] * self.grad[u];
        let free: Vec<usize> = (0..n)
            .filter(|&u| self.x[u] > 0.0 && self.slack(self.p.group_of[u]) > 0.0)
            .collect();
        let rho = if !free.is_empty() {
            free.iter().map(|&u| f(u)).sum::<f64>() / free.len() as f64
        } else {
            let up = (0..n)
                .filter(|&u| self.can_up(u))
                .map(f)
                .fold(f64::NEG_INFINITY, f64::max);
            let low = (0..n)
                .filter(|&u| self.can_down(u))
                .map(f)
                .fold(f64::INFINITY, f64::min);
            match (up.is_finite(), low.is_finite()) {
                (true, true) => 0.5 * (up + low),
                (true, false) => up,
                (false, true) => low,
                (false, false) => 0.0,
            }
        };
        // stationarity: grad_u + rho y_u + mu_g - z_u = 0
        let mut mu = DVector::zeros(self.p.caps.len());
        for (g, members) in self.members.iter().enumerate() {
            if self.slack(g) > 0.0 {
                continue;
            }
            let vals: Vec<f64> = members
                .iter()
                .filter(|&&u| self.x[u] > 0.0)
                .map(|&u| -(self.grad[u] + rho * y[u]))
                .collect();
            if !vals.is_empty() {
                mu[g] = (vals.iter().sum::<f64>() / vals.len() as f64).max(0.0);
            }
        }
        let lower = DVector::from_iterator(
            n,
            (0..n).map(|u| {
                if self.x[u] > 0.0 {
                    0.0
                } else {
                    (self.grad[u] + rho * y[u] + mu[self.p.group_of[u]]).max(0.0)
                }
            }),
        );
        Multipliers {
            eq: DVector::from_element(1, rho),
            ineq: mu,
            lower,
            upper: DVector::zeros(n),
        }
    }
}

pub fn solve_grouped(
    problem: &GroupedProblem,
    opts: &SolverOptions,
) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let n = problem.n();
    let mut members = vec![Vec::new(); problem.caps.len()];
    for (u, &g) in problem.group_of.iter().enumerate() {
        members[g].push(u);
    }
    let mut state = State {
        p: problem,
        x: vec![0.0; n],
        grad: problem.c.iter().copied().collect(),
        group_sum: vec![0.0; problem.caps.len()],
        members,
    };
    let scale = 1.0 + problem.c.amax();
    let mut iterations = 0;
    #[cfg(debug_assertions)]
    let mut last_obj = 0.0f64;
    let (status, violation) = loop {
        let (pair, violation) = state.select();
        let kkt = violation / scale;
        if kkt <= opts.tol_kkt {
            break (QpStatus::Optimal, violation);
        }
        if iterations >= opts.max_iter {
            break (QpStatus::MaxIterations, violation);
        }
        let Some(pair) = pair else {
            break (QpStatus::MaxIterations, violation);
        };
        state.apply(&pair);
        iterations += 1;
        #[cfg(debug_assertions)]
        {
            let obj = 0.5
                * state
                    .x
                    .iter()
                    .zip(&state.grad)
                    .zip(problem.c.iter())
                    .map(|((x, g), c)| x * (g + c))
                    .sum::<f64>();
            debug_assert!(
                obj <= last_obj + 1e-9 * (1.0 + last_obj.abs()),
                "objective increased"
            );
            last_obj = obj;
        }
    };

    let multipliers = state.multipliers();
    let x = DVector::from_vec(state.x.clone());
    let general = problem.to_quadratic_program();
    Ok(QpSolution {
        objective: general.objective(&x),
        kkt_residual: violation / scale,
        feasibility_residual: general.feasibility_residual(&x),
        iterations,
        status,
        multipliers,
        x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_svm_dual() {
        // points -1 (y=-1) and +1 (y=+1), linear kernel
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let s = solve_box_single_equality(
            &q,
            &DVector::from_element(2, -1.0),
            &[-1.0, 1.0],
            &[10.0, 10.0],
        )
        .unwrap();
        assert!(s.is_optimal());
        assert!((s.x[0] - 0.5).abs() < 1e-9 && (s.x[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn zero_caps_pin_to_zero() {
        let q = DMatrix::identity(3, 3);
        let s = solve_box_single_equality(
            &q,
            &DVector::from_element(3, -1.0),
            &[1.0, -1.0, 1.0],
            &[0.0; 3],
        )
        .unwrap();
        assert!(s.is_optimal());
        assert_eq!(s.x, DVector::zeros(3));
    }

    #[test]
    fn rejects_mixed_labels_in_group() {
        let p = GroupedProblem {
            q: DMatrix::identity(2, 2),
            c: DVector::zeros(2),
            y: vec![1.0, -1.0],
            group_of: vec![0, 0],
            caps: vec![1.0],
        };
        assert!(solve_grouped(&p, &SolverOptions::default()).is_err());
    }

    #[test]
    fn full_group_redistribution() {
        // one group of two +1 variables plus a -1 partner; the cheaper member should carry the mass
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 1.0]));
        let c = DVector::from_vec(vec![-10.0, -10.0, -10.0]);
        let p = GroupedProblem {
            q,
            c,
            y: vec![1.0, 1.0, -1.0],
            group_of: vec![0, 0, 1],
            caps: vec![1.0, 5.0],
        };
        let s = solve_grouped(&p, &decomposition_defaults()).unwrap();
        assert!(s.is_optimal());
        let general = crate::qp::solve(&p.to_quadratic_program()).unwrap();
        assert!((s.objective - general.objective).abs() < 1e-6);
    }
}
