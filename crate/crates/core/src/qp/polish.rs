//! Active-set polishing of an interior-point iterate.
//!
//! The active set is guessed by comparing each slack with its multiplier.
//! The equality-constrained problem on that face is solved through a
//! regularized KKT system with iterative refinement against the exact one,
//! starting from the interior iterate, so directions that the face leaves
//! undetermined stay where the interior method put them. The polished point
//! is kept only if it is feasible, its multipliers have the right signs and
//! it is at least as good as the input.

use nalgebra::{DMatrix, DVector};

use super::{Multipliers, QpSolution, QuadraticProgram, SolverOptions};

const DELTA: f64 = 1e-9;

pub(super) fn polish(
    qp: &QuadraticProgram,
    sol: &QpSolution,
    opts: &SolverOptions,
) -> Option<QpSolution> {
    let n = qp.n();
    let p = qp.a_eq.nrows();
    let x0 = &sol.x;
    let m = &sol.multipliers;

    #[derive(Clone, Copy, PartialEq)]
    enum Fix {
        Free,
        Lower,
        Upper,
    }
    let fix: Vec<Fix> = (0..n)
        .map(|i| {
            if qp.lower[i].is_finite() && x0[i] - qp.lower[i] < m.lower[i] {
                Fix::Lower
            } else if qp.upper[i].is_finite() && qp.upper[i] - x0[i] < m.upper[i] {
                Fix::Upper
            } else {
                Fix::Free
            }
        })
        .collect();
    let slack = &qp.b_in - &qp.a_in * x0;
    let active: Vec<usize> = (0..qp.a_in.nrows())
        .filter(|&r| slack[r] < m.ineq[r])
        .collect();

    let free: Vec<usize> = (0..n).filter(|&i| fix[i] == Fix::Free).collect();
    let mut x = x0.clone();
    for i in 0..n {
        match fix[i] {
            Fix::Lower => x[i] = qp.lower[i],
            Fix::Upper => x[i] = qp.upper[i],
            Fix::Free => {}
        }
    }
    let nf = free.len();
    let k = p + active.len();
    let row = |r: usize| -> Vec<f64> {
        if r < p {
            qp.a_eq.row(r).iter().copied().collect()
        } else {
            qp.a_in.row(active[r - p]).iter().copied().collect()
        }
    };
    let rows: Vec<Vec<f64>> = (0..k).map(row).collect();
    let rhs_b: Vec<f64> = (0..k)
        .map(|r| {
            if r < p {
                qp.b_eq[r]
            } else {
                qp.b_in[active[r - p]]
            }
        })
        .collect();

    // exact KKT matrix and right-hand side over (x_F, nu)
    let mut kkt = DMatrix::zeros(nf + k, nf + k);
    let mut rhs = DVector::zeros(nf + k);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            kkt[(a, b)] = qp.q[(i, j)];
        }
        let mut r = -qp.c[i];
        for j in 0..n {
            if fix[j] != Fix::Free {
                r -= qp.q[(i, j)] * x[j];
            }
        }
        rhs[a] = r;
    }
    for (t, coeffs) in rows.iter().enumerate() {
        let mut r = rhs_b[t];
        for j in 0..n {
            if fix[j] != Fix::Free {
                r -= coeffs[j] * x[j];
            }
        }
        rhs[nf + t] = r;
        for (a, &i) in free.iter().enumerate() {
            kkt[(nf + t, a)] = coeffs[i];
            kkt[(a, nf + t)] = coeffs[i];
        }
    }
    let mut reg = kkt.clone();
    for a in 0..nf {
        reg[(a, a)] += DELTA;
    }
    for t in 0..k {
        reg[(nf + t, nf + t)] -= DELTA;
    }
    let lu = reg.lu();

    let mut sol_vec = DVector::zeros(nf + k);
    for (a, &i) in free.iter().enumerate() {
        sol_vec[a] = x0[i];
    }
    for t in 0..k {
        sol_vec[nf + t] = if t < p {
            m.eq[t]
        } else {
            m.ineq[active[t - p]]
        };
    }
    for _ in 0..25 {
        let resid = &rhs - &kkt * &sol_vec;
        if resid.amax() <= 1e-14 * (1.0 + rhs.amax()) {
            break;
        }
        let step = lu.solve(&resid)?;
        sol_vec += step;
    }
    if !sol_vec.iter().all(|v| v.is_finite()) {
        return None;
    }
    for (a, &i) in free.iter().enumerate() {
        x[i] = sol_vec[a];
    }

    let mut mult = Multipliers::zeros(n, p, qp.a_in.nrows());
    for t in 0..k {
        if t < p {
            mult.eq[t] = sol_vec[nf + t];
        } else {
            mult.ineq[active[t - p]] = sol_vec[nf + t];
        }
    }
    let mut grad = &qp.q * &x + &qp.c;
    if p > 0 {
        grad += qp.a_eq.tr_mul(&mult.eq);
    }
    if qp.a_in.nrows() > 0 {
        grad += qp.a_in.tr_mul(&mult.ineq);
    }
    for i in 0..n {
        match fix[i] {
            Fix::Lower => mult.lower[i] = grad[i],
            Fix::Upper => mult.upper[i] = -grad[i],
            Fix::Free => {}
        }
    }

    let sign_tol = opts.tol_kkt * (1.0 + qp.c.amax() + (&qp.q * &x).amax());
    let signs_ok = mult
        .ineq
        .iter()
        .chain(mult.lower.iter())
        .chain(mult.upper.iter())
        .all(|&v| v >= -sign_tol);
    let feas = qp.feasibility_residual(&x);
    let objective = qp.objective(&x);
    let kkt_res = qp.kkt_residual(&x, &mult);
    let better = objective <= sol.objective + 1e-9 * (1.0 + sol.objective.abs());
    if signs_ok
        && feas <= opts.tol_feas.max(sol.feasibility_residual)
        && kkt_res <= opts.tol_kkt.max(sol.kkt_residual)
        && better
    {
        // clip tiny negative multipliers so the reported set is sign-consistent
        mult.ineq.apply(|v| *v = v.max(0.0));
        mult.lower.apply(|v| *v = v.max(0.0));
        mult.upper.apply(|v| *v = v.max(0.0));
        Some(QpSolution {
            objective,
            kkt_residual: qp.kkt_residual(&x, &mult),
            feasibility_residual: feas,
            iterations: sol.iterations,
            status: sol.status,
            multipliers: mult,
            x,
        })
    } else {
        None
    }
}
