//! Mehrotra predictor-corrector interior-point method.
//!
//! Inequalities get explicit slacks `s` (`A_in x + s = b_in`), finite bounds
//! are handled through `w_l = x - l` and `w_u = u - x`, which the step rule
//! keeps strictly positive. Each iteration factors the condensed matrix
//! `H = Q + A_in' diag(lambda/s) A_in + diag(z_l/w_l) + diag(z_u/w_u)` and
//! eliminates the equalities through the Schur complement `A_eq H^-1 A_eq'`.

use nalgebra::{DMatrix, DVector};

use super::{Multipliers, QpError, QpSolution, QpStatus, QuadraticProgram, SolverOptions};
use crate::kernels::cholesky_with_jitter;

/// Row-wise sparse copy of a constraint matrix.
struct SparseRows {
    rows: Vec<Vec<(usize, f64)>>,
    ncols: usize,
}

impl SparseRows {
    fn from_dense(a: &DMatrix<f64>) -> Self {
        let rows = (0..a.nrows())
            .map(|r| {
                (0..a.ncols())
                    .filter(|&c| a[(r, c)] != 0.0)
                    .map(|c| (c, a[(r, c)]))
                    .collect()
            })
            .collect();
        Self {
            rows,
            ncols: a.ncols(),
        }
    }

    fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows
                .iter()
                .map(|row| row.iter().map(|&(c, v)| v * x[c]).sum()),
        )
    }

    fn tr_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ncols);
        for (row, &vr) in self.rows.iter().zip(v.iter()) {
            if vr != 0.0 {
                for &(c, a) in row {
                    out[c] += a * vr;
                }
            }
        }
        out
    }

    /// `h += A' diag(w) A`
    fn add_weighted_gram(&self, w: &DVector<f64>, h: &mut DMatrix<f64>) {
        for (row, &wr) in self.rows.iter().zip(w.iter()) {
            for &(i, ai) in row {
                for &(j, aj) in row {
                    h[(i, j)] += wr * ai * aj;
                }
            }
        }
    }
}

pub(super) fn trivially_feasible(qp: &QuadraticProgram, tol: f64) -> bool {
    let x = DVector::from_iterator(
        qp.n(),
        (0..qp.n()).map(|i| 0.0f64.clamp(qp.lower[i], qp.upper[i])),
    );
    qp.feasibility_residual(&x) <= tol
}

/// Minimizes the total constraint violation. Returns `Some(x)` with the
/// least-violating point when the instance is infeasible, `None` otherwise.
pub(super) fn phase_one(
    qp: &QuadraticProgram,
    opts: &SolverOptions,
) -> Result<Option<DVector<f64>>, QpError> {
    let (n, p, q) = (qp.n(), qp.a_eq.nrows(), qp.a_in.nrows());
    let m = n + 2 * p + q;
    let mut hq = DMatrix::zeros(m, m);
    for i in 0..n {
        hq[(i, i)] = 1e-8;
    }
    let mut c = DVector::zeros(m);
    for i in n..m {
        c[i] = 1.0;
    }
    let mut a_eq = DMatrix::zeros(p, m);
    for r in 0..p {
        for j in 0..n {
            a_eq[(r, j)] = qp.a_eq[(r, j)];
        }
        a_eq[(r, n + r)] = 1.0;
        a_eq[(r, n + p + r)] = -1.0;
    }
    let mut a_in = DMatrix::zeros(q, m);
    for r in 0..q {
        for j in 0..n {
            a_in[(r, j)] = qp.a_in[(r, j)];
        }
        a_in[(r, n + 2 * p + r)] = -1.0;
    }
    let mut lower = DVector::zeros(m);
    let mut upper = DVector::from_element(m, f64::INFINITY);
    for i in 0..n {
        lower[i] = qp.lower[i];
        upper[i] = qp.upper[i];
    }
    let lp = QuadraticProgram::new(hq, c)
        .with_equalities(a_eq, qp.b_eq.clone())
        .with_inequalities(a_in, qp.b_in.clone())
        .with_bounds(lower, upper);
    let inner = SolverOptions {
        tol_kkt: 1e-10,
        tol_feas: 1e-10,
        phase_one: false,
        ..*opts
    };
    let sol = interior_point(&lp, &inner)?;
    let x = sol.x.rows(0, n).into_owned();
    if qp.feasibility_residual(&x) > opts.tol_feas {
        Ok(Some(x))
    } else {
        Ok(None)
    }
}

struct Iterate {
    x: DVector<f64>,
    y: DVector<f64>,
    s: DVector<f64>,
    lam: DVector<f64>,
    zl: DVector<f64>,
    zu: DVector<f64>,
}

struct Direction {
    dx: DVector<f64>,
    dy: DVector<f64>,
    ds: DVector<f64>,
    dlam: DVector<f64>,
    dzl: DVector<f64>,
    dzu: DVector<f64>,
}

/// Largest step in `(0, 1]` keeping `v + t dv >= 0` over the masked entries.
fn max_step(
    v: &DVector<f64>,
    dv: &DVector<f64>,
    mask: Option<&[bool]>,
    sign: f64,
    cap: f64,
) -> f64 {
    let mut t = cap;
    for i in 0..v.len() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let d = sign * dv[i];
        if d < 0.0 {
            t = t.min(-v[i] / d);
        }
    }
    t
}

pub(super) fn interior_point(
    qp: &QuadraticProgram,
    opts: &SolverOptions,
) -> Result<QpSolution, QpError> {
    let (n, p, q) = (qp.n(), qp.a_eq.nrows(), qp.a_in.nrows());
    let a_eq = SparseRows::from_dense(&qp.a_eq);
    let a_in = SparseRows::from_dense(&qp.a_in);
    let has_l: Vec<bool> = qp.lower.iter().map(|v| v.is_finite()).collect();
    let has_u: Vec<bool> = qp.upper.iter().map(|v| v.is_finite()).collect();
    let n_pairs = q + has_l.iter().filter(|&&b| b).count() + has_u.iter().filter(|&&b| b).count();

    let x0 = DVector::from_iterator(
        n,
        (0..n).map(|i| match (has_l[i], has_u[i]) {
            (true, true) => 0.5 * (qp.lower[i] + qp.upper[i]),
            (true, false) => qp.lower[i] + 1.0,
            (false, true) => qp.upper[i] - 1.0,
            (false, false) => 0.0,
        }),
    );
    let s0 = {
        let r = &qp.b_in - a_in.mul(&x0);
        r.map(|v| v.max(1.0))
    };
    let mut it = Iterate {
        x: x0,
        y: DVector::zeros(p),
        s: s0,
        lam: DVector::from_element(q, 1.0),
        zl: DVector::from_iterator(n, has_l.iter().map(|&b| if b { 1.0 } else { 0.0 })),
        zu: DVector::from_iterator(n, has_u.iter().map(|&b| if b { 1.0 } else { 0.0 })),
    };

    // gaps to finite bounds; entries for absent bounds are 1 and never used
    let gaps = |x: &DVector<f64>| {
        let wl = DVector::from_iterator(
            n,
            (0..n).map(|i| if has_l[i] { x[i] - qp.lower[i] } else { 1.0 }),
        );
        let wu = DVector::from_iterator(
            n,
            (0..n).map(|i| if has_u[i] { qp.upper[i] - x[i] } else { 1.0 }),
        );
        (wl, wu)
    };

    let mut stalls = 0;
    let mut best: Option<(f64, (DVector<f64>, Multipliers, f64))> = None;
    let mut iterations = 0;
    let mut status = QpStatus::MaxIterations;
    loop {
        let multipliers = Multipliers {
            eq: it.y.clone(),
            ineq: it.lam.clone(),
            lower: it.zl.clone(),
            upper: it.zu.clone(),
        };
        let feas = qp.feasibility_residual(&it.x).max(if q > 0 {
            // slack-based residual of the equality-form inequalities
            (a_in.mul(&it.x) + &it.s - &qp.b_in).amax() / qp.rhs_scale()
        } else {
            0.0
        });
        let kkt = qp.kkt_residual(&it.x, &multipliers);
        if feas <= opts.tol_feas && kkt <= opts.tol_kkt {
            status = QpStatus::Optimal;
        }
        let merit = (feas / opts.tol_feas).max(kkt / opts.tol_kkt);
        let finite = merit.is_finite() && it.x.iter().all(|v| v.is_finite());
        if finite && best.as_ref().is_none_or(|(m, _)| merit < *m) {
            best = Some((merit, (it.x.clone(), multipliers.clone(), kkt)));
        }
        // diverging after reaching a good point: numerical breakdown
        let diverged = best.as_ref().is_some_and(|(m, _)| merit > 1e6 * m.max(1.0));
        if status == QpStatus::Optimal
            || iterations >= opts.max_iter
            || stalls >= 30
            || !finite
            || diverged
        {
            let (x, multipliers, kkt) = match best {
                Some((_, b)) if status != QpStatus::Optimal => b,
                _ => (it.x.clone(), multipliers, kkt),
            };
            return Ok(QpSolution {
                objective: qp.objective(&x),
                kkt_residual: kkt,
                feasibility_residual: qp.feasibility_residual(&x),
                iterations,
                status,
                multipliers,
                x,
            });
        }
        iterations += 1;

        let (wl, wu) = gaps(&it.x);
        let qx = &qp.q * &it.x;
        let r_d = &qx + &qp.c + a_eq.tr_mul(&it.y) + a_in.tr_mul(&it.lam) - &it.zl + &it.zu;
        let r_eq = a_eq.mul(&it.x) - &qp.b_eq;
        let r_in = a_in.mul(&it.x) + &it.s - &qp.b_in;
        let mu = if n_pairs > 0 {
            (it.s.dot(&it.lam)
                + (0..n)
                    .map(|i| if has_l[i] { wl[i] * it.zl[i] } else { 0.0 })
                    .sum::<f64>()
                + (0..n)
                    .map(|i| if has_u[i] { wu[i] * it.zu[i] } else { 0.0 })
                    .sum::<f64>())
                / n_pairs as f64
        } else {
            0.0
        };

        let mut h = qp.q.clone();
        a_in.add_weighted_gram(&it.lam.component_div(&it.s), &mut h);
        for i in 0..n {
            if has_l[i] {
                h[(i, i)] += it.zl[i] / wl[i];
            }
            if has_u[i] {
                h[(i, i)] += it.zu[i] / wu[i];
            }
        }
        let (chol, _) =
            cholesky_with_jitter(h.clone()).map_err(|e| QpError::Numerical(e.to_string()))?;
        let schur = if p > 0 {
            let at = qp.a_eq.transpose();
            let h_inv_at = chol.solve(&at);
            let s = &qp.a_eq * &h_inv_at;
            let (schur_chol, _) =
                cholesky_with_jitter(s).map_err(|e| QpError::Numerical(e.to_string()))?;
            Some((h_inv_at, schur_chol))
        } else {
            None
        };
        // [H A'; A 0] [dx; dy] = [g; -r_eq], with iterative refinement to
        // recover the accuracy lost to jitter and ill-conditioning
        let reduced = |g: &DVector<f64>, e: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
            let base = |g: &DVector<f64>, e: &DVector<f64>| {
                let hg = chol.solve(g);
                match &schur {
                    Some((h_inv_at, schur_chol)) => {
                        let dy = schur_chol.solve(&(a_eq.mul(&hg) - e));
                        (hg - h_inv_at * &dy, dy)
                    }
                    None => (hg, DVector::zeros(0)),
                }
            };
            let (mut dx, mut dy) = base(g, e);
            for _ in 0..3 {
                let rg = g - &h * &dx - a_eq.tr_mul(&dy);
                let re = e - a_eq.mul(&dx);
                let scale = 1.0 + g.amax() + e.amax();
                if rg.amax().max(re.amax()) <= 1e-15 * scale {
                    break;
                }
                let (cx, cy) = base(&rg, &re);
                dx += cx;
                dy += cy;
            }
            (dx, dy)
        };

        let solve_dir =
            |rhs_s: &DVector<f64>, rhs_l: &DVector<f64>, rhs_u: &DVector<f64>| -> Direction {
                let mut g = -&r_d
                    - a_in.tr_mul(&(rhs_s + it.lam.component_mul(&r_in)).component_div(&it.s));
                for i in 0..n {
                    if has_l[i] {
                        g[i] += rhs_l[i] / wl[i];
                    }
                    if has_u[i] {
                        g[i] -= rhs_u[i] / wu[i];
                    }
                }
                let (dx, dy) = reduced(&g, &(-&r_eq));
                let ds = -&r_in - a_in.mul(&dx);
                let dlam = (rhs_s - it.lam.component_mul(&ds)).component_div(&it.s);
                let dzl = DVector::from_iterator(
                    n,
                    (0..n).map(|i| {
                        if has_l[i] {
                            (rhs_l[i] - it.zl[i] * dx[i]) / wl[i]
                        } else {
                            0.0
                        }
                    }),
                );
                let dzu = DVector::from_iterator(
                    n,
                    (0..n).map(|i| {
                        if has_u[i] {
                            (rhs_u[i] + it.zu[i] * dx[i]) / wu[i]
                        } else {
                            0.0
                        }
                    }),
                );
                Direction {
                    dx,
                    dy,
                    ds,
                    dlam,
                    dzl,
                    dzu,
                }
            };

        let step_len = |d: &Direction, cap: f64| {
            let mut t = cap;
            t = t.min(max_step(&it.s, &d.ds, None, 1.0, cap));
            t = t.min(max_step(&it.lam, &d.dlam, None, 1.0, cap));
            t = t.min(max_step(&wl, &d.dx, Some(&has_l), 1.0, cap));
            t = t.min(max_step(&wu, &d.dx, Some(&has_u), -1.0, cap));
            t = t.min(max_step(&it.zl, &d.dzl, Some(&has_l), 1.0, cap));
            t = t.min(max_step(&it.zu, &d.dzu, Some(&has_u), 1.0, cap));
            t
        };

        // predictor
        let rhs_s = -it.s.component_mul(&it.lam);
        let rhs_l = -wl.component_mul(&it.zl);
        let rhs_u = -wu.component_mul(&it.zu);
        let aff = solve_dir(&rhs_s, &rhs_l, &rhs_u);

        let dir = if n_pairs > 0 {
            let t_aff = step_len(&aff, 1.0);
            let mut mu_aff = (&it.s + &aff.ds * t_aff).dot(&(&it.lam + &aff.dlam * t_aff));
            for i in 0..n {
                if has_l[i] {
                    mu_aff += (wl[i] + t_aff * aff.dx[i]) * (it.zl[i] + t_aff * aff.dzl[i]);
                }
                if has_u[i] {
                    mu_aff += (wu[i] - t_aff * aff.dx[i]) * (it.zu[i] + t_aff * aff.dzu[i]);
                }
            }
            mu_aff /= n_pairs as f64;
            let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
            let sm = sigma * mu;
            let rhs_s = rhs_s - aff.ds.component_mul(&aff.dlam) + DVector::from_element(q, sm);
            let rhs_l = DVector::from_iterator(
                n,
                (0..n).map(|i| {
                    if has_l[i] {
                        rhs_l[i] - aff.dx[i] * aff.dzl[i] + sm
                    } else {
                        0.0
                    }
                }),
            );
            let rhs_u = DVector::from_iterator(
                n,
                (0..n).map(|i| {
                    if has_u[i] {
                        rhs_u[i] + aff.dx[i] * aff.dzu[i] + sm
                    } else {
                        0.0
                    }
                }),
            );
            solve_dir(&rhs_s, &rhs_l, &rhs_u)
        } else {
            aff
        };

        let t_max = step_len(&dir, f64::INFINITY);
        let t = (0.995 * t_max).min(1.0);
        if t < 1e-10 {
            stalls += 1;
        } else {
            stalls = 0;
        }
        it.x += &dir.dx * t;
        it.y += &dir.dy * t;
        it.s += &dir.ds * t;
        it.lam += &dir.dlam * t;
        it.zl += &dir.dzl * t;
        it.zu += &dir.dzu * t;
    }
}
