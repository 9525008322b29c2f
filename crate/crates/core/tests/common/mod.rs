#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use robsvm::data::Dataset;
use robsvm::qp::QuadraticProgram;
use robsvm::rng::SeededRng;

/// Brute-force active-set enumeration.
///
/// Every subset of at most `n - p` inequality rows (finite bounds included)
/// is taken as active. The equality-constrained problem
/// `min 1/2 x'(Q + ridge I)x + c'x` on that affine set is solved through its
/// KKT system, and the best primal-feasible candidate wins. For positive
/// definite `Q + ridge I` the optimum is a candidate, because it is the
/// minimizer over the affine hull of a linearly independent subset of its
/// active constraints. A small ridge makes singular `Q` usable; the error in
/// the returned objective is at most `ridge * ||x*||^2`.
pub fn brute_force_qp(qp: &QuadraticProgram, ridge: f64) -> Option<(DVector<f64>, f64)> {
    let n = qp.n();
    let p = qp.a_eq.nrows();
    // collect inequality rows g'x <= h
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for r in 0..qp.a_in.nrows() {
        rows.push((qp.a_in.row(r).transpose(), qp.b_in[r]));
    }
    for i in 0..n {
        if qp.upper[i].is_finite() {
            let mut g = DVector::zeros(n);
            g[i] = 1.0;
            rows.push((g, qp.upper[i]));
        }
        if qp.lower[i].is_finite() {
            let mut g = DVector::zeros(n);
            g[i] = -1.0;
            rows.push((g, -qp.lower[i]));
        }
    }
    let m = rows.len();
    assert!(
        m <= 20,
        "oracle is exponential in the number of constraints"
    );
    let qr = &qp.q + DMatrix::identity(n, n) * ridge;
    let scale = 1.0
        + qp.b_eq
            .iter()
            .chain(rows.iter().map(|(_, h)| h))
            .fold(0.0f64, |a, v| a.max(v.abs()));
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1u32 << m) {
        let active: Vec<usize> = (0..m).filter(|&r| mask & (1 << r) != 0).collect();
        if active.len() + p > n {
            continue;
        }
        let k = p + active.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qr);
        for i in 0..n {
            rhs[i] = -qp.c[i];
        }
        for e in 0..p {
            for j in 0..n {
                kkt[(n + e, j)] = qp.a_eq[(e, j)];
                kkt[(j, n + e)] = qp.a_eq[(e, j)];
            }
            rhs[n + e] = qp.b_eq[e];
        }
        for (t, &r) in active.iter().enumerate() {
            for j in 0..n {
                kkt[(n + p + t, j)] = rows[r].0[j];
                kkt[(j, n + p + t)] = rows[r].0[j];
            }
            rhs[n + p + t] = rows[r].1;
        }
        let Some(sol) = kkt.clone().lu().solve(&rhs) else {
            continue;
        };
        if (&kkt * &sol - &rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        let feasible = (p == 0 || (&qp.a_eq * &x - &qp.b_eq).amax() <= 1e-9 * scale)
            && rows.iter().all(|(g, h)| g.dot(&x) - h <= 1e-9 * scale);
        if !feasible {
            continue;
        }
        let obj = qp.objective(&x);
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((x, obj));
        }
    }
    best
}

/// Random feasible convex instance around a known interior point.
pub fn random_qp(rng: &mut SeededRng) -> QuadraticProgram {
    let n = 2 + rng.index(5);
    let x0 = DVector::from_fn(n, |_, _| rng.normal());
    let b = DMatrix::from_fn(n, n, |_, _| rng.normal());
    let q = &b * b.transpose() + DMatrix::identity(n, n) * 0.01;
    let c = DVector::from_fn(n, |_, _| 3.0 * rng.normal());
    let p = rng.index(3).min(n - 1);
    let a_eq = DMatrix::from_fn(p, n, |_, _| rng.normal());
    let b_eq = &a_eq * &x0;
    let q_in = rng.index(5);
    let a_in = DMatrix::from_fn(q_in, n, |_, _| rng.normal());
    let b_in =
        &a_in * &x0 + DVector::from_fn(q_in, |_, _| if rng.coin() { 0.0 } else { rng.uniform() });
    let mut budget = 14 - p - q_in;
    let mut lower = DVector::from_element(n, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(n, f64::INFINITY);
    for i in 0..n {
        if budget > 0 && rng.coin() {
            lower[i] = x0[i] - rng.uniform();
            budget -= 1;
        }
        if budget > 0 && rng.coin() {
            upper[i] = x0[i] + rng.uniform();
            budget -= 1;
        }
    }
    QuadraticProgram::new(q, c)
        .with_equalities(a_eq, b_eq)
        .with_inequalities(a_in, b_in)
        .with_bounds(lower, upper)
}

/// Rank-deficient `Q` over a full box, so the problem stays bounded. The
/// enumeration oracle still finds the optimum: a face whose minimizer is not
/// unique contains an optimal point on a smaller face.
pub fn random_psd_qp(rng: &mut SeededRng) -> QuadraticProgram {
    let n = 2 + rng.index(5);
    let rank = 1 + rng.index(n - 1);
    let x0 = DVector::from_fn(n, |_, _| rng.normal());
    let b = DMatrix::from_fn(n, rank, |_, _| rng.normal());
    let q = &b * b.transpose();
    let c = DVector::from_fn(n, |_, _| 3.0 * rng.normal());
    let p = rng.index(2).min(n - 1);
    let a_eq = DMatrix::from_fn(p, n, |_, _| rng.normal());
    let b_eq = &a_eq * &x0;
    let q_in = rng.index(14 - 2 * n - p + 1);
    let a_in = DMatrix::from_fn(q_in, n, |_, _| rng.normal());
    let b_in = &a_in * &x0 + DVector::from_fn(q_in, |_, _| rng.uniform());
    let lower = DVector::from_fn(n, |i, _| x0[i] - 0.2 - rng.uniform());
    let upper = DVector::from_fn(n, |i, _| x0[i] + 0.2 + rng.uniform());
    QuadraticProgram::new(q, c)
        .with_equalities(a_eq, b_eq)
        .with_inequalities(a_in, b_in)
        .with_bounds(lower, upper)
}

/// Two overlapping Gaussian classes in `d` dimensions.
pub fn random_dataset(rng: &mut SeededRng, n: usize, d: usize) -> Dataset {
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = if i % 2 == 0 { 1.0 } else { -1.0 };
        rows.push((0..d).map(|_| 0.8 * y + rng.normal()).collect::<Vec<f64>>());
        labels.push(y);
    }
    Dataset::from_rows(&rows, labels).unwrap()
}

pub fn two_points() -> Dataset {
    Dataset::from_rows(&[vec![-1.0], vec![1.0]], vec![-1.0, 1.0]).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
