use nalgebra::{DMatrix, DVector};
use robsvm::qp::{self, GroupedProblem, QpStatus, SolverOptions};
use robsvm::rng::SeededRng;

fn random_psd(rng: &mut SeededRng, n: usize, rank: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, rank, |_, _| rng.normal());
    &b * b.transpose()
}

fn random_grouped(rng: &mut SeededRng, groups: usize, size: usize) -> GroupedProblem {
    let n = groups * size;
    let mut y = Vec::with_capacity(n);
    let mut group_of = Vec::with_capacity(n);
    for g in 0..groups {
        let label = if g % 2 == 0 { 1.0 } else { -1.0 };
        for _ in 0..size {
            y.push(label);
            group_of.push(g);
        }
    }
    let rank = 1 + rng.index(n);
    let k = random_psd(rng, n, rank);
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
    GroupedProblem {
        q,
        c: DVector::from_fn(n, |_, _| -1.0 + 0.3 * rng.normal()),
        y,
        group_of,
        caps: (0..groups).map(|_| 0.1 + 3.0 * rng.uniform()).collect(),
    }
}

#[test]
fn decomposition_agrees_with_interior_point() {
    let mut rng = SeededRng::new(2024);
    let opts = SolverOptions {
        tol_kkt: 1e-9,
        max_iter: 10_000_000,
        ..SolverOptions::default()
    };
    for trial in 0..20 {
        let size = if trial % 2 == 0 { 1 } else { 3 };
        let groups = 4 + rng.index(5);
        let p = random_grouped(&mut rng, groups, size);
        let fast = qp::solve_grouped(&p, &opts).unwrap();
        assert_eq!(fast.status, QpStatus::Optimal, "trial {trial}");
        let general = p.to_quadratic_program();
        let slow = qp::solve_with(
            &general,
            &SolverOptions {
                tol_kkt: 1e-10,
                ..SolverOptions::default()
            },
        )
        .unwrap();
        assert!(
            slow.is_optimal(),
            "trial {trial}: {:?} kkt {} feas {} it {}",
            slow.status,
            slow.kkt_residual,
            slow.feasibility_residual,
            slow.iterations
        );
        let gap = (fast.objective - slow.objective).abs();
        assert!(
            gap < 1e-6 * (1.0 + slow.objective.abs()),
            "trial {trial}: {} vs {}",
            fast.objective,
            slow.objective
        );
        assert!(fast.feasibility_residual < 1e-10);
        assert!(
            general.kkt_residual(&fast.x, &fast.multipliers) < 1e-6,
            "trial {trial}"
        );
    }
}

#[test]
fn box_single_equality_matches_general_solver() {
    let mut rng = SeededRng::new(7);
    for _ in 0..10 {
        let n = 6;
        let y: Vec<f64> = (0..n).map(|i| if i < 3 { 1.0 } else { -1.0 }).collect();
        let k = random_psd(&mut rng, n, n);
        let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
        let c = DVector::from_element(n, -1.0);
        let upper = vec![2.0; n];
        let fast = qp::solve_box_single_equality(&q, &c, &y, &upper).unwrap();
        let general = qp::QuadraticProgram::new(q, c)
            .with_equalities(DMatrix::from_row_slice(1, n, &y), DVector::zeros(1))
            .with_bounds(DVector::zeros(n), DVector::from_element(n, 2.0));
        let slow = qp::solve(&general).unwrap();
        assert!((fast.objective - slow.objective).abs() < 1e-6);
    }
}
