mod common;

use common::{max_abs_diff, random_dataset, two_points};
use nalgebra::{DMatrix, DVector};
use robsvm::data::Dataset;
use robsvm::kernels::KernelSpec;
use robsvm::noise::NoiseSpec;
use robsvm::qp::QuadraticProgram;
use robsvm::rng::SeededRng;
use robsvm::svm::{self, TrainedModel};

fn kernels() -> [KernelSpec; 2] {
    [KernelSpec::Linear, KernelSpec::Rbf { gamma: 0.5 }]
}

fn decisions(m: &TrainedModel, ds: &Dataset) -> Vec<f64> {
    m.predict_dataset(ds).unwrap().1
}

#[test]
fn sp_with_zero_perturbation_is_csvm() {
    let mut rng = SeededRng::new(100);
    for trial in 0..6 {
        let ds = random_dataset(&mut rng, 20 + 5 * trial, 1 + trial % 4);
        for kernel in kernels() {
            let c = svm::train_csvm(&ds, 1.0, kernel).unwrap();
            let sp = svm::train_spsvm(&ds, 1.0, kernel, &NoiseSpec::gaussian(0.5).unwrap(), None)
                .unwrap();
            let diff = max_abs_diff(&decisions(&c, &ds), &decisions(&sp, &ds));
            assert!(diff <= 1e-5, "trial {trial} {kernel}: {diff}");
        }
    }
}

#[test]
fn eel_at_level_zero_is_csvm() {
    let mut rng = SeededRng::new(200);
    for trial in 0..6 {
        let ds = random_dataset(&mut rng, 20 + 5 * trial, 1 + trial % 4);
        for kernel in kernels() {
            let c = 2.0;
            let base = svm::train_csvm(&ds, c, kernel).unwrap();
            let eel = svm::train_eelsvm(&ds, c * ds.len() as f64, kernel, 0.0).unwrap();
            let diff = max_abs_diff(&decisions(&base, &ds), &decisions(&eel, &ds));
            assert!(diff <= 1e-5, "trial {trial} {kernel}: {diff}");
        }
    }
}

#[test]
fn eel_full_and_reduced_duals_agree() {
    let mut rng = SeededRng::new(300);
    for trial in 0..6 {
        let ds = random_dataset(&mut rng, 16 + 4 * trial, 2);
        let level = [0.0, 0.1, 0.3, 0.5, 0.8, 0.95][trial];
        let d = 3.0 * ds.len() as f64;
        let m = svm::train_eelsvm(&ds, d, KernelSpec::Linear, level).unwrap();
        let reduced = svm::eel_reduced_dual_objective(&ds, d, KernelSpec::Linear, level).unwrap();
        assert!(
            (m.dual_objective - reduced).abs() <= 1e-6 * (1.0 + reduced.abs()),
            "{} vs {reduced}",
            m.dual_objective
        );
    }
}

#[test]
fn strong_duality_on_random_data() {
    let mut rng = SeededRng::new(400);
    for trial in 0..5 {
        let ds = random_dataset(&mut rng, 20 + 4 * trial, 2);
        for kernel in kernels() {
            let models = [
                svm::train_csvm(&ds, 1.5, kernel).unwrap(),
                svm::train_spsvm(&ds, 1.5, kernel, &NoiseSpec::gaussian(0.7).unwrap(), None)
                    .unwrap(),
                svm::train_eelsvm(&ds, 1.5 * ds.len() as f64, kernel, 0.2).unwrap(),
            ];
            for m in &models {
                let dual = -m.dual_objective;
                let gap = m.primal_objective() - dual;
                assert!(
                    gap.abs() <= 1e-4 * (1.0 + dual.abs()),
                    "{} trial {trial} {kernel}: gap {gap}",
                    m.variant
                );
            }
        }
    }
}

#[test]
fn label_flip_negates_decisions() {
    let mut rng = SeededRng::new(500);
    let ds = random_dataset(&mut rng, 30, 3);
    let flipped = Dataset::from_rows(
        &ds.rows().map(|r| r.to_vec()).collect::<Vec<_>>(),
        ds.labels().iter().map(|y| -y).collect(),
    )
    .unwrap();
    for kernel in kernels() {
        let a = decisions(&svm::train_csvm(&ds, 1.0, kernel).unwrap(), &ds);
        let b = decisions(&svm::train_csvm(&flipped, 1.0, kernel).unwrap(), &ds);
        let neg: Vec<f64> = b.iter().map(|v| -v).collect();
        assert!(max_abs_diff(&a, &neg) <= 1e-6, "{kernel}");
    }
}

#[test]
fn permutation_and_duplication_invariance() {
    let mut rng = SeededRng::new(600);
    let ds = random_dataset(&mut rng, 24, 2);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    rng.shuffle(&mut order);
    let shuffled = ds.subset(&order);
    let doubled: Vec<usize> = (0..ds.len()).chain(0..ds.len()).collect();
    let doubled = ds.subset(&doubled);
    for kernel in kernels() {
        let base = decisions(&svm::train_csvm(&ds, 1.0, kernel).unwrap(), &ds);
        let perm = decisions(&svm::train_csvm(&shuffled, 1.0, kernel).unwrap(), &ds);
        assert!(max_abs_diff(&base, &perm) <= 1e-6, "{kernel}");
        let dup = decisions(&svm::train_csvm(&doubled, 0.5, kernel).unwrap(), &ds);
        assert!(max_abs_diff(&base, &dup) <= 1e-6, "{kernel}");
    }
}

#[test]
fn duplicated_two_point_fixture_keeps_decision() {
    let ds = two_points();
    let dup = ds.subset(&[0, 1, 0, 1]);
    let a = svm::train_csvm(&ds, 10.0, KernelSpec::Linear).unwrap();
    let b = svm::train_csvm(&dup, 10.0, KernelSpec::Linear).unwrap();
    let grid: Vec<Vec<f64>> = (-5..=5).map(|i| vec![i as f64 * 0.4]).collect();
    assert!(max_abs_diff(&a.predict(&grid).unwrap().1, &b.predict(&grid).unwrap().1) <= 1e-6);
}

#[test]
fn tiny_penalty_predicts_majority() {
    let mut rng = SeededRng::new(700);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..30 {
        let y = if i % 3 == 0 { -1.0 } else { 1.0 };
        rows.push(vec![y + rng.normal(), rng.normal()]);
        labels.push(y);
    }
    let ds = Dataset::from_rows(&rows, labels).unwrap();
    let m = svm::train_csvm(&ds, 1e-8, KernelSpec::Linear).unwrap();
    let (pred, values) = m.predict_dataset(&ds).unwrap();
    assert!(pred.iter().all(|&p| p == 1.0));
    let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - values.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1e-6);
}

fn sp_dual_program(a: f64, c: f64) -> QuadraticProgram {
    // two points at -1 (y=-1), +1 (y=+1), linear kernel, shifts of a
    let xs = [-1.0, 1.0, -1.0 - a, 1.0 - a, -1.0 + a, 1.0 + a];
    let ys = [-1.0, 1.0, -1.0, 1.0, -1.0, 1.0];
    let q = DMatrix::from_fn(6, 6, |i, j| ys[i] * ys[j] * xs[i] * xs[j]);
    let mut a_in = DMatrix::zeros(2, 6);
    for u in 0..6 {
        a_in[(u % 2, u)] = 1.0;
    }
    QuadraticProgram::new(q, DVector::from_element(6, -1.0))
        .with_equalities(DMatrix::from_row_slice(1, 6, &ys), DVector::zeros(1))
        .with_inequalities(a_in, DVector::from_element(2, c))
        .with_bounds(DVector::zeros(6), DVector::from_element(6, f64::INFINITY))
}

#[test]
fn sp_two_point_fixture_matches_oracle() {
    let ds = two_points();
    // alpha level whose quantile times std(x) = 0.5
    let std = 2f64.sqrt();
    let target = 0.5 / std;
    let level = 0.5 * (1.0 + libm_erf(target / 2f64.sqrt()));
    let noise = NoiseSpec::gaussian(level).unwrap();
    let sp = svm::train_spsvm(&ds, 10.0, KernelSpec::Linear, &noise, Some(0)).unwrap();
    let a = sp.perturbation.as_ref().unwrap().magnitudes[0];
    assert!((a - 0.5).abs() < 1e-9, "{a}");
    let (_, oracle) = common::brute_force_qp(&sp_dual_program(a, 10.0), 1e-10).unwrap();
    assert!(
        (sp.dual_objective - oracle).abs() < 1e-6,
        "{} vs {oracle}",
        sp.dual_objective
    );
    // boundary stays between the inward-shifted points and the margin narrows
    let base = svm::train_csvm(&ds, 10.0, KernelSpec::Linear).unwrap();
    let w_sp = sp.linear_weights().unwrap()[0];
    let w_c = base.linear_weights().unwrap()[0];
    assert!(w_sp > w_c, "{w_sp} vs {w_c}");
    let root = -sp.bias / w_sp;
    assert!(root > -0.5 && root < 0.5);
}

/// erf via its Taylor series (|x| < 1 here).
fn libm_erf(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    for k in 1..60 {
        term *= -x * x / k as f64;
        sum += term / (2 * k + 1) as f64;
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

#[test]
fn sp_conservatism_grows_with_perturbation() {
    let mut prev = f64::NEG_INFINITY;
    for i in 0..10 {
        let a = 0.1 * i as f64;
        let (_, dual_min) = common::brute_force_qp(&sp_dual_program(a, 10.0), 1e-10).unwrap();
        let primal_opt = -dual_min;
        assert!(primal_opt >= prev - 1e-8, "a={a}");
        prev = primal_opt;
    }
    // the trainer agrees along the same grid
    let ds = two_points();
    let mut prev = f64::NEG_INFINITY;
    for level in [0.5, 0.55, 0.6, 0.65, 0.7, 0.75] {
        let m = svm::train_spsvm(
            &ds,
            10.0,
            KernelSpec::Linear,
            &NoiseSpec::gaussian(level).unwrap(),
            Some(0),
        )
        .unwrap();
        let v = m.primal_objective();
        assert!(v >= prev - 1e-6);
        prev = v;
    }
}

#[test]
fn eel_two_point_fixture_matches_oracle() {
    let ds = two_points();
    let d = 4.0;
    let m = svm::train_eelsvm(&ds, d, KernelSpec::Linear, 0.5).unwrap();
    m.check_invariants().unwrap();
    let d1 = d / (2.0 * 0.5);
    // variables (alpha, beta) with gamma as slack
    let t = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    let mut q = DMatrix::zeros(4, 4);
    q.view_mut((0, 0), (2, 2)).copy_from(&t);
    let program = QuadraticProgram::new(q, DVector::from_vec(vec![-1.0, -1.0, 0.0, 0.0]))
        .with_equalities(
            DMatrix::from_row_slice(2, 4, &[-1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]),
            DVector::from_vec(vec![0.0, d]),
        )
        .with_inequalities(
            DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]),
            DVector::from_element(2, d1),
        )
        .with_bounds(DVector::zeros(4), DVector::from_element(4, f64::INFINITY));
    let (_, oracle) = common::brute_force_qp(&program, 1e-10).unwrap();
    assert!(
        (m.dual_objective - oracle).abs() < 1e-6,
        "{} vs {oracle}",
        m.dual_objective
    );
}

#[test]
fn eel_extreme_level_trains() {
    let mut rng = SeededRng::new(800);
    let ds = random_dataset(&mut rng, 20, 2);
    let n = ds.len() as f64;
    let m = svm::train_eelsvm(&ds, 100.0 * n, KernelSpec::Linear, 1.0 - 1.0 / n).unwrap();
    m.check_invariants().unwrap();
}

#[test]
fn support_vectors_meet_margin() {
    let mut rng = SeededRng::new(900);
    let ds = random_dataset(&mut rng, 30, 2);
    let c = 1.0;
    let m = svm::train_csvm(&ds, c, KernelSpec::Rbf { gamma: 0.5 }).unwrap();
    let values = decisions(&m, &ds);
    for (i, &a) in m.alpha.iter().enumerate() {
        if a > 1e-6 && a < c - 1e-6 {
            assert!((ds.label(i) * values[i] - 1.0).abs() < 1e-6);
        }
        if a < 1e-10 {
            assert!(ds.label(i) * values[i] >= 1.0 - 1e-6);
        }
    }
}
