mod common;

use robsvm::qp;
use robsvm::rng::SeededRng;

#[test]
fn interior_point_matches_enumeration() {
    let mut rng = SeededRng::new(11);
    for trial in 0..50 {
        let instance = common::random_qp(&mut rng);
        let (_, oracle) = common::brute_force_qp(&instance, 0.0).expect("instance is feasible");
        let sol = qp::solve(&instance).unwrap();
        assert!(sol.is_optimal(), "trial {trial}: {:?}", sol.status);
        assert!(sol.kkt_residual <= 1e-6);
        assert!(
            (sol.objective - oracle).abs() <= 1e-6 * (1.0 + oracle.abs()),
            "trial {trial}: {} vs {oracle}",
            sol.objective
        );
    }
}

#[test]
fn dump_round_trip_preserves_solution() {
    let mut rng = SeededRng::new(3);
    let instance = common::random_qp(&mut rng);
    let mut buf = Vec::new();
    qp::write_qp(&instance, &mut buf).unwrap();
    let back = qp::read_qp(buf.as_slice()).unwrap();
    assert_eq!(back, instance);
    assert_eq!(qp::solve(&back).unwrap().x, qp::solve(&instance).unwrap().x);
}
