use proptest::prelude::*;
use robsvm::losses::{self, LossSpec};

/// Direct minimization of `z + sum max{v - z, 0} / (N (1 - alpha))`:
/// coarse grid over the data range, then ternary search on the convex objective.
fn eel_oracle(values: &[f64], alpha: f64) -> f64 {
    let n = values.len() as f64;
    let obj =
        |z: f64| z + values.iter().map(|v| (v - z).max(0.0)).sum::<f64>() / (n * (1.0 - alpha));
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let steps = 200;
    let h = (hi - lo) / steps as f64;
    let mut best = lo;
    for i in 0..=steps {
        let z = lo + i as f64 * h;
        if obj(z) < obj(best) {
            best = z;
        }
    }
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    for _ in 0..300 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if obj(m1) <= obj(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    obj(0.5 * (a + b)).min(obj(best))
}

#[test]
fn integer_levels_are_top_r_means() {
    let mut state = 17u64;
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for n in 1..=25 {
        let v: Vec<f64> = (0..n).map(|_| 10.0 * next()).collect();
        let mut sorted = v.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        for r in 1..=n {
            let alpha = 1.0 - r as f64 / n as f64;
            let top: f64 = sorted[..r].iter().sum::<f64>() / r as f64;
            assert_eq!(losses::eel(&v, alpha).unwrap(), top, "n={n} r={r}");
        }
    }
}

#[test]
fn least_square_lands_off_the_bayes_sign() {
    // p (1 - z)^2 + q (1 + z)^2 is minimized at p - q
    for &(p, q) in &[(0.7, 0.3), (0.6, 0.4), (0.9, 0.1)] {
        let z = losses::fisher_argmin(&LossSpec::LeastSquare, p, q, (-3.0, 3.0, 1e-3)).unwrap();
        assert!((z - (p - q)).abs() < 1e-3, "{z}");
    }
}

proptest! {
    #[test]
    fn eel_matches_scalar_minimization(
        v in prop::collection::vec(0.0f64..10.0, 1..40),
        alpha in 0.0f64..0.98,
    ) {
        let closed = losses::eel(&v, alpha).unwrap();
        let oracle = eel_oracle(&v, alpha);
        prop_assert!((closed - oracle).abs() < 1e-8 * (1.0 + oracle.abs()), "{closed} vs {oracle}");
    }

    #[test]
    fn eel_monotone_in_alpha(v in prop::collection::vec(0.0f64..10.0, 1..30)) {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..50 {
            let e = losses::eel(&v, i as f64 / 50.0).unwrap();
            prop_assert!(e >= prev - 1e-12);
            prev = e;
        }
    }

    #[test]
    fn eel_mean_and_homogeneity(v in prop::collection::vec(0.0f64..10.0, 1..30), s in 0.01f64..100.0, alpha in 0.0f64..0.95) {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        prop_assert!((losses::eel(&v, 0.0).unwrap() - mean).abs() < 1e-12 * (1.0 + mean));
        let scaled: Vec<f64> = v.iter().map(|x| s * x).collect();
        let a = losses::eel(&scaled, alpha).unwrap();
        let b = s * losses::eel(&v, alpha).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
    }
}
