use proptest::prelude::*;
use robsvm::data::Dataset;
use robsvm::noise::{self, NoiseFamily, NoiseSpec};

/// Normal CDF by composite Simpson integration of the density from 0.
fn simpson_normal_cdf(z: f64) -> f64 {
    let steps = 20_000;
    let h = z / steps as f64;
    let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = f(0.0) + f(z);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    0.5 + acc * h / 3.0
}

fn bisect(cdf: impl Fn(f64) -> f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn gaussian_matches_integration_oracle() {
    for &p in &[0.5, 0.6, 0.75, 0.9, 0.975, 0.99, 0.3, 0.01] {
        let oracle = bisect(simpson_normal_cdf, p);
        let z = noise::quantile(NoiseFamily::Gaussian, 0.0, p).unwrap();
        assert!((z - oracle).abs() < 1e-10, "p={p}: {z} vs {oracle}");
    }
    let oracle = bisect(simpson_normal_cdf, 0.975);
    assert!((oracle - 1.959964).abs() < 1e-6);
}

#[test]
fn cauchy_closed_form() {
    for i in 1..100 {
        let p = i as f64 / 100.0;
        let exact = (std::f64::consts::PI * (p - 0.5)).tan();
        let z = noise::quantile(NoiseFamily::StudentT, 1.0, p).unwrap();
        assert!((z - exact).abs() < 1e-10 * exact.abs().max(1.0), "p={p}");
    }
}

#[test]
fn student_two_dof_closed_form() {
    for i in 1..100 {
        let p = i as f64 / 100.0;
        let exact = (2.0 * p - 1.0) / (2.0 * p * (1.0 - p)).sqrt();
        let z = noise::quantile(NoiseFamily::StudentT, 2.0, p).unwrap();
        assert!((z - exact).abs() < 1e-10, "p={p}");
    }
}

#[test]
fn quantile_strictly_increasing_on_grid() {
    for (family, dof) in [
        (NoiseFamily::Gaussian, 0.0),
        (NoiseFamily::StudentT, 1.0),
        (NoiseFamily::StudentT, 5.0),
    ] {
        let mut prev = f64::NEG_INFINITY;
        for i in 1..1000 {
            let z = noise::quantile(family, dof, i as f64 / 1000.0).unwrap();
            assert!(z > prev);
            prev = z;
        }
    }
}

proptest! {
    #[test]
    fn quantile_is_odd(p in 0.001f64..0.999, dof in 0.5f64..30.0) {
        for (family, dof) in [(NoiseFamily::Gaussian, 0.0), (NoiseFamily::StudentT, dof)] {
            let a = noise::quantile(family, dof, p).unwrap();
            let b = noise::quantile(family, dof, 1.0 - p).unwrap();
            prop_assert!((a + b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn perturbation_scales_linearly(
        xs in prop::collection::vec(-100.0f64..100.0, 2..30),
        s in 0.01f64..50.0,
        alpha in 0.5f64..0.99,
    ) {
        let labels: Vec<f64> = (0..xs.len()).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
        let scaled: Vec<Vec<f64>> = xs.iter().map(|&v| vec![s * v]).collect();
        let spec = NoiseSpec::student_t(3.0, alpha).unwrap();
        let a = noise::compute_perturbation(&Dataset::from_rows(&rows, labels.clone()).unwrap(), 0, &spec).unwrap();
        let b = noise::compute_perturbation(&Dataset::from_rows(&scaled, labels).unwrap(), 0, &spec).unwrap();
        prop_assert!((b.magnitudes[0] - s * a.magnitudes[0]).abs() <= 1e-10 * (1.0 + b.magnitudes[0].abs()));
        prop_assert!(a.magnitudes.iter().all(|&m| m >= 0.0 && m == a.magnitudes[0]));
    }
}
