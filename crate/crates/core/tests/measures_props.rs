use nalgebra::DMatrix;
use proptest::prelude::*;
use serde_json::json;

use ommap_core::measures::*;
use ommap_core::spaces::{SpectralOperator, WeightedSeqSpace};

fn small_mc() -> BallMassOptions {
    BallMassOptions { mc_samples: 40_000, batches: 20, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gaussian_ball_mass_monotone_and_bounded(
        eig in prop::collection::vec(0.2f64..3.0, 1..4),
        c in prop::collection::vec(-2.0f64..2.0, 3),
        r0 in 0.05f64..2.0,
    ) {
        let k = eig.len();
        let mu = Measure::Gaussian(GaussianMeasure::new(vec![0.0; k], SpectralOperator::diagonal(eig).unwrap()).unwrap());
        let center = &c[..k];
        for norm in [WeightedSeqSpace::sup(k), WeightedSeqSpace::euclidean(k)] {
            let mut prev = 0.0;
            for j in 0..5 {
                let r = r0 * 1.5f64.powi(j);
                let m = mu.ball_mass(center, r, &norm, &small_mc()).unwrap();
                prop_assert!(m.value <= 1.0 + 1e-12);
                // MC masses share the proposal stream across radii
                prop_assert!(m.value >= prev * (1.0 - 1e-12) || m.method == MassMethod::MonteCarlo && m.value + 4.0 * m.stderr >= prev);
                prev = m.value;
            }
        }
    }

    #[test]
    fn one_dimensional_masses_monotone(c in -3.0f64..3.0, r0 in 1e-3f64..1.0) {
        for (name, params) in [("normal", json!({})), ("spike", json!({"n": 7})), ("mixture", json!({"t": 0.3, "r": 5.0}))] {
            let mu = Measure::Density1D(RegisteredDensity::from_name(name, &params).unwrap());
            let norm = mu.default_norm();
            let mut prev = 0.0;
            for j in 0..6 {
                let m = mu.ball_mass(&[c], r0 * 2f64.powi(j), &norm, &Default::default()).unwrap().value;
                prop_assert!(m <= 1.0 + 1e-12 && m + 1e-14 >= prev, "{name}: {m} after {prev}");
                prev = m;
            }
        }
    }

    #[test]
    fn besov_sup_product_matches_sampling(
        s in 0.6f64..2.0,
        c in prop::collection::vec(-1.0f64..1.0, 3),
        r in 0.1f64..1.0,
        seed in 0u64..1000,
    ) {
        let mu = BesovMeasure::new(s, 1, 1.0, 3).unwrap();
        let norm = WeightedSeqSpace::sup(3);
        let exact = Measure::Besov(mu.clone()).ball_mass(&c, r, &norm, &Default::default()).unwrap();
        prop_assert_eq!(exact.method, MassMethod::ExactProduct);
        // hit-or-miss estimate from direct draws
        let draws = Measure::Besov(mu).sample(40_000, seed).unwrap();
        let hits = draws.iter().filter(|u| norm.distance(u, &c).unwrap() < r).count() as f64;
        let p = hits / draws.len() as f64;
        let se = (exact.value * (1.0 - exact.value) / draws.len() as f64).sqrt().max(1e-4);
        prop_assert!((p - exact.value).abs() <= 4.0 * se, "exact {} vs empirical {p}", exact.value);
    }

    #[test]
    fn identical_centres_give_unit_ratio(
        c in prop::collection::vec(-1.0f64..1.0, 2),
        r0 in 0.05f64..0.5,
        seed in 0u64..100,
    ) {
        let mu = Measure::Besov(BesovMeasure::new(1.0, 1, 1.0, 2).unwrap());
        let opts = BallMassOptions { mc_samples: 20_000, seed, ..Default::default() };
        let est = ball_ratio_curve(&mu, &c, &c, &geometric_radii(r0, 5), &WeightedSeqSpace::euclidean(2), &opts).unwrap();
        prop_assert!(est.ratios.iter().all(|&q| q == 1.0));
    }
}

#[test]
fn gaussian_sup_product_matches_monte_carlo() {
    let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    let cov = SpectralOperator::with_basis(vec![0.7, 1.6], q).unwrap();
    let mu = GaussianMeasure::new(vec![0.2, -0.1], cov).unwrap();
    let diag = Measure::Gaussian(GaussianMeasure::new(vec![0.2, -0.1], SpectralOperator::diagonal(vec![0.7, 1.6]).unwrap()).unwrap());
    let norm = WeightedSeqSpace::new(f64::INFINITY, vec![1.0, 0.5]).unwrap();
    let opts = BallMassOptions { mc_samples: 400_000, ..Default::default() };
    for r in [0.1, 0.4, 1.0] {
        let exact = diag.ball_mass(&[0.5, 0.5], r, &norm, &opts).unwrap();
        let mc = Measure::Gaussian(mu.clone()).ball_mass(&[0.5, 0.5], r, &norm, &opts).unwrap();
        assert_eq!(exact.method, MassMethod::ExactProduct);
        assert_eq!(mc.method, MassMethod::MonteCarlo);
        assert!((exact.value - mc.value).abs() <= 3.0 * mc.stderr, "r={r}: {} vs {} ± {}", exact.value, mc.value, mc.stderr);
    }
}

#[test]
fn besov_coordinate_densities_normalised() {
    let mu = BesovMeasure::new(1.5, 1, 1.0, 6).unwrap();
    for &g in mu.gamma() {
        let d = CustomDensity::new("laplace", move |x: f64| (-x.abs() / g).exp() / (2.0 * g), vec![(-60.0 * g, 60.0 * g)], vec![0.0]).unwrap();
        let total = quadrature_mass(&d, -60.0 * g, 60.0 * g, 1e-13).unwrap();
        assert!((total - 1.0).abs() < 1e-10, "gamma {g}: {total}");
    }
}

#[test]
fn besov_ambient_norm_mean_is_bounded() {
    let mu = BesovMeasure::new(1.0, 1, 1.0, 40).unwrap();
    let space = mu.ambient_space();
    let draws = Measure::Besov(mu.clone()).sample(20_000, 3).unwrap();
    let norms: Vec<f64> = draws.iter().map(|u| space.norm(u).unwrap()).collect();
    let n = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / n;
    let sd = (norms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let bound = mu.expected_ambient_norm();
    let oracle: f64 = (1..=40).map(|k| (k as f64).powf(-2.0)).sum();
    assert!((bound - oracle).abs() < 1e-12);
    assert!(mean <= bound + 3.0 * sd / n.sqrt(), "{mean} vs {bound}");
}
