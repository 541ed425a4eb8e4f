use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use ommap_core::bip::*;
use ommap_core::measures::{BesovMeasure, GaussianMeasure};
use ommap_core::om::{BesovOm, GaussianOm, OmFunctional, PosteriorOm};
use ommap_core::spaces::SpectralOperator;

fn random_obs(r: &mut ChaCha8Rng, j: usize, k: usize) -> LinearObservation {
    let o = DMatrix::from_fn(j, k, |_, _| r.sample::<f64, _>(StandardNormal));
    let noise: Vec<f64> = (0..j).map(|_| r.random_range(0.2..2.0)).collect();
    let y = (0..j).map(|_| 2.0 * r.sample::<f64, _>(StandardNormal)).collect();
    LinearObservation::new(o, SpectralOperator::diagonal(noise).unwrap(), y).unwrap()
}

fn random_prior(r: &mut ChaCha8Rng, k: usize) -> GaussianMeasure {
    let g = DMatrix::from_fn(k, k, |_, _| r.sample::<f64, _>(StandardNormal));
    let eig = (0..k).map(|_| r.random_range(0.1..3.0)).collect();
    let mean = (0..k).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
    GaussianMeasure::new(mean, SpectralOperator::with_basis(eig, g.qr().q()).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gaussian_map_is_posterior_mean(seed in 0u64..10_000, k in 1usize..8, j in 1usize..8) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let prior = random_prior(&mut r, k);
        let obs = random_obs(&mut r, j, k);
        let map = map_solve_gaussian_linear(&prior, &obs).unwrap().point;
        let mean = gaussian_posterior_mean(&prior, &obs).unwrap();
        let scale = mean.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
        for (a, b) in map.iter().zip(&mean) {
            prop_assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn besov_map_satisfies_kkt(seed in 0u64..10_000, k in 1usize..15, j in 1usize..8) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let obs = random_obs(&mut r, j, k);
        let gamma = BesovMeasure::new(1.0, 1, 1.0, k).unwrap().gamma().to_vec();
        let sol = map_solve_besov_linear(&gamma, &obs, &Default::default()).unwrap();
        let phi = quadratic_potential(&obs).unwrap();
        let g = phi.gradient(&sol.point);
        for ((gk, uk), wk) in g.iter().zip(&sol.point).zip(&gamma) {
            prop_assert!(gk.abs() <= 1.0 / wk + 1e-8);
            if *uk != 0.0 {
                prop_assert!((gk + uk.signum() / wk).abs() <= 1e-8);
            }
        }
        prop_assert!(kkt_residual(&g, &sol.point, &gamma) <= 1e-8);
    }

    #[test]
    fn map_beats_random_points(seed in 0u64..10_000, k in 1usize..6, j in 1usize..5) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let obs = random_obs(&mut r, j, k);
        let phi = quadratic_potential(&obs).unwrap();
        let prior = random_prior(&mut r, k);
        let g = PosteriorOm::new(Arc::new(GaussianOm::new(prior.clone())), phi.clone()).unwrap();
        let b = BesovMeasure::new(1.0, 1, 1.0, k).unwrap();
        let bp = PosteriorOm::new(Arc::new(BesovOm::new(b.clone())), phi.clone()).unwrap();
        let gmap = map_solve_gaussian_linear(&prior, &obs).unwrap().point;
        let bmap = map_solve_besov_linear(b.gamma(), &obs, &Default::default()).unwrap().point;
        let (gv, bv) = (g.eval(&gmap), bp.eval(&bmap));
        for _ in 0..1000 {
            let x: Vec<f64> = (0..k).map(|_| 3.0 * r.sample::<f64, _>(StandardNormal)).collect();
            prop_assert!(gv <= g.eval(&x) + 1e-12);
            prop_assert!(bv <= bp.eval(&x) + 1e-9);
        }
    }

    #[test]
    fn quadratic_potential_is_nonnegative(seed in 0u64..10_000, k in 1usize..6, j in 1usize..6) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let phi = quadratic_potential(&random_obs(&mut r, j, k)).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..k).map(|_| 10.0 * r.sample::<f64, _>(StandardNormal)).collect();
            prop_assert!(phi.eval(&x) >= 0.0);
        }
        prop_assert_eq!(phi.lower_bound(), Some(0.0));
    }

    #[test]
    fn gaussian_map_is_affine_in_data(seed in 0u64..10_000, k in 1usize..6, j in 1usize..6) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let prior = random_prior(&mut r, k);
        let obs = random_obs(&mut r, j, k);
        let ys: Vec<Vec<f64>> = (0..3).map(|_| (0..j).map(|_| r.sample::<f64, _>(StandardNormal)).collect()).collect();
        let combo: Vec<f64> = (0..j).map(|i| ys[1][i] + ys[2][i] - ys[0][i]).collect();
        let solve = |y: &[f64]| map_solve_gaussian_linear(&prior, &obs.with_data(y.to_vec()).unwrap()).unwrap().point;
        let (u0, u1, u2, u) = (solve(&ys[0]), solve(&ys[1]), solve(&ys[2]), solve(&combo));
        for i in 0..k {
            prop_assert!((u[i] - (u1[i] + u2[i] - u0[i])).abs() <= 1e-10 * (1.0 + u[i].abs()));
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences(seed in 0u64..10_000, k in 1usize..8, j in 1usize..6) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let phi = quadratic_potential(&random_obs(&mut r, j, k)).unwrap();
        prop_assert!(phi.gradient_check(5, seed).unwrap() <= GRADIENT_CHECK_TOL);
    }
}

#[test]
fn non_unique_lasso_is_flagged() {
    // two identical columns with equal weights: any split of the mass is optimal
    let o = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
    let obs = LinearObservation::with_identity_noise(o, vec![3.0]).unwrap();
    let sol = map_solve_besov_linear(&[1.0, 1.0], &obs, &FistaOptions { x0: Some(vec![0.0, 2.0]), ..Default::default() }).unwrap();
    assert!((sol.point[0] + sol.point[1] - 2.0).abs() < 1e-6);
    let cd = coordinate_descent_weighted_lasso(&obs, &[1.0, 1.0], 1e-14, 100_000).unwrap();
    assert!((sol.point[0] - cd[0]).abs() > 1e-4, "{:?} vs {cd:?}", sol.point);
    assert!(sol.flags.iter().any(|f| f.contains("non-unique")), "{:?}", sol.flags);
}
