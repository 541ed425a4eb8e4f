use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;
use serde_json::json;

use ommap_core::bip::{quadratic_potential, LinearObservation};
use ommap_core::counterexamples::CrossNorm;
use ommap_core::measures::*;
use ommap_core::om::*;
use ommap_core::report::Verdict;
use ommap_core::spaces::{SpectralOperator, WeightedSeqSpace};

fn rotation(theta: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
}

fn gaussian_2d(l1: f64, l2: f64, theta: f64, m: [f64; 2]) -> GaussianMeasure {
    GaussianMeasure::new(m.to_vec(), SpectralOperator::with_basis(vec![l1, l2], rotation(theta)).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gaussian_om_two_homogeneous(
        l1 in 0.1f64..4.0, l2 in 0.1f64..4.0, theta in 0.0f64..3.2,
        m in prop::array::uniform2(-2.0f64..2.0),
        h in prop::array::uniform2(-2.0f64..2.0),
        c in -4.0f64..4.0,
    ) {
        let om = GaussianOm::new(gaussian_2d(l1, l2, theta, m));
        let at = |t: f64| [m[0] + t * h[0], m[1] + t * h[1]];
        let lhs = om.eval(&at(c));
        let rhs = c * c * om.eval(&at(1.0));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
    }

    #[test]
    fn degenerate_gaussian_om_infinite_off_range(
        l in 0.1f64..4.0, theta in 0.0f64..3.2, t in 0.1f64..3.0,
    ) {
        let om = GaussianOm::new(gaussian_2d(l, 0.0, theta, [0.0, 0.0]));
        let q = rotation(theta);
        let kernel = [t * q[(0, 1)], t * q[(1, 1)]];
        let range = [t * q[(0, 0)], t * q[(1, 0)]];
        prop_assert!(om.eval(&kernel).is_infinite());
        prop_assert!((om.eval(&range) - 0.5 * t * t / l).abs() < 1e-10);
    }

    #[test]
    fn besov_om_one_homogeneous(
        s in 0.5f64..3.0,
        u in prop::collection::vec(-3.0f64..3.0, 8),
        c in -4.0f64..4.0,
    ) {
        let om = BesovOm::new(BesovMeasure::new(s, 1, 1.0, 8).unwrap());
        let cu: Vec<f64> = u.iter().map(|x| c * x).collect();
        let rhs = c.abs() * om.eval(&u);
        prop_assert!((om.eval(&cu) - rhs).abs() <= 1e-12 * rhs.max(1.0));
    }

    #[test]
    fn posterior_difference_identity(
        l1 in 0.1f64..4.0, l2 in 0.1f64..4.0, theta in 0.0f64..3.2,
        o in prop::collection::vec(-2.0f64..2.0, 2),
        y in -3.0f64..3.0,
        x1 in prop::array::uniform2(-3.0f64..3.0),
        x2 in prop::array::uniform2(-3.0f64..3.0),
    ) {
        let prior: Arc<dyn OmFunctional> = Arc::new(GaussianOm::new(gaussian_2d(l1, l2, theta, [0.0, 0.0])));
        let obs = LinearObservation::with_identity_noise(DMatrix::from_row_slice(1, 2, &o), vec![y]).unwrap();
        let phi = quadratic_potential(&obs).unwrap();
        let post = PosteriorOm::new(prior.clone(), phi.clone()).unwrap();
        let lhs = (post.eval(&x1) - post.eval(&x2)) - (prior.eval(&x1) - prior.eval(&x2));
        prop_assert!((lhs - (phi.eval(&x1) - phi.eval(&x2))).abs() <= 1e-10);
    }
}

fn grid(centre: f64, half: f64, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| vec![centre - half + 2.0 * half * i as f64 / (n - 1) as f64]).collect()
}

#[test]
fn gaussian_om_argmin_is_the_weak_mode() {
    let mu = Measure::Density1D(RegisteredDensity::from_name("normal", &json!({"mean": 0.7, "variance": 0.5})).unwrap());
    let om = FnOm::new("gaussian", vec![0.7], |x| (x[0] - 0.7).powi(2)).unwrap();
    let competitors = grid(0.7, 2.0, 41);
    let argmin = competitors.iter().min_by(|a, b| om.eval(a).total_cmp(&om.eval(b))).unwrap().clone();
    let radii = geometric_radii(0.1, 8);
    let norm = mu.default_norm();
    let opts = BallMassOptions { fit_power: 2.0, ..Default::default() };
    let c = classify_mode(&mu, &argmin, &competitors, &radii, &norm, &opts, &Default::default()).unwrap();
    assert_eq!(c.verdicts.global_weak, Verdict::Yes);
    assert_eq!(c.verdicts.strong, Verdict::Yes);
    let off = vec![argmin[0] + 0.5];
    let c = classify_mode(&mu, &off, &competitors, &radii, &norm, &opts, &Default::default()).unwrap();
    assert_eq!(c.verdicts.global_weak, Verdict::No);
}

#[test]
fn besov_om_argmin_is_the_weak_mode() {
    let b = BesovMeasure::new(1.0, 1, 1.0, 2).unwrap();
    let om = BesovOm::new(b.clone());
    let mu = Measure::Besov(b);
    let competitors: Vec<Vec<f64>> =
        (-4..=4).flat_map(|i| (-4..=4).map(move |j| vec![0.25 * i as f64, 0.25 * j as f64])).collect();
    let argmin = competitors.iter().min_by(|a, b| om.eval(a).total_cmp(&om.eval(b))).unwrap().clone();
    assert_eq!(argmin, vec![0.0, 0.0]);
    let norm = WeightedSeqSpace::sup(2);
    let radii = geometric_radii(0.05, 8);
    let c = classify_mode(&mu, &argmin, &competitors, &radii, &norm, &Default::default(), &Default::default()).unwrap();
    assert_eq!(c.verdicts.global_weak, Verdict::Yes);
    let c = classify_mode(&mu, &[0.25, 0.0], &competitors, &radii, &norm, &Default::default(), &Default::default()).unwrap();
    assert_eq!(c.verdicts.global_weak, Verdict::No);
}

#[test]
fn om_difference_matches_ratio_for_besov() {
    let b = BesovMeasure::new(1.5, 1, 1.0, 3).unwrap();
    let om = BesovOm::new(b.clone());
    let mu = Measure::Besov(b);
    let rep = om_difference_check(
        &mu,
        &om,
        &[0.3, -0.1, 0.05],
        &[-0.2, 0.2, 0.0],
        &geometric_radii(0.01, 8),
        &WeightedSeqSpace::sup(3),
        &Default::default(),
        1e-9,
    )
    .unwrap();
    assert!(rep.deviation <= rep.tolerance, "{rep:?}");
}

#[test]
fn classify_mode_reproduces_counterexample_verdicts() {
    // crosses: the mode is e1 for the l1 norm and -e1 for the sup norm
    let crosses = Measure::Crosses(ommap_core::counterexamples::CrossesMeasure::new());
    let radii = geometric_radii(0.1, 8);
    for (norm, winner, loser) in [
        (CrossNorm::L1.space(), vec![1.0, 0.0], vec![-1.0, 0.0]),
        (CrossNorm::Linf.space(), vec![-1.0, 0.0], vec![1.0, 0.0]),
    ] {
        let opts = BallMassOptions::default();
        let yes = classify_mode(&crosses, &winner, &[loser.clone()], &radii, &norm, &opts, &Default::default()).unwrap();
        let no = classify_mode(&crosses, &loser, &[winner.clone()], &radii, &norm, &opts, &Default::default()).unwrap();
        assert_eq!(yes.verdicts.global_weak, Verdict::Yes);
        assert_eq!(no.verdicts.global_weak, Verdict::No);
    }
    // mixture with t > 0: the right bump is the mode
    let mix = Measure::Density1D(RegisteredDensity::from_name("mixture", &json!({"t": 0.3, "r": 5.0})).unwrap());
    let competitors = vec![vec![-5.0], vec![0.0], vec![4.0], vec![6.0]];
    let opts = BallMassOptions { fit_power: 2.0, ..Default::default() };
    let c = classify_mode(&mix, &[5.0], &competitors, &geometric_radii(0.1, 8), &mix.default_norm(), &opts, &Default::default())
        .unwrap();
    assert_eq!(c.verdicts.global_weak, Verdict::Yes);
    assert_eq!(c.verdicts.strong, Verdict::Yes);
}

#[test]
fn points_off_the_cameron_martin_range_have_property_m() {
    let g = gaussian_2d(1.0, 0.0, 0.4, [0.0, 0.0]);
    let om = GaussianOm::new(g.clone());
    let q = rotation(0.4);
    let outside: Vec<Vec<f64>> = [0.5, 1.0].iter().map(|t| vec![t * q[(0, 1)], t * q[(1, 1)]]).collect();
    let rep = m_property_probe(
        &Measure::Gaussian(g),
        &om,
        &outside,
        &geometric_radii(0.4, 8),
        &WeightedSeqSpace::euclidean(2),
        &Default::default(),
    )
    .unwrap();
    assert!(rep.verdict.is_pass(), "{rep:?}");
}
