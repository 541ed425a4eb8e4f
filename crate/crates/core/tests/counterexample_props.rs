use proptest::prelude::*;
use serde_json::json;

use ommap_core::counterexamples::*;
use ommap_core::measures::{quadrature_mass, Density1D, RegisteredDensity};

fn registered(name: &str, params: serde_json::Value) -> RegisteredDensity {
    RegisteredDensity::from_name(name, &params).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn closed_forms_match_quadrature(
        which in 0usize..4,
        n in 2u64..40,
        t in -0.9f64..0.9,
        a in -6.0f64..6.0,
        w in 0.01f64..4.0,
    ) {
        let d = match which {
            0 => registered("normal", json!({"mean": 0.3, "variance": 1.7})),
            1 => registered("mixture", json!({"t": t, "r": 5.0})),
            2 => registered("spike", json!({"n": n})),
            _ => registered("om_not_strong", json!({"levels": 6})),
        };
        let d = d.density();
        // spikes of the om_not_strong density sit at the integers
        prop_assume!(which != 3 || (a + w).floor() < a.ceil());
        if let Some(exact) = d.interval_mass(a, a + w) {
            let q = quadrature_mass(d, a, a + w, 1e-13).unwrap();
            prop_assert!((exact - q).abs() <= 1e-8, "{d:?} on [{a}, {}]: {exact} vs {q}", a + w);
        }
    }

    #[test]
    fn spike_converges_pointwise(x in -1.0f64..4.0) {
        prop_assume!(x != 0.0);
        let lim = SpikeFamily::limit().density(x);
        let far = SpikeFamily::new(Some(1_000_000)).unwrap().density(x);
        let near = SpikeFamily::new(Some(10)).unwrap().density(x);
        prop_assert!((far - lim).abs() <= (near - lim).abs() + 1e-12);
        prop_assert!((far - lim).abs() < 1e-3 * (1.0 + lim) || x.abs() < 1e-5);
    }
}

#[test]
fn spike_sup_distance_stays_positive() {
    let lim = SpikeFamily::limit();
    for n in [10u64, 100, 1000, 10_000] {
        let f = SpikeFamily::new(Some(n)).unwrap();
        let x = spike_mode(Some(n)).unwrap();
        assert!((f.density(x) - lim.density(x)).abs() > 0.1, "n = {n}");
    }
}

#[test]
fn liminf_only_intervals_are_disjoint() {
    let m = LiminfOnlyMeasure::new(20).unwrap();
    let d: &dyn Density1D = &m;
    let mut s = d.support();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in s.windows(2) {
        assert!(w[0].1 <= w[1].0, "{:?} overlaps {:?}", w[0], w[1]);
    }
}
