//! Closed-form examples: Gaussian KL pair, mixture and spike families, the
//! liminf-only dyadic measure, the OM-minimiser-not-strong-mode density and the
//! two crosses. Each doubles as an oracle for the generic machinery.

pub mod crosses;
pub mod kl;
pub mod liminf_only;
pub mod mixture;
pub mod om_not_strong;
pub mod spike;

pub use crosses::{crosses_ball_masses, crosses_summary, CrossCenter, CrossNorm, CrossesMeasure, CrossesSummary};
pub use kl::{kl_divergence_1d, kl_gaussians, kl_gaussians_quadrature};
pub use liminf_only::{liminf_only_ratios, DyadicMass, LiminfOnlyMeasure, LiminfOnlyRatios};
pub use mixture::{mixture_kl, mixture_modes, MixtureFamily, MixtureModes};
pub use om_not_strong::{om_not_strong_suite, OmNotStrongMeasure, OmNotStrongReport};
pub use spike::{spike_kl, spike_mode, SpikeFamily};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::Density1D;

pub const FIGURE_IDS: [&str; 4] = ["fig1a", "fig1b", "figB1", "figB3"];

/// Plot-ready grid: first column is `x`, the rest are densities.
#[derive(Clone, Debug, Serialize)]
pub struct FigureData {
    pub id: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Vertical marker positions with labels.
    pub markers: Vec<(String, f64)>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn grid_figure(id: &str, xs: Vec<f64>, curves: Vec<(String, Box<dyn Fn(f64) -> f64>)>) -> FigureData {
    let mut columns = vec!["x".to_string()];
    columns.extend(curves.iter().map(|(n, _)| n.clone()));
    let rows = xs
        .into_iter()
        .map(|x| std::iter::once(x).chain(curves.iter().map(|(_, f)| f(x))).collect())
        .collect();
    FigureData { id: id.into(), columns, rows, markers: Vec::new() }
}

pub fn reproduce_figure(id: &str) -> Result<FigureData> {
    match id {
        "fig1a" => {
            let r = 2.0;
            let curves = [-0.05, 0.0, 0.05]
                .into_iter()
                .map(|t| {
                    let fam = MixtureFamily::new(t, r).expect("valid");
                    (format!("rho_t={t}"), Box::new(move |x| fam.pdf(x)) as Box<dyn Fn(f64) -> f64>)
                })
                .collect();
            let mut fig = grid_figure(id, linspace(-6.0, 6.0, 1201), curves);
            fig.markers = vec![("-r".into(), -r), ("+r".into(), r)];
            Ok(fig)
        }
        "fig1b" => {
            let curves = [Some(1), Some(2), Some(10), Some(100), None]
                .into_iter()
                .map(|n| {
                    let fam = SpikeFamily::new(n).expect("valid");
                    let name = match n {
                        Some(n) => format!("rho_n={n}"),
                        None => "rho_n=inf".into(),
                    };
                    (name, Box::new(move |x| fam.pdf(x)) as Box<dyn Fn(f64) -> f64>)
                })
                .collect();
            let mut xs = linspace(-1.0, 4.0, 2001);
            // resolve the n = 100 spike near 1/100
            xs.extend(linspace(0.0, 0.05, 201));
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            let mut fig = grid_figure(id, xs, curves);
            fig.markers = [1.0, 0.5, 0.1, 0.01, 1.0]
                .iter()
                .zip(["mode n=1", "mode n=2", "mode n=10", "mode n=100", "mode n=inf"])
                .map(|(&x, l)| (l.to_string(), x))
                .collect();
            Ok(fig)
        }
        "figB1" => {
            let m = LiminfOnlyMeasure::new(12)?;
            // step function: sample just inside each interval end
            let mut xs = vec![-1.0, 1.0];
            for k in 1..=m.depth() {
                let a = m.alpha(k);
                for (lo, hi) in [(-1.0 + a, -1.0 + 2.0 * a), (1.0 - a, 1.0 - 0.5 * a)] {
                    let eps = 1e-6 * (hi - lo);
                    xs.extend([lo - eps, lo + eps, hi - eps, hi + eps]);
                }
            }
            xs.sort_by(f64::total_cmp);
            let mut fig = grid_figure(id, xs, vec![("rho".into(), Box::new(move |x| m.density(x)))]);
            let m = LiminfOnlyMeasure::new(12)?;
            fig.markers = (1..=m.depth())
                .flat_map(|n| [(format!("-1+alpha_{n}"), -1.0 + m.alpha(n)), (format!("1-alpha_{n}"), 1.0 - m.alpha(n))])
                .collect();
            Ok(fig)
        }
        "figB3" => {
            let m = OmNotStrongMeasure::new(5)?;
            let mut xs = linspace(0.5, 5.5, 5001);
            for k in 1..=5usize {
                let h = OmNotStrongMeasure::plateau_half_width(k);
                xs.extend(linspace(k as f64 - 2.0 * h, k as f64 + 2.0 * h, 41));
            }
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            let markers = (1..=5usize)
                .flat_map(|k| {
                    let h = OmNotStrongMeasure::plateau_half_width(k);
                    let c = k as f64;
                    [(format!("spike {k}"), c), (format!("plateau {k} lo"), c - h), (format!("plateau {k} hi"), c + h)]
                })
                .collect();
            let mut fig = grid_figure(id, xs, vec![("rho".into(), Box::new(move |x| m.density(x)))]);
            fig.markers = markers;
            Ok(fig)
        }
        other => Err(Error::InvalidInput(format!("unknown figure id '{other}', expected one of {FIGURE_IDS:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig1b_has_five_density_columns() {
        let f = reproduce_figure("fig1b").unwrap();
        assert_eq!(f.columns.len(), 6);
        assert!(f.rows.iter().all(|r| r[0] >= -1.0 && r[0] <= 4.0));
    }

    #[test]
    fn every_figure_builds() {
        for id in FIGURE_IDS {
            let f = reproduce_figure(id).unwrap();
            assert!(!f.rows.is_empty());
            assert!(f.rows.iter().all(|r| r.len() == f.columns.len() && r[1..].iter().all(|v| *v >= 0.0)));
        }
        assert!(reproduce_figure("fig9").is_err());
    }
}
