use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::Density1D;
use crate::numerics::argmax_1d;

use super::kl::kl_divergence_1d;

/// `ρ^{(n)}(x) ∝ exp(−(x−1)²/2) + 1[x ≥ 0]·4n²x² exp(−n²x²)`; `n = None`
/// is the Gaussian limit `N(1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpikeFamily {
    pub n: Option<u64>,
}

impl SpikeFamily {
    pub fn new(n: Option<u64>) -> Result<Self> {
        if n == Some(0) {
            return Err(Error::InvalidParameter("spike index n must be at least 1".into()));
        }
        Ok(Self { n })
    }

    pub fn limit() -> Self {
        Self { n: None }
    }

    fn gauss(x: f64) -> f64 {
        (-0.5 * (x - 1.0).powi(2)).exp()
    }

    fn spike(&self, x: f64) -> f64 {
        match self.n {
            Some(n) if x >= 0.0 => {
                let n2 = (n as f64).powi(2);
                4.0 * n2 * x * x * (-n2 * x * x).exp()
            }
            _ => 0.0,
        }
    }

    fn normaliser(&self) -> f64 {
        let base = (2.0 * PI).sqrt();
        match self.n {
            Some(n) => base + PI.sqrt() / n as f64,
            None => base,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        (Self::gauss(x) + self.spike(x)) / self.normaliser()
    }

    pub fn pdf_derivative(&self, x: f64) -> f64 {
        let dg = -(x - 1.0) * Self::gauss(x);
        let ds = match self.n {
            Some(n) if x >= 0.0 => {
                let n2 = (n as f64).powi(2);
                4.0 * n2 * (2.0 * x - 2.0 * n2 * x.powi(3)) * (-n2 * x * x).exp()
            }
            _ => 0.0,
        };
        (dg + ds) / self.normaliser()
    }

    /// Potential `Φ_n = −log(ρ^{(n)}/ρ^{(∞)})`, the reweighting that turns the
    /// Gaussian limit into `μ^{(n)}`.
    pub fn log_ratio_potential(&self, x: f64) -> f64 {
        let lim = Self::limit();
        -(self.pdf(x).ln() - lim.pdf(x).ln())
    }

    fn quad_breaks(&self) -> Vec<f64> {
        let mut pts = vec![-40.0, 0.0, 1.0, 41.0];
        if let Some(n) = self.n {
            let w = 1.0 / n as f64;
            pts.extend([w, 3.0 * w, 8.0 * w].into_iter().filter(|&p| p < 1.0));
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}

impl Density1D for SpikeFamily {
    fn density(&self, x: f64) -> f64 {
        self.pdf(x)
    }

    fn support(&self) -> Vec<(f64, f64)> {
        vec![(-40.0, 41.0)]
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.quad_breaks()
    }

    fn name(&self) -> String {
        match self.n {
            Some(n) => format!("spike(n={n})"),
            None => "spike(n=inf)".into(),
        }
    }
}

/// Global maximiser of `ρ^{(n)}`.
pub fn spike_mode(n: Option<u64>) -> Result<f64> {
    let fam = SpikeFamily::new(n)?;
    let grid = match n {
        Some(n) => (n as usize).saturating_mul(500).clamp(5_000, 5_000_000),
        None => 5_000,
    };
    Ok(argmax_1d(&|x| fam.pdf(x), &|x| fam.pdf_derivative(x), -1.0, 4.0, grid).0)
}

/// `KL(μ^{(∞)} ‖ μ^{(n)})` by quadrature.
pub fn spike_kl(n: u64, abs_tol: f64) -> Result<f64> {
    let fam = SpikeFamily::new(Some(n))?;
    let lim = SpikeFamily::limit();
    let log_ratio = |x: f64| {
        let g = SpikeFamily::gauss(x);
        (fam.normaliser() / lim.normaliser()).ln() - (fam.spike(x) / g).ln_1p()
    };
    kl_divergence_1d(&|x| lim.pdf(x), &log_ratio, &fam.quad_breaks(), abs_tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limit_mode_is_one() {
        assert!((spike_mode(None).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mode_near_one_over_n() {
        let m = spike_mode(Some(100)).unwrap();
        assert!((0.009..=0.011).contains(&m), "mode {m}");
    }

    #[test]
    fn kl_matches_high_precision_reference() {
        // 30-digit reference quadrature: n·KL is about 0.28, not 1
        for (n, reference) in [(20, 0.01326937349), (50, 0.005542175586), (100, 0.002811059472)] {
            let kl = spike_kl(n, 1e-14).unwrap();
            assert!((kl - reference).abs() < 1e-11, "n={n}: {kl}");
        }
    }

    #[test]
    fn densities_normalised() {
        for n in [Some(1), Some(2), Some(10), Some(100), None] {
            crate::measures::validate_density(&SpikeFamily::new(n).unwrap(), 1e-10).unwrap();
        }
    }

    #[test]
    fn pointwise_but_not_uniform_convergence() {
        let lim = SpikeFamily::limit();
        for x in [-0.5, 0.0, 0.3, 1.0, 2.5] {
            let d = (SpikeFamily::new(Some(100_000)).unwrap().pdf(x) - lim.pdf(x)).abs();
            assert!(d < 1e-4, "x={x}: {d}");
        }
        for n in [10u64, 100, 1000, 10_000] {
            let f = SpikeFamily::new(Some(n)).unwrap();
            let x = 1.0 / n as f64;
            assert!((f.pdf(x) - lim.pdf(x)).abs() > 0.3);
        }
    }
}
