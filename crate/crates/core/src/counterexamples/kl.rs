use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::integrate_pieces;

/// `KL(N(0,1) ‖ N(0,σ))` where the second law has variance `σ`:
/// `(σ^{-1} − 1 + log σ)/2`.
pub fn kl_gaussians(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    Ok((1.0 / sigma - 1.0 + sigma.ln()) / 2.0)
}

/// Quadrature evaluation of `∫ ρ₁ log(ρ₁/ρ_σ)` for the same pair.
pub fn kl_gaussians_quadrature(sigma: f64, abs_tol: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    let integrand = |x: f64| {
        let rho1 = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        // log ρ₁ − log ρ_σ
        let log_ratio = -0.5 * x * x + 0.5 * x * x / sigma + 0.5 * sigma.ln();
        rho1 * log_ratio
    };
    integrate_pieces(&integrand, &[-40.0, -5.0, 0.0, 5.0, 40.0], abs_tol)
}

/// `KL(p ‖ q) = ∫ p log(p/q)` for densities given through `p` and a stable
/// `log(p/q)`.
pub fn kl_divergence_1d(
    p: &impl Fn(f64) -> f64,
    log_ratio: &impl Fn(f64) -> f64,
    breakpoints: &[f64],
    abs_tol: f64,
) -> Result<f64> {
    let f = |x: f64| {
        let px = p(x);
        if px == 0.0 {
            0.0
        } else {
            px * log_ratio(x)
        }
    };
    integrate_pieces(&f, breakpoints, abs_tol)
}
