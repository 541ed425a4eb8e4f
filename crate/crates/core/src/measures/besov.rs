use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spaces::WeightedSeqSpace;

/// Derived parameters of the sequence-space Besov-1 measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesovWeights {
    pub tau: f64,
    /// Smoothness index of the space carrying full measure, `s − d(1+η)`.
    pub t: f64,
    /// Laplace scales `γ_k = k^{1−1/τ}`.
    pub gamma: Vec<f64>,
    /// Weights of the ambient space `ℓ¹_δ`, `δ_k = k^{2+η−1/τ}`.
    pub delta: Vec<f64>,
}

/// `τ = (s/d + 1/2)^{-1}`, `γ_k = k^{1−1/τ}`, `δ_k = k^{2+η−1/τ}` for
/// `k = 1..=dim`.
pub fn besov_weights(s: f64, d: u32, eta: f64, dim: usize) -> Result<BesovWeights> {
    if d == 0 {
        return Err(Error::InvalidParameter("spatial dimension d must be positive".into()));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    if dim == 0 {
        return Err(Error::InvalidParameter("truncation dimension must be at least 1".into()));
    }
    let inv_tau = s / d as f64 + 0.5;
    if !(inv_tau > 0.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "tau = (s/d + 1/2)^-1 must be positive, got s/d + 1/2 = {inv_tau}"
        )));
    }
    let gamma_exp = 1.0 - inv_tau;
    let delta_exp = 2.0 + eta - inv_tau;
    let gamma = (1..=dim).map(|k| (k as f64).powf(gamma_exp)).collect();
    let delta = (1..=dim).map(|k| (k as f64).powf(delta_exp)).collect();
    Ok(BesovWeights { tau: 1.0 / inv_tau, t: s - d as f64 * (1.0 + eta), gamma, delta })
}

/// Product of Laplace distributions with scales `γ_k`, truncated to `dim`
/// coordinates. Coordinate `k` has density `(2γ_k)^{-1} exp(−|u|/γ_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BesovMeasure {
    s: f64,
    d: u32,
    eta: f64,
    weights: BesovWeights,
}

impl BesovMeasure {
    pub fn new(s: f64, d: u32, eta: f64, dim: usize) -> Result<Self> {
        let weights = besov_weights(s, d, eta, dim)?;
        Ok(Self { s, d, eta, weights })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn dim(&self) -> usize {
        self.weights.gamma.len()
    }

    pub fn weights(&self) -> &BesovWeights {
        &self.weights
    }

    pub fn gamma(&self) -> &[f64] {
        &self.weights.gamma
    }

    pub fn delta(&self) -> &[f64] {
        &self.weights.delta
    }

    /// The Cameron–Martin-type space `ℓ¹_γ` on which the OM functional lives.
    pub fn om_space(&self) -> WeightedSeqSpace {
        WeightedSeqSpace::new(1.0, self.weights.gamma.clone()).expect("besov weights are positive")
    }

    /// The ambient space `ℓ¹_δ` carrying full measure.
    pub fn ambient_space(&self) -> WeightedSeqSpace {
        WeightedSeqSpace::new(1.0, self.weights.delta.clone()).expect("besov weights are positive")
    }

    pub fn log_density(&self, u: &[f64]) -> f64 {
        u.iter()
            .zip(&self.weights.gamma)
            .map(|(x, g)| -(x.abs() / g) - (2.0 * g).ln())
            .sum()
    }

    /// Analytic bound on the `ℓ¹_γ` norm tail beyond the truncation for a
    /// sequence with `|u_k| ≤ c k^{-a}`: `Σ_{k>K} c k^{-a}/γ_k`, bounded by the
    /// integral `c ∫_K^∞ x^{-(a + 1 − 1/τ)} dx`. Infinite when the exponent is
    /// at most one.
    pub fn om_tail_bound(&self, c: f64, decay: f64) -> f64 {
        let exponent = decay + 1.0 - 1.0 / self.weights.tau;
        if exponent <= 1.0 {
            return f64::INFINITY;
        }
        let k = self.dim() as f64;
        c.abs() * k.powf(1.0 - exponent) / (exponent - 1.0)
    }

    /// `Σ_{k≤K} E|u_k|/δ_k = Σ_{k≤K} γ_k/δ_k = Σ_{k≤K} k^{-1-η}`.
    pub fn expected_ambient_norm(&self) -> f64 {
        self.weights.gamma.iter().zip(&self.weights.delta).map(|(g, d)| g / d).sum()
    }
}

/// Mass of `(lo, hi)` under the Laplace law with the given scale.
pub(crate) fn laplace_interval_mass(scale: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let (a, b) = (lo / scale, hi / scale);
    if a >= 0.0 {
        // ½e^{-a}(1 − e^{-(b−a)})
        -0.5 * (-a).exp() * (-(b - a)).exp_m1()
    } else if b <= 0.0 {
        -0.5 * b.exp() * (-(b - a)).exp_m1()
    } else {
        -0.5 * a.exp_m1() - 0.5 * (-b).exp_m1()
    }
}
