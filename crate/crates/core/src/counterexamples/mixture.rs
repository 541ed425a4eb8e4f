use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::Density1D;
use crate::numerics::local_maxima_1d;

use super::kl::kl_divergence_1d;

/// Two-component Gaussian mixture with weights `(1 ± t)/2` at `±r`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixtureFamily {
    pub t: f64,
    pub r: f64,
}

impl MixtureFamily {
    pub fn new(t: f64, r: f64) -> Result<Self> {
        if !(t.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("mixture weight t must satisfy |t| < 1, got {t}")));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidParameter(format!("separation r must be positive, got {r}")));
        }
        Ok(Self { t, r })
    }

    fn components(&self, x: f64) -> (f64, f64) {
        ((-0.5 * (x - self.r).powi(2)).exp(), (-0.5 * (x + self.r).powi(2)).exp())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let (a, b) = self.components(x);
        ((1.0 + self.t) * a + (1.0 - self.t) * b) / (2.0 * (2.0 * PI).sqrt())
    }

    pub fn pdf_derivative(&self, x: f64) -> f64 {
        let (a, b) = self.components(x);
        (-(1.0 + self.t) * (x - self.r) * a - (1.0 - self.t) * (x + self.r) * b) / (2.0 * (2.0 * PI).sqrt())
    }

    /// `log(ρ^{(t)}/ρ^{(−t)})` written as `log1p(s) − log1p(−s)` with
    /// `s = t·tanh(r x)`.
    pub fn log_ratio_to_mirror(&self, x: f64) -> f64 {
        let s = self.t * (self.r * x).tanh();
        s.ln_1p() - (-s).ln_1p()
    }

    fn breakpoints(&self) -> Vec<f64> {
        let w = self.r + 40.0;
        vec![-w, -self.r - 6.0, -self.r, -self.r + 6.0, 0.0, self.r - 6.0, self.r, self.r + 6.0, w]
            .into_iter()
            .fold(Vec::new(), |mut acc, x| {
                if acc.last().map_or(true, |&l| x > l) {
                    acc.push(x);
                }
                acc
            })
    }
}

impl Density1D for MixtureFamily {
    fn density(&self, x: f64) -> f64 {
        self.pdf(x)
    }

    fn support(&self) -> Vec<(f64, f64)> {
        let w = self.r + 40.0;
        vec![(-w, w)]
    }

    fn breakpoints(&self) -> Vec<f64> {
        MixtureFamily::breakpoints(self)
    }

    fn name(&self) -> String {
        format!("mixture(t={}, r={})", self.t, self.r)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MixtureModes {
    pub mode: f64,
    pub local_maximizers: Vec<(f64, f64)>,
    pub warning: Option<String>,
}

/// Global argmax and all local maximisers of `ρ^{(t)}`.
pub fn mixture_modes(t: f64, r: f64) -> Result<MixtureModes> {
    let fam = MixtureFamily::new(t, r)?;
    let warning = (r < 3.0).then(|| format!("separation r = {r} < 3: the two bumps interact"));
    let span = r + 10.0;
    let grid = ((2.0 * span) * 400.0) as usize;
    let maxima = local_maxima_1d(&|x| fam.pdf(x), &|x| fam.pdf_derivative(x), -span, span, grid);
    let mode = maxima
        .iter()
        .fold((0.0, f64::NEG_INFINITY), |b, &m| if m.1 > b.1 { m } else { b })
        .0;
    Ok(MixtureModes { mode, local_maximizers: maxima, warning })
}

/// `KL(μ^{(t)} ‖ μ^{(−t)})` by quadrature.
pub fn mixture_kl(t: f64, r: f64, abs_tol: f64) -> Result<f64> {
    let fam = MixtureFamily::new(t, r)?;
    kl_divergence_1d(&|x| fam.pdf(x), &|x| fam.log_ratio_to_mirror(x), &fam.breakpoints(), abs_tol)
}
