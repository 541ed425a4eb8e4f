use crate::error::{check_dim, Error, Result};
use crate::spaces::{SpectralOperator, DEFAULT_RANK_TOL};

/// `N(m, C)` on `ℝ^K` with `C` stored spectrally; `C` may be degenerate.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMeasure {
    mean: Vec<f64>,
    covariance: SpectralOperator,
}

impl GaussianMeasure {
    pub fn new(mean: Vec<f64>, covariance: SpectralOperator) -> Result<Self> {
        check_dim(covariance.dim(), mean.len())?;
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("mean must be finite".into()));
        }
        Ok(Self { mean, covariance })
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], covariance: SpectralOperator::identity(dim) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &SpectralOperator {
        &self.covariance
    }

    pub fn is_degenerate(&self) -> bool {
        self.covariance.rank(DEFAULT_RANK_TOL) < self.dim()
    }

    /// Log-density with respect to Lebesgue measure; only meaningful for a
    /// non-degenerate covariance.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let c = self.covariance.to_eigen(&diff);
        let mut q = 0.0;
        let mut log_det = 0.0;
        for (ci, &l) in c.iter().zip(self.covariance.eigenvalues()) {
            q += ci * ci / l;
            log_det += (2.0 * std::f64::consts::PI * l).ln();
        }
        -0.5 * q - 0.5 * log_det
    }
}
