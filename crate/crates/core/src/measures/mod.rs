//! Measures on truncated sequence spaces and on the line, their JSON
//! descriptions, sampling and small-ball masses.

mod ball;
mod besov;
mod density;
mod gaussian;

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use ball::{
    ball_ratio_curve, geometric_radii, open_vs_closed_check, BallKind, BallMassOptions, BallRatioEstimate, MassEstimate, MassMethod,
    OpenClosedReport,
};
pub use besov::{besov_weights, BesovMeasure, BesovWeights};
pub(crate) use besov::laplace_interval_mass;
pub use density::{
    ball_mass_1d, interval_mass, log_ball_mass_1d, log_interval_mass, quadrature_mass, validate_density, CustomDensity,
    Density1D, Normal1D, Uniform, DEFAULT_QUAD_TOL,
};
pub(crate) use density::std_normal_interval;
pub use gaussian::GaussianMeasure;

use crate::counterexamples::{CrossesMeasure, LiminfOnlyMeasure, MixtureFamily, OmNotStrongMeasure, SpikeFamily};
use crate::error::{Error, Result};
use crate::numerics::rng_for;
use crate::spaces::{SpectralOperator, WeightedSeqSpace};

/// A one-dimensional density together with the name and parameters it was
/// built from.
#[derive(Clone, Debug)]
pub struct RegisteredDensity {
    name: String,
    params: Value,
    density: Arc<dyn Density1D>,
}

impl RegisteredDensity {
    /// Builds one of the named examples: `uniform {lo, hi}`,
    /// `normal {mean, variance}`, `mixture {t, r = 5}`, `spike {n}` (omit `n`
    /// for the limit), `liminf_only {depth = 40}`, `om_not_strong {levels = 30}`.
    pub fn from_name(name: &str, params: &Value) -> Result<Self> {
        let num = |key: &str, default: Option<f64>| -> Result<f64> {
            match params.get(key) {
                Some(v) => v
                    .as_f64()
                    .ok_or_else(|| Error::InvalidInput(format!("density1d '{name}': '{key}' must be a number"))),
                None => default.ok_or_else(|| Error::InvalidInput(format!("density1d '{name}': missing '{key}'"))),
            }
        };
        let allowed: &[&str] = match name {
            "uniform" => &["lo", "hi"],
            "normal" => &["mean", "variance"],
            "mixture" => &["t", "r"],
            "spike" => &["n"],
            "liminf_only" => &["depth"],
            "om_not_strong" => &["levels"],
            other => return Err(Error::InvalidInput(format!("unknown density1d name '{other}'"))),
        };
        if let Some(obj) = params.as_object() {
            if let Some(bad) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(Error::InvalidInput(format!("density1d '{name}': unknown parameter '{bad}'")));
            }
        } else if !params.is_null() {
            return Err(Error::InvalidInput(format!("density1d '{name}': params must be an object")));
        }
        let density: Arc<dyn Density1D> = match name {
            "uniform" => Arc::new(Uniform::new(num("lo", None)?, num("hi", None)?)?),
            "normal" => Arc::new(Normal1D::new(num("mean", Some(0.0))?, num("variance", Some(1.0))?)?),
            "mixture" => Arc::new(MixtureFamily::new(num("t", None)?, num("r", Some(5.0))?)?),
            "spike" => {
                let n = match params.get("n") {
                    None | Some(Value::Null) => None,
                    Some(v) => Some(v.as_u64().ok_or_else(|| Error::InvalidInput("spike: 'n' must be a positive integer".into()))?),
                };
                Arc::new(SpikeFamily::new(n)?)
            }
            "liminf_only" => Arc::new(LiminfOnlyMeasure::new(num("depth", Some(40.0))? as usize)?),
            "om_not_strong" => Arc::new(OmNotStrongMeasure::new(num("levels", Some(30.0))? as usize)?),
            _ => unreachable!(),
        };
        Ok(Self { name: name.into(), params: if params.is_null() { Value::Object(Default::default()) } else { params.clone() }, density })
    }

    pub fn custom(density: CustomDensity) -> Self {
        Self { name: density.name(), params: Value::Null, density: Arc::new(density) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &Value {
        &self.params
    }

    pub fn shared(&self) -> Arc<dyn Density1D> {
        self.density.clone()
    }

    pub fn density(&self) -> &dyn Density1D {
        self.density.as_ref()
    }

    pub fn is_custom(&self) -> bool {
        self.params.is_null()
    }
}

#[derive(Clone, Debug)]
pub enum Measure {
    Gaussian(GaussianMeasure),
    Besov(BesovMeasure),
    Density1D(RegisteredDensity),
    Crosses(CrossesMeasure),
}

/// JSON description of a measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureSpec {
    Gaussian {
        mean: Vec<f64>,
        eigenvalues: Vec<f64>,
        /// Optional orthonormal eigenbasis, one column per eigenvalue, given
        /// as rows.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        basis: Option<Vec<Vec<f64>>>,
    },
    Besov1 {
        s: f64,
        d: u32,
        eta: f64,
        dim: usize,
    },
    Density1d {
        name: String,
        #[serde(default)]
        params: Value,
    },
    Crosses {},
}

impl Measure {
    pub fn from_spec(spec: &MeasureSpec) -> Result<Self> {
        Ok(match spec {
            MeasureSpec::Gaussian { mean, eigenvalues, basis } => {
                let cov = match basis {
                    None => SpectralOperator::diagonal(eigenvalues.clone())?,
                    Some(rows) => {
                        let k = eigenvalues.len();
                        if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                            return Err(Error::InvalidInput(format!("gaussian basis must be {k}x{k}")));
                        }
                        let m = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
                        SpectralOperator::with_basis(eigenvalues.clone(), m)?
                    }
                };
                Measure::Gaussian(GaussianMeasure::new(mean.clone(), cov)?)
            }
            MeasureSpec::Besov1 { s, d, eta, dim } => Measure::Besov(BesovMeasure::new(*s, *d, *eta, *dim)?),
            MeasureSpec::Density1d { name, params } => Measure::Density1D(RegisteredDensity::from_name(name, params)?),
            MeasureSpec::Crosses {} => Measure::Crosses(CrossesMeasure::new()),
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: MeasureSpec =
            serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("measure JSON: {e}")))?;
        Self::from_spec(&spec)
    }

    pub fn to_spec(&self) -> Result<MeasureSpec> {
        Ok(match self {
            Measure::Gaussian(g) => {
                let cov = g.covariance();
                let basis = cov.basis().map(|b| (0..b.nrows()).map(|i| b.row(i).iter().cloned().collect()).collect());
                MeasureSpec::Gaussian { mean: g.mean().to_vec(), eigenvalues: cov.eigenvalues().to_vec(), basis }
            }
            Measure::Besov(b) => MeasureSpec::Besov1 { s: b.s(), d: b.d(), eta: b.eta(), dim: b.dim() },
            Measure::Density1D(d) if d.is_custom() => {
                return Err(Error::InvalidInput(format!("custom density '{}' has no JSON form", d.name())))
            }
            Measure::Density1D(d) => MeasureSpec::Density1d { name: d.name.clone(), params: d.params.clone() },
            Measure::Crosses(_) => MeasureSpec::Crosses {},
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Measure::Gaussian(g) => g.dim(),
            Measure::Besov(b) => b.dim(),
            Measure::Density1D(_) => 1,
            Measure::Crosses(_) => 2,
        }
    }

    /// Unweighted Euclidean norm of the right dimension.
    pub fn default_norm(&self) -> WeightedSeqSpace {
        WeightedSeqSpace::euclidean(self.dim())
    }

    pub fn name(&self) -> String {
        match self {
            Measure::Gaussian(g) => format!("gaussian(dim={})", g.dim()),
            Measure::Besov(b) => format!("besov1(s={}, d={}, eta={}, dim={})", b.s(), b.d(), b.eta(), b.dim()),
            Measure::Density1D(d) => d.density().name(),
            Measure::Crosses(_) => "crosses".into(),
        }
    }

    /// `n` i.i.d. draws, one per row. Gaussian: `m + Σ σ_k ξ_k e_k`; Besov:
    /// coordinate `k` Laplace with scale `γ_k`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::InvalidInput("sample count must be at least 1".into()));
        }
        let mut rng = rng_for(seed, &[0x5A4D]);
        match self {
            Measure::Gaussian(g) => {
                let cov = g.covariance();
                let sd: Vec<f64> = cov.eigenvalues().iter().map(|l| l.sqrt()).collect();
                Ok((0..n)
                    .map(|_| {
                        let c: Vec<f64> = sd.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect();
                        cov.from_eigen(&c).iter().zip(g.mean()).map(|(x, m)| x + m).collect()
                    })
                    .collect())
            }
            Measure::Besov(b) => Ok((0..n)
                .map(|_| {
                    b.gamma()
                        .iter()
                        .map(|g| {
                            let e: f64 = Exp1.sample(&mut rng);
                            if rng.random_bool(0.5) {
                                g * e
                            } else {
                                -g * e
                            }
                        })
                        .collect()
                })
                .collect()),
            _ => Err(Error::InvalidInput(format!("sampling is not available for {}", self.name()))),
        }
    }
}
