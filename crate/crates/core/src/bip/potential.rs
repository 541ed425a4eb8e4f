use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::rng_for;
use crate::spaces::{SpectralOperator, DEFAULT_RANK_TOL};

type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Relative tolerance of the finite-difference gradient check.
pub const GRADIENT_CHECK_TOL: f64 = 1e-6;

/// Real-valued potential `Φ` on `ℝ^K`, optionally with a gradient, a
/// Lipschitz bound for the gradient and a lower bound.
#[derive(Clone)]
pub struct Potential {
    name: String,
    dim: usize,
    eval: EvalFn,
    grad: Option<GradFn>,
    lipschitz_grad: Option<f64>,
    lower_bound: Option<f64>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("has_gradient", &self.grad.is_some())
            .field("lipschitz_grad", &self.lipschitz_grad)
            .field("lower_bound", &self.lower_bound)
            .finish()
    }
}

/// Central-difference gradient with step `1e-5·max(1, |x_k|)`.
pub fn finite_difference_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = 1e-5 * x[k].abs().max(1.0);
            y[k] = x[k] + h;
            let fp = f(&y);
            y[k] = x[k] - h;
            let fm = f(&y);
            y[k] = x[k];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn rel_gradient_error(g: &[f64], fd: &[f64]) -> f64 {
    let diff = g.iter().zip(fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
    diff / scale
}

impl Potential {
    /// Builds a potential. A supplied gradient is compared with central
    /// differences at five seeded random points and rejected when the
    /// relative error exceeds [`GRADIENT_CHECK_TOL`].
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: Option<GradFn>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("potential dimension must be at least 1".into()));
        }
        let p = Self { name: name.into(), dim, eval: Arc::new(eval), grad, lipschitz_grad: None, lower_bound: None };
        if p.grad.is_some() {
            let err = p.gradient_check(5, 0x6AD)?;
            if err > GRADIENT_CHECK_TOL {
                return Err(Error::InvalidInput(format!(
                    "potential '{}': gradient disagrees with finite differences (relative error {err:.3e})",
                    p.name
                )));
            }
        }
        Ok(p)
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(dim, 0.0)
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self {
            name: format!("constant({c})"),
            dim,
            eval: Arc::new(move |_| c),
            grad: Some(Arc::new(move |x: &[f64]| vec![0.0; x.len()])),
            lipschitz_grad: Some(0.0),
            lower_bound: Some(c),
        }
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz_grad = Some(l);
        self
    }

    pub fn with_lower_bound(mut self, m: f64) -> Self {
        self.lower_bound = Some(m);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lipschitz_grad(&self) -> Option<f64> {
        self.lipschitz_grad
    }

    pub fn lower_bound(&self) -> Option<f64> {
        self.lower_bound
    }

    pub fn has_gradient(&self) -> bool {
        self.grad.is_some()
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        (self.eval)(u)
    }

    /// Supplied gradient, or central differences when none was given.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        match &self.grad {
            Some(g) => g(u),
            None => finite_difference_gradient(&|x| (self.eval)(x), u),
        }
    }

    /// Largest relative gradient error over `points` seeded standard normal
    /// points.
    pub fn gradient_check(&self, points: usize, seed: u64) -> Result<f64> {
        let g = self.grad.as_ref().ok_or_else(|| Error::InvalidInput("potential has no gradient".into()))?;
        let mut rng = rng_for(seed, &[0x6AD]);
        let mut worst = 0.0f64;
        for _ in 0..points {
            let x: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
            let fd = finite_difference_gradient(&|y| (self.eval)(y), &x);
            worst = worst.max(rel_gradient_error(&g(&x), &fd));
        }
        Ok(worst)
    }

    /// `c·Φ`.
    pub fn scaled(&self, c: f64) -> Self {
        let (e, g) = (self.eval.clone(), self.grad.clone());
        Self {
            name: format!("{}*{}", c, self.name),
            dim: self.dim,
            eval: Arc::new(move |u| c * e(u)),
            grad: g.map(|g| Arc::new(move |u: &[f64]| g(u).into_iter().map(|x| c * x).collect()) as GradFn),
            lipschitz_grad: self.lipschitz_grad.map(|l| l * c.abs()),
            lower_bound: self.lower_bound.filter(|_| c >= 0.0).map(|m| c * m),
        }
    }

    /// `Φ ∘ P_n`, keeping the first `n` coordinates.
    pub fn compose_projection(&self, n: usize) -> Self {
        let (e, g, dim) = (self.eval.clone(), self.grad.clone(), self.dim);
        let cut = move |u: &[f64]| -> Vec<f64> { u.iter().enumerate().map(|(k, x)| if k < n { *x } else { 0.0 }).collect() };
        let cut2 = cut.clone();
        Self {
            name: format!("{}∘P_{n}", self.name),
            dim,
            eval: Arc::new(move |u| e(&cut(u))),
            grad: g.map(|g| {
                Arc::new(move |u: &[f64]| {
                    let mut gr = g(&cut2(u));
                    gr.iter_mut().skip(n).for_each(|x| *x = 0.0);
                    gr
                }) as GradFn
            }),
            lipschitz_grad: self.lipschitz_grad,
            lower_bound: self.lower_bound,
        }
    }
}

/// Linear observation `y = O u + η`, `η ~ N(0, C_η)`.
#[derive(Clone, Debug)]
pub struct LinearObservation {
    matrix: DMatrix<f64>,
    noise_cov: SpectralOperator,
    data: Vec<f64>,
}

/// JSON form: `matrix` given as rows, `noise_cov` as the diagonal of `C_η`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSpec {
    pub matrix: Vec<Vec<f64>>,
    pub noise_cov: Vec<f64>,
    pub data: Vec<f64>,
}

impl LinearObservation {
    pub fn new(matrix: DMatrix<f64>, noise_cov: SpectralOperator, data: Vec<f64>) -> Result<Self> {
        let j = matrix.nrows();
        if j == 0 || matrix.ncols() == 0 {
            return Err(Error::InvalidInput("observation matrix must be non-empty".into()));
        }
        check_dim(j, noise_cov.dim())?;
        check_dim(j, data.len())?;
        if noise_cov.eigenvalues().iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidInput("noise covariance must be positive definite".into()));
        }
        if matrix.iter().chain(&data).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("observation matrix and data must be finite".into()));
        }
        Ok(Self { matrix, noise_cov, data })
    }

    /// Unit noise covariance.
    pub fn with_identity_noise(matrix: DMatrix<f64>, data: Vec<f64>) -> Result<Self> {
        let j = matrix.nrows();
        Self::new(matrix, SpectralOperator::identity(j), data)
    }

    pub fn from_spec(spec: &ObservationSpec) -> Result<Self> {
        let j = spec.matrix.len();
        let k = spec.matrix.first().map_or(0, |r| r.len());
        if spec.matrix.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidInput("observation matrix rows differ in length".into()));
        }
        let m = DMatrix::from_fn(j, k, |a, b| spec.matrix[a][b]);
        Self::new(m, SpectralOperator::diagonal(spec.noise_cov.clone())?, spec.data.clone())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn noise_cov(&self) -> &SpectralOperator {
        &self.noise_cov
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn obs_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.matrix.clone(), self.noise_cov.clone(), data)
    }

    pub fn with_matrix(&self, matrix: DMatrix<f64>) -> Result<Self> {
        Self::new(matrix, self.noise_cov.clone(), self.data.clone())
    }

    /// `C_η` multiplied by `c`.
    pub fn with_noise_scale(&self, c: f64) -> Result<Self> {
        Self::new(self.matrix.clone(), self.noise_cov.scaled(c)?, self.data.clone())
    }

    /// Matrix with the columns beyond `n` zeroed, i.e. `O ∘ P_n`.
    pub fn projected(&self, n: usize) -> Result<Self> {
        let mut m = self.matrix.clone();
        for c in n.min(m.ncols())..m.ncols() {
            m.column_mut(c).fill(0.0);
        }
        self.with_matrix(m)
    }

    /// `W = C_η^{-1/2}` as a dense matrix.
    pub fn whitening(&self) -> DMatrix<f64> {
        let j = self.obs_dim();
        let cols: Vec<DVector<f64>> = (0..j)
            .map(|c| {
                let mut e = vec![0.0; j];
                e[c] = 1.0;
                DVector::from_vec(self.noise_cov.sqrt_pinv_apply(&e, DEFAULT_RANK_TOL).expect("dimension checked"))
            })
            .collect();
        DMatrix::from_columns(&cols)
    }

    /// `Oᵀ C_η^{-1} O`.
    pub fn normal_matrix(&self) -> DMatrix<f64> {
        let wo = self.whitening() * &self.matrix;
        wo.transpose() * wo
    }
}

/// Largest eigenvalue of a symmetric PSD matrix by `iters` power iterations
/// from the all-ones vector.
pub fn power_iteration(a: &DMatrix<f64>, iters: usize) -> f64 {
    let n = a.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = a * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w);
        v = w / norm;
    }
    lambda.max((a * &v).norm())
}

/// `Φ(u) = ½‖C_η^{-1/2}(y − O u)‖²` with gradient `−Oᵀ C_η^{-1}(y − O u)`,
/// lower bound 0 and Lipschitz estimate from 10 power iterations.
pub fn quadratic_potential(obs: &LinearObservation) -> Result<Potential> {
    let w = obs.whitening();
    let wo = &w * obs.matrix();
    let wy = &w * DVector::from_column_slice(obs.data());
    let (wo2, wy2) = (wo.clone(), wy.clone());
    let lip = power_iteration(&(wo.transpose() * &wo), 10);
    let eval = move |u: &[f64]| -> f64 {
        let r = &wy - &wo * DVector::from_column_slice(u);
        0.5 * r.norm_squared()
    };
    let grad: GradFn = Arc::new(move |u: &[f64]| {
        let r = &wy2 - &wo2 * DVector::from_column_slice(u);
        (-(wo2.transpose() * r)).as_slice().to_vec()
    });
    Ok(Potential::new("quadratic_misfit", obs.state_dim(), eval, Some(grad))?
        .with_lipschitz(lip)
        .with_lower_bound(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_misfit() {
        let obs = LinearObservation::with_identity_noise(DMatrix::from_element(1, 1, 1.0), vec![2.0]).unwrap();
        let p = quadratic_potential(&obs).unwrap();
        assert_abs_diff_eq!(p.eval(&[0.0]), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.eval(&[2.0]), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.gradient(&[2.0])[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn wrong_gradient_is_rejected() {
        let bad: GradFn = Arc::new(|u: &[f64]| u.iter().map(|x| 3.0 * x).collect());
        assert!(Potential::new("bad", 2, |u| u.iter().map(|x| x * x).sum(), Some(bad)).is_err());
    }

    #[test]
    fn projection_zeroes_tail() {
        let obs = LinearObservation::with_identity_noise(DMatrix::from_row_slice(1, 3, &[1.0, 0.5, 1.0 / 3.0]), vec![1.0])
            .unwrap();
        let p = quadratic_potential(&obs).unwrap().compose_projection(1);
        assert_abs_diff_eq!(p.eval(&[1.0, 5.0, 7.0]), 0.0, epsilon = 1e-15);
        assert_eq!(p.gradient(&[0.0, 1.0, 1.0])[1..], [0.0, 0.0]);
    }

    #[test]
    fn power_iteration_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 2.0]));
        let l = power_iteration(&a, 200);
        assert_abs_diff_eq!(l, 4.0, epsilon = 1e-8);
        assert!(power_iteration(&a, 10) <= 4.0 + 1e-12);
    }
}
