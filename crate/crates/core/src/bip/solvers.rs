use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::potential::{power_iteration, LinearObservation, Potential};
use crate::error::{check_dim, Error, Result};
use crate::measures::{BesovMeasure, GaussianMeasure};
use crate::spaces::DEFAULT_RANK_TOL;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MapSolution {
    pub point: Vec<f64>,
    pub objective: f64,
    pub optimality_residual: f64,
    pub iterations: usize,
    pub solver: String,
    pub converged: bool,
    pub flags: Vec<String>,
}

/// Range coordinates of a Gaussian prior: `u = m + A v` with the columns of
/// `A` equal to `√λ_k q_k` over the non-null modes.
fn range_factor(prior: &GaussianMeasure) -> DMatrix<f64> {
    let cov = prior.covariance();
    let dim = prior.dim();
    let cols: Vec<DVector<f64>> = (0..dim)
        .filter(|&k| !cov.is_null_mode(k, DEFAULT_RANK_TOL))
        .map(|k| {
            let mut e = vec![0.0; dim];
            e[k] = cov.eigenvalues()[k].sqrt();
            DVector::from_vec(cov.from_eigen(&e))
        })
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(dim, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Minimiser of `½‖C_η^{-1/2}(y − O u)‖² + ½‖C^{†/2}(u − m)‖²` over
/// `m + range C^{1/2}`, from the normal equations `(BᵀB + I) v = Bᵀ W (y − O m)`
/// with `B = W O A` and `u = m + A v`.
pub fn map_solve_gaussian_linear(prior: &GaussianMeasure, obs: &LinearObservation) -> Result<MapSolution> {
    check_dim(prior.dim(), obs.state_dim())?;
    let a = range_factor(prior);
    let m = DVector::from_column_slice(prior.mean());
    let w = obs.whitening();
    let y = DVector::from_column_slice(obs.data());
    let r = a.ncols();
    let mut flags = Vec::new();
    let (v, residual) = if r == 0 {
        (DVector::zeros(0), 0.0)
    } else {
        let b = &w * obs.matrix() * &a;
        let h = b.transpose() * &b + DMatrix::identity(r, r);
        let rhs = b.transpose() * (&w * (&y - obs.matrix() * &m));
        let v = match h.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                flags.push("reduced system not positive definite; minimum-norm least-squares solution".into());
                h.clone()
                    .svd(true, true)
                    .solve(&rhs, 1e-12)
                    .map_err(|e| Error::Numerical(format!("reduced system: {e}")))?
            }
        };
        let res = (&h * &v - &rhs).norm();
        (v, res)
    };
    let u = if r == 0 { m.clone() } else { &m + &a * &v };
    let misfit = 0.5 * (&w * (&y - obs.matrix() * &u)).norm_squared();
    Ok(MapSolution {
        point: u.as_slice().to_vec(),
        objective: misfit + 0.5 * v.norm_squared(),
        optimality_residual: residual,
        iterations: 1,
        solver: "gaussian-normal-equations".into(),
        converged: true,
        flags,
    })
}

/// Posterior mean `m + C Oᵀ (O C Oᵀ + C_η)^{-1}(y − O m)` by Gaussian
/// conjugacy.
pub fn gaussian_posterior_mean(prior: &GaussianMeasure, obs: &LinearObservation) -> Result<Vec<f64>> {
    check_dim(prior.dim(), obs.state_dim())?;
    let c = prior.covariance().to_dense();
    let o = obs.matrix();
    let s = o * &c * o.transpose() + obs.noise_cov().to_dense();
    let m = DVector::from_column_slice(prior.mean());
    let innov = DVector::from_column_slice(obs.data()) - o * &m;
    let z = s.cholesky().ok_or_else(|| Error::Numerical("innovation covariance not SPD".into()))?.solve(&innov);
    Ok((m + c * o.transpose() * z).as_slice().to_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FistaOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Starting point; zero when absent.
    pub x0: Option<Vec<f64>>,
}

impl Default for FistaOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 100_000, x0: None }
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `max_k dist(−g_k, ∂(|·|/γ_k)(u_k))`.
pub fn kkt_residual(grad: &[f64], u: &[f64], gamma: &[f64]) -> f64 {
    grad.iter()
        .zip(u)
        .zip(gamma)
        .map(|((g, x), w)| {
            let lam = 1.0 / w;
            if *x > 0.0 {
                (g + lam).abs()
            } else if *x < 0.0 {
                (g - lam).abs()
            } else {
                (g.abs() - lam).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn weighted_l1(u: &[f64], gamma: &[f64]) -> f64 {
    u.iter().zip(gamma).map(|(x, g)| x.abs() / g).sum()
}

/// Minimises `Φ(u) + Σ_k |u_k|/γ_k` by FISTA with backtracking and
/// function-value restart. The step starts at `1/L̂` with `L̂` the potential's
/// Lipschitz bound (1 when unknown).
pub fn map_solve_weighted_l1(gamma: &[f64], pot: &Potential, opts: &FistaOptions) -> Result<MapSolution> {
    let k = gamma.len();
    check_dim(k, pot.dim())?;
    if gamma.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::InvalidParameter("l1 weights must be positive".into()));
    }
    let objective = |u: &[f64]| pot.eval(u) + weighted_l1(u, gamma);
    let mut x = match &opts.x0 {
        Some(x0) => {
            check_dim(k, x0.len())?;
            x0.clone()
        }
        None => vec![0.0; k],
    };
    let mut lip = pot.lipschitz_grad().filter(|l| *l > 0.0).unwrap_or(1.0);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut fx = objective(&x);
    let mut gx = pot.gradient(&x);
    let mut residual = kkt_residual(&gx, &x, gamma);
    let mut iterations = 0;
    while residual >= opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let gy = pot.gradient(&y);
        let fy = pot.eval(&y);
        let x_new = loop {
            let step = 1.0 / lip;
            let cand: Vec<f64> =
                (0..k).map(|i| soft_threshold(y[i] - step * gy[i], step / gamma[i])).collect();
            let d: Vec<f64> = cand.iter().zip(&y).map(|(a, b)| a - b).collect();
            let model = fy + gy.iter().zip(&d).map(|(g, di)| g * di).sum::<f64>()
                + 0.5 * lip * d.iter().map(|v| v * v).sum::<f64>();
            let fc = pot.eval(&cand);
            if fc <= model + 1e-12 * fc.abs().max(1.0) || lip > 1e300 {
                break cand;
            }
            lip *= 2.0;
        };
        let f_new = objective(&x_new);
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if f_new > fx {
            // restart momentum
            t = 1.0;
            y = x_new.clone();
        } else {
            let beta = (t - 1.0) / t_new;
            y = (0..k).map(|i| x_new[i] + beta * (x_new[i] - x[i])).collect();
            t = t_new;
        }
        x = x_new;
        fx = f_new;
        gx = pot.gradient(&x);
        residual = kkt_residual(&gx, &x, gamma);
    }
    let converged = residual < opts.tol;
    let mut flags = Vec::new();
    if !converged {
        flags.push(format!("not converged: KKT residual {residual:.3e} after {iterations} iterations"));
    }
    Ok(MapSolution {
        point: x,
        objective: fx,
        optimality_residual: residual,
        iterations,
        solver: "fista".into(),
        converged,
        flags,
    })
}

/// MAP point for a Besov-1 prior: [`map_solve_weighted_l1`] with the
/// measure's scales `γ_k`.
pub fn map_solve_besov(prior: &BesovMeasure, pot: &Potential, opts: &FistaOptions) -> Result<MapSolution> {
    map_solve_weighted_l1(prior.gamma(), pot, opts)
}

/// Cyclic coordinate descent for
/// `½‖C_η^{-1/2}(y − O u)‖² + Σ_k |u_k|/γ_k`, stopped when a full sweep moves
/// no coordinate by more than `tol` or after `max_sweeps`.
pub fn coordinate_descent_weighted_lasso(
    obs: &LinearObservation,
    gamma: &[f64],
    tol: f64,
    max_sweeps: usize,
) -> Result<Vec<f64>> {
    check_dim(obs.state_dim(), gamma.len())?;
    let w = obs.whitening();
    let wo = &w * obs.matrix();
    let q = wo.transpose() * &wo;
    let b = wo.transpose() * (&w * DVector::from_column_slice(obs.data()));
    let k = gamma.len();
    let mut u = vec![0.0; k];
    for _ in 0..max_sweeps {
        let mut moved = 0.0f64;
        for i in 0..k {
            let qii = q[(i, i)];
            let new = if qii > 0.0 {
                let rho = b[i] - (0..k).filter(|&j| j != i).map(|j| q[(i, j)] * u[j]).sum::<f64>();
                soft_threshold(rho, 1.0 / gamma[i]) / qii
            } else {
                0.0
            };
            moved = moved.max((new - u[i]).abs());
            u[i] = new;
        }
        if moved <= tol {
            return Ok(u);
        }
    }
    Err(Error::Numerical(format!("coordinate descent did not settle in {max_sweeps} sweeps")))
}

/// Besov MAP for a linear observation: FISTA from the quadratic misfit, with
/// the step seeded by 10 power iterations on `Oᵀ C_η^{-1} O`, cross-checked
/// against coordinate descent. A second minimiser more than `1e-4` away with
/// objective within `1e-10` is flagged as non-uniqueness.
pub fn map_solve_besov_linear(gamma: &[f64], obs: &LinearObservation, opts: &FistaOptions) -> Result<MapSolution> {
    let lip = power_iteration(&obs.normal_matrix(), 10);
    let pot = super::potential::quadratic_potential(obs)?.with_lipschitz(lip);
    let mut sol = map_solve_weighted_l1(gamma, &pot, opts)?;
    if let Ok(cd) = coordinate_descent_weighted_lasso(obs, gamma, 1e-13, 200_000) {
        let f_cd = pot.eval(&cd) + weighted_l1(&cd, gamma);
        let dist = cd.iter().zip(&sol.point).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist > 1e-4 && (f_cd - sol.objective).abs() <= 1e-10 {
            sol.flags.push(format!("non-unique minimiser: coordinate descent lands {dist:.3e} away with equal objective"));
        }
    }
    Ok(sol)
}
