use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::potential::{quadratic_potential, LinearObservation, ObservationSpec, Potential};
use super::solvers::{map_solve_besov_linear, map_solve_gaussian_linear, FistaOptions, MapSolution};
use crate::error::{check_dim, Error, Result};
use crate::gamma::{
    besov_equicoercivity_probe, besov_recovery_sequence, continuous_convergence_probe, gaussian_equicoercivity_probe,
    gaussian_recovery_sequence, mode_convergence_check, ClusterOptions, ContinuityOptions, FunctionalSequence,
    GammaReport, ModeConvergenceReport,
};
use crate::measures::{BesovMeasure, GaussianMeasure, Measure, MeasureSpec};
use crate::numerics::{fit_line, rng_for};
use crate::om::{BesovOm, GaussianOm, OmFunctional, PosteriorOm};
use crate::report::{num, vec_cell, CheckVerdict, Table};
use crate::spaces::{SpectralOperator, DEFAULT_RANK_TOL};

#[derive(Clone, Debug)]
pub enum Prior {
    Gaussian(GaussianMeasure),
    Besov(BesovMeasure),
}

impl Prior {
    pub fn dim(&self) -> usize {
        match self {
            Prior::Gaussian(g) => g.dim(),
            Prior::Besov(b) => b.dim(),
        }
    }

    pub fn om(&self) -> Arc<dyn OmFunctional> {
        match self {
            Prior::Gaussian(g) => Arc::new(GaussianOm::new(g.clone())),
            Prior::Besov(b) => Arc::new(BesovOm::new(b.clone())),
        }
    }
}

/// Linear observation with a Gaussian or Besov-1 prior.
#[derive(Clone, Debug)]
pub struct LinearProblem {
    pub prior: Prior,
    pub obs: LinearObservation,
}

/// JSON form `{"prior": <measure>, "observation": {...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub prior: MeasureSpec,
    pub observation: ObservationSpec,
}

impl LinearProblem {
    pub fn new(prior: Prior, obs: LinearObservation) -> Result<Self> {
        check_dim(prior.dim(), obs.state_dim())?;
        Ok(Self { prior, obs })
    }

    pub fn from_spec(spec: &ProblemSpec) -> Result<Self> {
        let prior = match Measure::from_spec(&spec.prior)? {
            Measure::Gaussian(g) => Prior::Gaussian(g),
            Measure::Besov(b) => Prior::Besov(b),
            other => return Err(Error::InvalidInput(format!("prior must be gaussian or besov1, got {}", other.name()))),
        };
        Self::new(prior, LinearObservation::from_spec(&spec.observation)?)
    }

    pub fn potential(&self) -> Result<Potential> {
        quadratic_potential(&self.obs)
    }

    pub fn posterior_om(&self) -> Result<PosteriorOm> {
        PosteriorOm::new(self.prior.om(), self.potential()?)
    }

    pub fn solve(&self, opts: &FistaOptions) -> Result<MapSolution> {
        match &self.prior {
            Prior::Gaussian(g) => map_solve_gaussian_linear(g, &self.obs),
            Prior::Besov(b) => map_solve_besov_linear(b.gamma(), &self.obs, opts),
        }
    }
}

/// How the `n`-th problem differs from the base.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationKind {
    /// `y_n = y + direction · n^{-rate}`.
    Data {
        direction: Vec<f64>,
        #[serde(default = "one")]
        rate: f64,
    },
    /// `Φ ∘ P_n`: observation columns beyond `n` zeroed.
    PotentialProjection {},
    /// Besov: `s_n = s + amplitude·σ_n/n`; Gaussian: `C_n = (1 + amplitude·σ_n/n)C`
    /// and `m_n = m + (amplitude·σ_n/n) e₁`, with `σ_n = (−1)ⁿ` when
    /// alternating and 1 otherwise.
    Prior {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "yes")]
        alternating: bool,
    },
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl PerturbationKind {
    fn sign(alternating: bool, n: usize) -> f64 {
        if alternating && n % 2 == 1 {
            -1.0
        } else {
            1.0
        }
    }

    fn perturbed_prior(prior: &Prior, amplitude: f64, alternating: bool, n: usize) -> Result<Prior> {
        let e = amplitude * Self::sign(alternating, n) / n as f64;
        Ok(match prior {
            Prior::Besov(b) => Prior::Besov(BesovMeasure::new(b.s() + e, b.d(), b.eta(), b.dim())?),
            Prior::Gaussian(g) => {
                let mut m = g.mean().to_vec();
                m[0] += e;
                Prior::Gaussian(GaussianMeasure::new(m, g.covariance().scaled(1.0 + e)?)?)
            }
        })
    }

    /// The `n`-th problem.
    pub fn apply(&self, base: &LinearProblem, n: usize) -> Result<LinearProblem> {
        if n == 0 {
            return Err(Error::InvalidInput("perturbation indices start at 1".into()));
        }
        match self {
            PerturbationKind::Data { direction, rate } => {
                check_dim(base.obs.obs_dim(), direction.len())?;
                let f = (n as f64).powf(-rate);
                let y = base.obs.data().iter().zip(direction).map(|(a, d)| a + f * d).collect();
                LinearProblem::new(base.prior.clone(), base.obs.with_data(y)?)
            }
            PerturbationKind::PotentialProjection {} => LinearProblem::new(base.prior.clone(), base.obs.projected(n)?),
            PerturbationKind::Prior { amplitude, alternating } => {
                LinearProblem::new(Self::perturbed_prior(&base.prior, *amplitude, *alternating, n)?, base.obs.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentOptions {
    pub solver: FistaOptions,
    pub cluster: ClusterOptions,
    pub continuity: ContinuityOptions,
    /// Sublevel samples for the equicoercivity prerequisite.
    pub equicoercivity_samples: usize,
    pub seed: u64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            solver: FistaOptions::default(),
            cluster: ClusterOptions::default(),
            continuity: ContinuityOptions::default(),
            equicoercivity_samples: 2000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbationReport {
    pub kind: PerturbationKind,
    pub n: Vec<usize>,
    pub solutions: Vec<MapSolution>,
    pub limit: MapSolution,
    pub distances: Vec<f64>,
    /// First position from which the distances never increase.
    pub burn_in: usize,
    pub monotone_after_burn_in: bool,
    /// `−slope` of `log distance` against `log n`, when enough distances are
    /// positive.
    pub observed_rate: Option<f64>,
    pub flagged: Vec<usize>,
    pub mode_convergence: ModeConvergenceReport,
    pub prerequisites: GammaReport,
}

impl PerturbationReport {
    pub fn tables(&self) -> Vec<Table> {
        let dim = self.limit.point.len();
        let mut cols = vec!["n".to_string()];
        cols.extend((1..=dim).map(|k| format!("map_{k}")));
        cols.extend(["objective", "residual", "distance_to_limit", "converged"].map(String::from));
        let mut t = Table { name: "perturbation".into(), columns: cols, rows: Vec::new() };
        for (i, s) in self.solutions.iter().enumerate() {
            let mut row = vec![self.n[i].to_string()];
            row.extend(s.point.iter().map(|x| num(*x)));
            row.extend([num(s.objective), num(s.optimality_residual), num(self.distances[i]), s.converged.to_string()]);
            t.push(row);
        }
        let mut out = vec![t];
        out.extend(self.mode_convergence.tables());
        out.extend(self.prerequisites.tables());
        out
    }
}

fn l2dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn burn_in(d: &[f64]) -> usize {
    let mut b = d.len().saturating_sub(1);
    while b > 0 && d[b] <= d[b - 1] * (1.0 + 1e-12) + 1e-15 {
        b -= 1;
    }
    b
}

fn decay_rate(n: &[usize], d: &[f64]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        n.iter().zip(d).filter(|(_, v)| **v > 1e-15).map(|(a, v)| ((*a as f64).ln(), v.ln())).unzip();
    (xs.len() >= 3).then(|| fit_line(&xs, &ys).ok().map(|f| -f.slope)).flatten()
}

fn random_points(dim: usize, count: usize, scale: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed, &[0x9E27]);
    (0..count).map(|_| (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()).collect()
}

fn prerequisites(
    base: &LinearProblem,
    kind: &PerturbationKind,
    n_list: &[usize],
    limit_point: &[f64],
    opts: &ExperimentOptions,
) -> Result<GammaReport> {
    let mut rep = GammaReport::default();
    let dim = base.prior.dim();
    match kind {
        PerturbationKind::Data { .. } | PerturbationKind::PotentialProjection {} => {
            let (b, k) = (base.clone(), kind.clone());
            let phi_n = move |n: usize| k.apply(&b, n).and_then(|p| p.potential()).expect("perturbed problem is valid");
            let points = vec![limit_point.to_vec(), vec![0.0; dim]];
            let c = continuous_convergence_probe(&phi_n, n_list, &base.potential()?, &points, None, &opts.continuity)?;
            let worst = c.entries.iter().map(|e| *e.suprema.last().unwrap()).fold(0.0, f64::max);
            rep.push("continuous_convergence_of_potentials", c.verdict, worst, 0, &c);
        }
        PerturbationKind::Prior { amplitude, alternating } => {
            let members: Vec<(usize, Prior)> = n_list
                .iter()
                .map(|&n| Ok((n, PerturbationKind::perturbed_prior(&base.prior, *amplitude, *alternating, n)?)))
                .collect::<Result<_>>()?;
            let pts = random_points(dim, 5, 1.0, opts.seed);
            match &base.prior {
                Prior::Besov(lim) => {
                    let seq: Vec<BesovMeasure> =
                        members.iter().map(|(_, p)| if let Prior::Besov(b) = p { b.clone() } else { unreachable!() }).collect();
                    let lim_om = BesovOm::new(lim.clone());
                    let mut worst = 0.0f64;
                    for u in &pts {
                        let rec = besov_recovery_sequence(&seq, lim, u)?;
                        for (mu, r) in seq.iter().zip(&rec) {
                            let gap = (BesovOm::new(mu.clone()).eval(r) - lim_om.eval(u)).abs();
                            worst = worst.max(gap / lim_om.eval(u).max(1.0));
                        }
                    }
                    rep.push("besov_recovery_identity", CheckVerdict::from_bool(worst <= 1e-12), worst, 0, &pts);
                    let with_n: Vec<(usize, BesovMeasure)> = n_list.iter().cloned().zip(seq).collect();
                    let e = besov_equicoercivity_probe(&with_n, lim, 1.0, opts.equicoercivity_samples, opts.seed)?;
                    rep.push("besov_equicoercivity", e.verdict, e.max_bound_ratio, e.violations, &e);
                }
                Prior::Gaussian(lim) => {
                    let seq: Vec<GaussianMeasure> = members
                        .iter()
                        .map(|(_, p)| if let Prior::Gaussian(g) = p { g.clone() } else { unreachable!() })
                        .collect();
                    let lim_om = GaussianOm::new(lim.clone());
                    let mut worst = f64::NEG_INFINITY;
                    for u in &pts {
                        let u: Vec<f64> = u.iter().zip(lim.mean()).map(|(a, m)| a + m).collect();
                        let rec = gaussian_recovery_sequence(&seq, lim, &u)?;
                        for (mu, r) in seq.iter().zip(&rec) {
                            worst = worst.max(GaussianOm::new(mu.clone()).eval(r) - lim_om.eval(&u));
                        }
                    }
                    rep.push("gaussian_recovery_inequality", CheckVerdict::from_bool(worst <= 1e-12), worst, 0, &pts);
                    let e = gaussian_equicoercivity_probe(&seq, lim, 1.0, opts.equicoercivity_samples, opts.seed)?;
                    rep.push("gaussian_equicoercivity", e.verdict, e.max_bound_ratio, e.violations, &e);
                }
            }
        }
    }
    Ok(rep)
}

/// Solves the MAP problem for each `n`, measures the distance to the MAP of
/// the base problem, clusters the solution sequence against it and bundles
/// the convergence prerequisites (continuous convergence of the potentials,
/// or recovery and equicoercivity of the prior family).
pub fn perturbation_experiment(
    base: &LinearProblem,
    kind: &PerturbationKind,
    n_list: &[usize],
    opts: &ExperimentOptions,
) -> Result<PerturbationReport> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("n_list must be non-empty and strictly increasing".into()));
    }
    let limit = base.solve(&opts.solver)?;
    let solutions: Vec<MapSolution> = n_list
        .par_iter()
        .map(|&n| kind.apply(base, n)?.solve(&opts.solver))
        .collect::<Result<_>>()?;
    let distances: Vec<f64> = solutions.iter().map(|s| l2dist(&s.point, &limit.point)).collect();
    let flagged = n_list.iter().zip(&solutions).filter(|(_, s)| !s.converged).map(|(n, _)| *n).collect();
    let b = burn_in(&distances);
    let (bc, kc) = (base.clone(), kind.clone());
    let seq = FunctionalSequence::new("posterior OM family", Arc::new(base.posterior_om()?), move |n| {
        Arc::new(kc.apply(&bc, n).and_then(|p| p.posterior_om()).expect("perturbed problem is valid")) as Arc<dyn OmFunctional>
    })?;
    let minimizers: Vec<Vec<f64>> = solutions.iter().map(|s| s.point.clone()).collect();
    let mode_convergence = mode_convergence_check(&seq, n_list, &minimizers, &[limit.point.clone()], &opts.cluster)?;
    let prerequisites = prerequisites(base, kind, n_list, &limit.point, opts)?;
    Ok(PerturbationReport {
        kind: kind.clone(),
        n: n_list.to_vec(),
        observed_rate: decay_rate(n_list, &distances),
        burn_in: b,
        monotone_after_burn_in: b <= distances.len() / 2,
        distances,
        solutions,
        limit,
        flagged,
        mode_convergence,
        prerequisites,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PointwiseRow {
    pub label: String,
    pub point: Vec<f64>,
    pub phi: f64,
    /// `nΦ(x) + I₀(x)` per `n`.
    pub values: Vec<f64>,
    /// `I₀(x)` when `Φ(x) = 0`, `+∞` otherwise.
    pub limit_value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SmallNoiseReport {
    pub n: Vec<usize>,
    pub solutions: Vec<MapSolution>,
    /// `argmin I₀` on `{Φ = 0}`.
    pub constrained: Vec<f64>,
    pub constrained_method: String,
    pub distances: Vec<f64>,
    pub observed_rate: Option<f64>,
    pub pointwise: Vec<PointwiseRow>,
    pub gamma_convergence_asserted: bool,
    pub notes: Vec<String>,
}

impl SmallNoiseReport {
    pub fn tables(&self) -> Vec<Table> {
        let dim = self.constrained.len();
        let mut cols = vec!["n".to_string()];
        cols.extend((1..=dim).map(|k| format!("map_{k}")));
        cols.extend(["objective", "residual", "distance_to_constrained"].map(String::from));
        let mut t = Table { name: "small_noise".into(), columns: cols, rows: Vec::new() };
        for (i, s) in self.solutions.iter().enumerate() {
            let mut row = vec![self.n[i].to_string()];
            row.extend(s.point.iter().map(|x| num(*x)));
            row.extend([num(s.objective), num(s.optimality_residual), num(self.distances[i])]);
            t.push(row);
        }
        let mut p = Table::new("pointwise_limit", &["label", "point", "n", "value", "limit_value"]);
        for r in &self.pointwise {
            for (n, v) in self.n.iter().zip(&r.values) {
                p.push(vec![r.label.clone(), vec_cell(&r.point), n.to_string(), num(*v), num(r.limit_value)]);
            }
        }
        vec![t, p]
    }
}

/// Minimum-Cameron–Martin-norm point of `m + range C^{1/2}` on `{O u = y}`:
/// `u = m + A (O A)†(y − O m)`.
pub fn gaussian_constrained_minimizer(prior: &GaussianMeasure, obs: &LinearObservation) -> Result<Vec<f64>> {
    check_dim(prior.dim(), obs.state_dim())?;
    let a = prior.covariance().sqrt_dense();
    let oa = obs.matrix() * &a;
    let m = DVector::from_column_slice(prior.mean());
    let rhs = DVector::from_column_slice(obs.data()) - obs.matrix() * &m;
    let v = oa.svd(true, true).solve(&rhs, 1e-12).map_err(|e| Error::Numerical(e.to_string()))?;
    let v = DVector::from_vec(prior.covariance().sqrt_pinv_apply(&(&a * v).as_slice().to_vec(), DEFAULT_RANK_TOL)?);
    Ok((m + a * v).as_slice().to_vec())
}

/// `argmin Σ|u_k|/γ_k` subject to `O u = y`, by enumerating basic solutions
/// supported on `rank(O)` columns. Ties within `1e-12` are reported.
pub fn weighted_basis_pursuit(gamma: &[f64], obs: &LinearObservation) -> Result<(Vec<f64>, bool)> {
    let o = obs.matrix();
    let k = o.ncols();
    check_dim(k, gamma.len())?;
    let y = DVector::from_column_slice(obs.data());
    let rank = o.clone().svd(false, false).rank(1e-12 * o.norm().max(1.0));
    if rank == 0 {
        return if y.norm() <= 1e-12 { Ok((vec![0.0; k], false)) } else { Err(Error::InvalidInput("data not in range of O".into())) };
    }
    let count = (0..rank).fold(1.0f64, |c, i| c * (k - i) as f64 / (i + 1) as f64);
    if count > 2e6 {
        return Err(Error::OutOfRegime(format!("{count} supports to enumerate")));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut tie = false;
    let mut support: Vec<usize> = (0..rank).collect();
    loop {
        let sub = DMatrix::from_fn(o.nrows(), rank, |i, j| o[(i, support[j])]);
        if sub.clone().svd(false, false).rank(1e-12 * sub.norm().max(1.0)) == rank {
            if let Ok(c) = sub.clone().svd(true, true).solve(&y, 1e-14) {
                if (&sub * &c - &y).norm() <= 1e-10 * y.norm().max(1.0) {
                    let mut u = vec![0.0; k];
                    for (j, &s) in support.iter().enumerate() {
                        u[s] = c[j];
                    }
                    let f: f64 = u.iter().zip(gamma).map(|(x, g)| x.abs() / g).sum();
                    match &best {
                        Some((bf, bu)) if f > bf - 1e-12 => {
                            if (f - bf).abs() <= 1e-12 && l2dist(&u, bu) > 1e-9 {
                                tie = true;
                            }
                        }
                        _ => {
                            tie = false;
                            best = Some((f, u));
                        }
                    }
                }
            }
        }
        // next combination
        let mut i = rank;
        while i > 0 && support[i - 1] == k - rank + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        support[i - 1] += 1;
        for j in i..rank {
            support[j] = support[j - 1] + 1;
        }
    }
    best.map(|(_, u)| (u, tie)).ok_or_else(|| Error::InvalidInput("no feasible point on {O u = y}".into()))
}

/// Minimisers of `nΦ + I₀` (noise covariance scaled by `1/n`) against the
/// constrained problem `min I₀` on `{Φ = 0}`. Records, without asserting,
/// the trajectory's convergence.
pub fn small_noise_experiment(problem: &LinearProblem, n_list: &[usize], opts: &FistaOptions) -> Result<SmallNoiseReport> {
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::InvalidInput("n_list must be non-empty with positive entries".into()));
    }
    let mut notes = vec![
        "Gamma-convergence of n*Phi + I0 is not asserted: the liminf inequality is open; the trajectory is measured".to_string(),
    ];
    let solutions: Vec<MapSolution> = n_list
        .par_iter()
        .map(|&n| LinearProblem::new(problem.prior.clone(), problem.obs.with_noise_scale(1.0 / n as f64)?)?.solve(opts))
        .collect::<Result<_>>()?;
    let (constrained, constrained_method) = match &problem.prior {
        Prior::Gaussian(g) => (gaussian_constrained_minimizer(g, &problem.obs)?, "minimum Cameron-Martin norm".to_string()),
        Prior::Besov(b) => {
            let (u, tie) = weighted_basis_pursuit(b.gamma(), &problem.obs)?;
            if tie {
                notes.push("weighted basis pursuit has several minimisers; one is reported".into());
            }
            (u, "weighted basis pursuit by support enumeration".to_string())
        }
    };
    let phi = problem.potential()?;
    if phi.eval(&constrained) > 1e-10 {
        notes.push(format!("min Phi not attained numerically: Phi(constrained) = {:e}", phi.eval(&constrained)));
    }
    let prior_om = problem.prior.om();
    let distances: Vec<f64> = solutions.iter().map(|s| l2dist(&s.point, &constrained)).collect();
    let mut rows = vec![("constrained".to_string(), constrained.clone()), ("prior_anchor".to_string(), prior_om.anchor())];
    rows.extend(n_list.iter().zip(&solutions).map(|(n, s)| (format!("map_n={n}"), s.point.clone())));
    let pointwise = rows
        .into_iter()
        .map(|(label, point)| {
            let p = phi.eval(&point);
            let i0 = prior_om.eval(&point);
            PointwiseRow {
                label,
                values: n_list.iter().map(|&n| n as f64 * p + i0).collect(),
                limit_value: if p <= 1e-10 { i0 } else { f64::INFINITY },
                phi: p,
                point,
            }
        })
        .collect();
    Ok(SmallNoiseReport {
        n: n_list.to_vec(),
        observed_rate: decay_rate(n_list, &distances),
        solutions,
        constrained,
        constrained_method,
        distances,
        pointwise,
        gamma_convergence_asserted: false,
        notes,
    })
}

/// Diagonal Gaussian prior and identity-noise observation helper.
pub fn diagonal_problem(mean: Vec<f64>, eigenvalues: Vec<f64>, matrix: DMatrix<f64>, data: Vec<f64>) -> Result<LinearProblem> {
    let prior = Prior::Gaussian(GaussianMeasure::new(mean, SpectralOperator::diagonal(eigenvalues)?)?);
    LinearProblem::new(prior, LinearObservation::with_identity_noise(matrix, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line_obs() -> LinearObservation {
        LinearObservation::with_identity_noise(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), vec![1.0]).unwrap()
    }

    #[test]
    fn gaussian_small_noise_tends_to_min_norm_point() {
        let p = LinearProblem::new(Prior::Gaussian(GaussianMeasure::standard(2)), line_obs()).unwrap();
        let rep = small_noise_experiment(&p, &[1, 10, 100, 10_000], &Default::default()).unwrap();
        assert_abs_diff_eq!(rep.constrained[0], 0.5, epsilon = 1e-14);
        assert!(rep.distances.windows(2).all(|w| w[1] < w[0]));
        assert!(*rep.distances.last().unwrap() < 1e-3);
        assert!(!rep.gamma_convergence_asserted);
    }

    #[test]
    fn basis_pursuit_on_line() {
        let gamma = [1.0, 2f64.powf(-0.5)];
        let (u, tie) = weighted_basis_pursuit(&gamma, &line_obs()).unwrap();
        assert_eq!(u, vec![1.0, 0.0]);
        assert!(!tie);
    }

    #[test]
    fn zero_data_perturbation_is_constant() {
        let p = diagonal_problem(vec![0.0, 0.0], vec![1.0, 2.0], DMatrix::identity(2, 2), vec![1.0, -1.0]).unwrap();
        let kind = PerturbationKind::Data { direction: vec![0.0, 0.0], rate: 1.0 };
        let rep = perturbation_experiment(&p, &kind, &[1, 2, 3, 4], &Default::default()).unwrap();
        assert!(rep.distances.iter().all(|d| *d == 0.0));
        assert_eq!(rep.mode_convergence.verdict, CheckVerdict::Pass);
    }

    #[test]
    fn kind_json() {
        let k: PerturbationKind = serde_json::from_str(r#"{"kind":"prior"}"#).unwrap();
        assert_eq!(k, PerturbationKind::Prior { amplitude: 1.0, alternating: true });
        assert!(serde_json::from_str::<PerturbationKind>(r#"{"kind":"data"}"#).is_err());
    }
}
