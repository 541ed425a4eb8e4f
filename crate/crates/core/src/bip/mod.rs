//! Bayesian inverse problems: potentials, linear observations, MAP solvers
//! for Gaussian and Besov-1 priors, and the perturbation and small-noise
//! experiments.

mod experiments;
mod potential;
mod solvers;

pub use experiments::{
    diagonal_problem, gaussian_constrained_minimizer, perturbation_experiment, small_noise_experiment,
    weighted_basis_pursuit, ExperimentOptions, LinearProblem, PerturbationKind, PerturbationReport, PointwiseRow, Prior,
    ProblemSpec, SmallNoiseReport,
};
pub use potential::{
    finite_difference_gradient, power_iteration, quadratic_potential, LinearObservation, ObservationSpec, Potential,
    GRADIENT_CHECK_TOL,
};
pub use solvers::{
    coordinate_descent_weighted_lasso, gaussian_posterior_mean, kkt_residual, map_solve_besov, map_solve_besov_linear,
    map_solve_gaussian_linear, map_solve_weighted_l1, FistaOptions, MapSolution,
};
