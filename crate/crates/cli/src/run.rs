//! Executes one experiment and collects its report and tables.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use ommap_core::bip::{perturbation_experiment, small_noise_experiment, ExperimentOptions, LinearProblem};
use ommap_core::counterexamples::*;
use ommap_core::gamma::*;
use ommap_core::measures::*;
use ommap_core::numerics::{derive_seed, fit_line};
use ommap_core::om::*;
use ommap_core::report::{num, Table};
use ommap_core::spaces::{SpectralOperator, WeightedSeqSpace};
use ommap_core::Error;

use crate::config::{Example, Experiment, FamilySpec, NormSpec};

#[derive(Debug)]
pub enum RunError {
    /// The config is well-formed JSON but describes an invalid experiment.
    Schema(String),
    Numerical(String),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(m) => RunError::Numerical(m),
            other => RunError::Schema(other.to_string()),
        }
    }
}

type Res<T> = Result<T, RunError>;

pub struct Output {
    pub report: Value,
    pub tables: Vec<Table>,
}

// seed stream tags
const BALL: u64 = 1;
const LIMINF: u64 = 2;
const EQUI: u64 = 3;
const EXPERIMENT: u64 = 4;

fn value(x: &impl Serialize) -> Value {
    serde_json::to_value(x).expect("reports serialise")
}

fn schema(msg: impl Into<String>) -> RunError {
    RunError::Schema(msg.into())
}

fn norm_for(measure: &Measure, spec: &Option<NormSpec>) -> Res<WeightedSeqSpace> {
    match spec {
        None => Ok(measure.default_norm()),
        Some(s) => s.build(measure.dim()).map_err(RunError::Schema),
    }
}

fn om_for(measure: &Measure, anchor: Option<&[f64]>) -> Res<Arc<dyn OmFunctional>> {
    Ok(match measure {
        Measure::Gaussian(g) => Arc::new(GaussianOm::new(g.clone())),
        Measure::Besov(b) => Arc::new(BesovOm::new(b.clone())),
        Measure::Density1D(d) => {
            let a = anchor
                .and_then(|a| a.first().copied())
                .ok_or_else(|| schema("anchor: required for one-dimensional densities"))?;
            Arc::new(FnOm::neg_log_density(d.shared(), a)?)
        }
        Measure::Crosses(_) => return Err(schema("measure: the crosses OM functional depends on the norm; use ball_ratio")),
    })
}

fn check_finite(label: &str, xs: &[f64]) -> Res<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(RunError::Numerical(format!("{label} is not finite: {xs:?}")))
    }
}

pub fn run(experiment: &Experiment, seed: u64) -> Res<Output> {
    match experiment {
        Experiment::BallRatio { measure, x1, x2, radii, norm, options, om_check, abs_tol } => {
            let measure = Measure::from_spec(measure)?;
            let norm = norm_for(&measure, norm)?;
            let opts = BallMassOptions { seed: derive_seed(seed, &[BALL]), ..options.clone() };
            let radii = radii.values();
            let est = ball_ratio_curve(&measure, x1, x2, &radii, &norm, &opts)?;
            let mut t = Table::new("ratio_curve", &["radius", "mass_ratio_x1_over_x2", "ratio_stderr"]);
            for i in 0..est.radii.len() {
                t.push(vec![num(est.radii[i]), num(est.ratios[i]), num(est.stderr[i])]);
            }
            let mut tables = vec![t];
            let check = if *om_check {
                let om = om_for(&measure, Some(x1))?;
                let rep = om_difference_check(&measure, om.as_ref(), x1, x2, &radii, &norm, &opts, *abs_tol)?;
                tables.extend(rep.tables());
                Some(rep)
            } else {
                None
            };
            Ok(Output { report: json!({ "ratio": value(&est), "om_check": value(&check) }), tables })
        }
        Experiment::ClassifyMode { measure, candidate, competitors, radii, norm, options, mode } => {
            let measure = Measure::from_spec(measure)?;
            let norm = norm_for(&measure, norm)?;
            let opts = BallMassOptions { seed: derive_seed(seed, &[BALL]), ..options.clone() };
            let c = classify_mode(&measure, candidate, competitors, &radii.values(), &norm, &opts, mode)?;
            Ok(Output { report: value(&c), tables: c.tables() })
        }
        Experiment::MProperty { measure, outside_points, radii, anchor, norm, options } => {
            let measure = Measure::from_spec(measure)?;
            let norm = norm_for(&measure, norm)?;
            let om = om_for(&measure, anchor.as_deref())?;
            let opts = BallMassOptions { seed: derive_seed(seed, &[BALL]), ..options.clone() };
            let rep = m_property_probe(&measure, om.as_ref(), outside_points, &radii.values(), &norm, &opts)?;
            Ok(Output { report: value(&rep), tables: rep.tables() })
        }
        Experiment::GammaCheck { family, points, recovery_indices, levels, members, samples, liminf, tol } => {
            gamma_check(family, points, recovery_indices, levels, *members, *samples, liminf, *tol, seed)
        }
        Experiment::MapSolve { problem, fista } => {
            let problem = LinearProblem::from_spec(problem)?;
            let sol = problem.solve(fista)?;
            check_finite("MAP estimate", &sol.point)?;
            let mut t = Table::new("map", &["coordinate", "map_value"]);
            for (k, x) in sol.point.iter().enumerate() {
                t.push(vec![(k + 1).to_string(), num(*x)]);
            }
            Ok(Output { report: json!({ "map": sol.point, "solution": value(&sol) }), tables: vec![t] })
        }
        Experiment::Perturbation { problem, perturbation, n, options } => {
            let base = LinearProblem::from_spec(problem)?;
            let opts = ExperimentOptions { seed: derive_seed(seed, &[EXPERIMENT]), ..options.clone() };
            let rep = perturbation_experiment(&base, perturbation, n, &opts)?;
            check_finite("MAP distances", &rep.distances)?;
            Ok(Output { report: value(&rep), tables: rep.tables() })
        }
        Experiment::SmallNoise { problem, n, fista } => {
            let problem = LinearProblem::from_spec(problem)?;
            let rep = small_noise_experiment(&problem, n, fista)?;
            check_finite("distances to the constrained minimiser", &rep.distances)?;
            Ok(Output { report: value(&rep), tables: rep.tables() })
        }
        Experiment::Counterexample { example } => counterexample(example),
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], k: usize, field: &str) -> Res<DMatrix<f64>> {
    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
        return Err(schema(format!("{field}: expected a {k}x{k} matrix")));
    }
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

#[allow(clippy::too_many_arguments)]
fn gamma_check(
    family: &FamilySpec,
    points: &[Vec<f64>],
    indices: &[usize],
    levels: &[f64],
    members: usize,
    samples: usize,
    liminf: &LiminfOptions,
    tol: f64,
    seed: u64,
) -> Res<Output> {
    if indices.is_empty() || indices.contains(&0) {
        return Err(schema("recovery_indices: must be non-empty and start at 1"));
    }
    if members == 0 {
        return Err(schema("members: must be at least 1"));
    }
    let n_max = liminf.n_max.max(*indices.iter().max().unwrap()).max(members);
    let mut report = GammaReport::default();
    let mut paths = Table::new("liminf_paths", &["point", "path", "margin", "violated", "witness_n", "witness_value"]);
    let (seq, recovery): (FunctionalSequence, Box<dyn Fn(&[f64]) -> Res<Vec<Vec<f64>>>>) = match family {
        FamilySpec::Gaussian { limit, covariance_perturbation, mean_perturbation } => {
            let Measure::Gaussian(lim) = Measure::from_spec(limit)? else {
                return Err(schema("family.limit: expected a gaussian measure"));
            };
            let k = lim.dim();
            let d = match covariance_perturbation {
                Some(rows) => matrix_from_rows(rows, k, "family.covariance_perturbation")?,
                None => DMatrix::zeros(k, k),
            };
            let v = mean_perturbation.clone().unwrap_or_else(|| vec![0.0; k]);
            if v.len() != k {
                return Err(schema(format!("family.mean_perturbation: expected {k} entries")));
            }
            let c = lim.covariance().to_dense();
            let member = {
                let lim = lim.clone();
                move |n: usize| -> Result<GaussianMeasure, Error> {
                    let cn = SpectralOperator::from_dense(&(&c + &d / n as f64))?;
                    let mn = lim.mean().iter().zip(&v).map(|(m, e)| m + e / n as f64).collect();
                    GaussianMeasure::new(mn, cn)
                }
            };
            let all: Vec<GaussianMeasure> = (1..=n_max).map(&member).collect::<Result<_, _>>()?;
            let all = Arc::new(all);
            for &t in levels {
                let e = gaussian_equicoercivity_probe(&all[..members], &lim, t, samples, derive_seed(seed, &[EQUI]))?;
                report.push(format!("equicoercivity t={t}"), e.verdict, 1.0 - e.max_bound_ratio, e.violations, &e);
            }
            let seq = {
                let all = all.clone();
                FunctionalSequence::gaussian(lim.clone(), move |n| all[n - 1].clone())?
            };
            let idx = indices.to_vec();
            let rec = move |x: &[f64]| -> Res<Vec<Vec<f64>>> {
                let mus: Vec<GaussianMeasure> = idx.iter().map(|&n| all[n - 1].clone()).collect();
                Ok(gaussian_recovery_sequence(&mus, &lim, x)?)
            };
            (seq, Box::new(rec))
        }
        FamilySpec::Besov { limit, amplitude, alternating } => {
            let Measure::Besov(lim) = Measure::from_spec(limit)? else {
                return Err(schema("family.limit: expected a besov1 measure"));
            };
            let (amp, alt) = (*amplitude, *alternating);
            let member = {
                let lim = lim.clone();
                move |n: usize| {
                    let sign = if alt && n % 2 == 1 { -1.0 } else { 1.0 };
                    BesovMeasure::new(lim.s() + amp * sign / n as f64, lim.d(), lim.eta(), lim.dim())
                }
            };
            let all: Vec<BesovMeasure> = (1..=n_max).map(&member).collect::<Result<_, _>>()?;
            let all = Arc::new(all);
            let numbered: Vec<(usize, BesovMeasure)> = (1..=members).map(|n| (n, all[n - 1].clone())).collect();
            for &t in levels {
                let e = besov_equicoercivity_probe(&numbered, &lim, t, samples, derive_seed(seed, &[EQUI]))?;
                report.push(format!("equicoercivity t={t}"), e.verdict, 1.0 - e.max_bound_ratio, e.violations, &e);
            }
            let seq = {
                let all = all.clone();
                FunctionalSequence::besov(lim.clone(), move |n| all[n - 1].clone())?
            };
            let idx = indices.to_vec();
            let rec = move |x: &[f64]| -> Res<Vec<Vec<f64>>> {
                let mus: Vec<BesovMeasure> = idx.iter().map(|&n| all[n - 1].clone()).collect();
                Ok(besov_recovery_sequence(&mus, &lim, x)?)
            };
            (seq, Box::new(rec))
        }
    };
    for (i, x) in points.iter().enumerate() {
        let opts = LiminfOptions { seed: derive_seed(seed, &[LIMINF, i as u64]), n_max: liminf.n_max, ..liminf.clone() };
        let probe = gamma_liminf_probe(&seq, x, &[], &opts)?;
        for e in &probe.entries {
            paths.push(vec![
                (i + 1).to_string(),
                e.path.clone(),
                num(e.margin),
                e.violated.to_string(),
                e.witness_n.to_string(),
                num(e.witness_value),
            ]);
        }
        report.push(format!("liminf point {}", i + 1), probe.verdict, probe.worst_margin, probe.violations, &probe);
        let rec = recovery_check(&seq, x, indices, &recovery(x)?, tol)?;
        report.push(format!("recovery point {}", i + 1), rec.verdict, -rec.gap, 0, &rec);
    }
    let mut tables = report.tables();
    tables.push(paths);
    Ok(Output { report: json!({ "family": seq.name(), "verdict": report.verdict(), "probes": value(&report) }), tables })
}

fn counterexample(example: &Example) -> Res<Output> {
    match example {
        Example::LiminfOnly { depth, n_max } => {
            let m = LiminfOnlyMeasure::new(*depth)?;
            let r = liminf_only_ratios(&m, *n_max)?;
            let mut t = Table::new("liminf_only_ratios", &["n", "epsilon_ratio", "delta_ratio", "log2_delta_ratio"]);
            for i in 0..r.n.len() {
                t.push(vec![r.n[i].to_string(), num(r.epsilon_ratios[i]), num(r.delta_ratios[i]), num(r.delta_ratios[i].log2())]);
            }
            Ok(Output { report: value(&r), tables: vec![t] })
        }
        Example::OmNotStrong { levels, ks, dips } => {
            let m = OmNotStrongMeasure::new(*levels)?;
            let r = om_not_strong_suite(&m, ks, dips)?;
            let mut a = Table::new("ratio_to_k", &["k", "om_value_2_log_k", "mass_ratio_1_over_k"]);
            for ((k, om), (_, ratio)) in r.om_values.iter().zip(&r.ratio_to_k) {
                a.push(vec![k.to_string(), num(*om), num(*ratio)]);
            }
            let mut b = Table::new("strong_dips", &["n", "radius", "mass_ratio_1_over_n", "bound"]);
            for (n, rn, ratio, bound) in &r.strong_dips {
                b.push(vec![n.to_string(), num(*rn), num(*ratio), num(*bound)]);
            }
            let mut c = Table::new("off_integer", &["radius", "mass_ratio_1.1_over_1"]);
            for (rad, ratio) in r.radii.iter().zip(&r.off_integer_ratios) {
                c.push(vec![num(*rad), num(*ratio)]);
            }
            Ok(Output { report: value(&r), tables: vec![a, b, c] })
        }
        Example::Crosses {} => {
            let mut masses = Table::new("crosses_masses", &["norm", "centre", "radius", "unnormalised_mass"]);
            let mut summary = Table::new("crosses_summary", &["norm", "om_difference_e1_minus_neg_e1", "mode"]);
            let mut report = Vec::new();
            for norm in [CrossNorm::L1, CrossNorm::Linf] {
                for centre in [CrossCenter::E1, CrossCenter::MinusE1] {
                    for r in geometric_radii(0.5, 6) {
                        masses.push(vec![format!("{norm:?}"), format!("{centre:?}"), num(r), num(crosses_ball_masses(norm, centre, r)?)]);
                    }
                }
                let s = crosses_summary(norm)?;
                summary.push(vec![format!("{norm:?}"), num(s.om_difference), format!("{:?}", s.mode)]);
                report.push(value(&s));
            }
            Ok(Output { report: Value::Array(report), tables: vec![summary, masses] })
        }
        Example::Spike { n } => {
            let mut t = Table::new("spike", &["n", "mode", "n_times_mode", "kl_limit_to_n", "n_times_kl"]);
            let mut rows = Vec::new();
            for &k in n {
                let mode = spike_mode(Some(k))?;
                let kl = spike_kl(k, 1e-14)?;
                let kf = k as f64;
                t.push(vec![k.to_string(), num(mode), num(mode * kf), num(kl), num(kl * kf)]);
                rows.push(json!({ "n": k, "mode": mode, "kl": kl }));
            }
            let limit_mode = spike_mode(None)?;
            let mut densities: Vec<SpikeFamily> = n.iter().map(|&k| SpikeFamily::new(Some(k))).collect::<Result<_, _>>()?;
            densities.push(SpikeFamily::limit());
            let mut cols = vec!["x".to_string()];
            cols.extend(n.iter().map(|k| format!("density_n{k}")));
            cols.push("density_limit".into());
            let grid = density_grid("spike_density_grid", &cols, -1.0, 4.0, &densities);
            Ok(Output { report: json!({ "members": rows, "limit_mode": limit_mode }), tables: vec![t, grid] })
        }
        Example::Mixture { t, r } => {
            let mut tab = Table::new("mixture", &["t", "mode", "mode_at_minus_t", "kl_t_to_minus_t"]);
            let mut rows = Vec::new();
            let (mut lx, mut ly) = (Vec::new(), Vec::new());
            for &ti in t {
                let (plus, minus) = (mixture_modes(ti, *r)?, mixture_modes(-ti, *r)?);
                let kl = mixture_kl(ti, *r, 1e-16)?;
                tab.push(vec![num(ti), num(plus.mode), num(minus.mode), num(kl)]);
                if ti > 0.0 && kl > 0.0 {
                    lx.push(ti.ln());
                    ly.push(kl.ln());
                }
                rows.push(json!({ "t": ti, "mode": plus.mode, "mode_at_minus_t": minus.mode, "kl": kl, "warning": plus.warning }));
            }
            let exponent = if lx.len() >= 2 { Some(fit_line(&lx, &ly)?.slope) } else { None };
            let densities: Vec<MixtureFamily> = t.iter().map(|&ti| MixtureFamily::new(ti, *r)).collect::<Result<_, _>>()?;
            let mut cols = vec!["x".to_string()];
            cols.extend(t.iter().map(|ti| format!("density_t{ti}")));
            let grid = density_grid("mixture_density_grid", &cols, -2.0 * r, 2.0 * r, &densities);
            Ok(Output { report: json!({ "r": r, "members": rows, "fitted_kl_exponent": exponent }), tables: vec![tab, grid] })
        }
        Example::KlGaussians { sigma } => {
            let mut t = Table::new("kl_gaussians", &["sigma", "closed_form", "quadrature", "abs_difference"]);
            let mut rows = Vec::new();
            for &s in sigma {
                let (a, b) = (kl_gaussians(s)?, kl_gaussians_quadrature(s, 1e-13)?);
                t.push(vec![num(s), num(a), num(b), num((a - b).abs())]);
                rows.push(json!({ "sigma": s, "closed_form": a, "quadrature": b }));
            }
            Ok(Output { report: Value::Array(rows), tables: vec![t] })
        }
    }
}


const GRID_POINTS: usize = 501;

fn density_grid<D: Density1D>(name: &str, columns: &[String], lo: f64, hi: f64, densities: &[D]) -> Table {
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut t = Table::new(name, &cols);
    for i in 0..GRID_POINTS {
        let x = lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64;
        let mut row = vec![num(x)];
        row.extend(densities.iter().map(|d| num(d.density(x))));
        t.push(row);
    }
    t
}
