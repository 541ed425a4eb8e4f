//! Small-ball masses `μ(B_r(x))` and ratio curves with extrapolated limits.
//!
//! Exact where possible (closed forms, quadrature, products of interval
//! masses for sup-norm balls of product measures). Otherwise the mass is
//! `vol(B) · E[ρ(U)]` with `U` uniform in the ball; the uniform points are
//! drawn from seeds that do not depend on the centre or the radius, so ratio
//! curves use common random numbers.

use libm::lgamma as ln_gamma;
use rand::Rng;
use rand_distr::Gamma;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{laplace_interval_mass, log_ball_mass_1d, std_normal_interval, Density1D, Measure};
use crate::error::{check_dim, Error, Result};
use crate::numerics::{fit_line, log_sum_exp, rng_for, uniform_in_lp_ball};
use crate::spaces::{WeightedSeqSpace, DEFAULT_RANK_TOL};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BallKind {
    #[default]
    Open,
    Closed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BallMassOptions {
    /// Absolute tolerance for adaptive quadrature.
    pub quad_tol: f64,
    /// Monte Carlo samples per (centre, radius).
    pub mc_samples: usize,
    pub batches: usize,
    /// Relative standard error above which an estimate is flagged.
    pub max_rel_err: f64,
    pub seed: u64,
    pub ball: BallKind,
    /// Number of smallest radii used by the extrapolation.
    pub fit_points: usize,
    /// The log-ratio is fitted as a line in `r^fit_power`.
    pub fit_power: f64,
    pub bootstrap: usize,
}

impl Default for BallMassOptions {
    fn default() -> Self {
        Self {
            quad_tol: super::DEFAULT_QUAD_TOL,
            mc_samples: 1_000_000,
            batches: 20,
            max_rel_err: 0.05,
            seed: 0,
            ball: BallKind::Open,
            fit_points: 5,
            fit_power: 1.0,
            bootstrap: 200,
        }
    }
}

/// Geometric schedule `r_j = r0 · 2^{-j}`, `j = 0..levels`.
pub fn geometric_radii(r0: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|j| r0 * 0.5f64.powi(j as i32)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MassMethod {
    ClosedForm,
    Quadrature,
    ExactProduct,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MassEstimate {
    pub value: f64,
    pub log_value: f64,
    pub stderr: f64,
    pub method: MassMethod,
    pub low_confidence: bool,
}

/// Per-batch log masses; exact methods repeat one value.
#[derive(Clone, Debug)]
struct MassSample {
    log_batches: Vec<f64>,
    method: MassMethod,
}

impl MassSample {
    fn exact(log_value: f64, method: MassMethod, batches: usize) -> Self {
        Self { log_batches: vec![log_value; batches.max(1)], method }
    }

    fn log_mean(&self, idx: Option<&[usize]>) -> f64 {
        match idx {
            None => log_sum_exp(&self.log_batches) - (self.log_batches.len() as f64).ln(),
            Some(ix) => {
                let v: Vec<f64> = ix.iter().map(|&i| self.log_batches[i]).collect();
                log_sum_exp(&v) - (v.len() as f64).ln()
            }
        }
    }

    fn estimate(&self, max_rel_err: f64) -> MassEstimate {
        let log_value = self.log_mean(None);
        let value = log_value.exp();
        if self.method != MassMethod::MonteCarlo {
            return MassEstimate { value, log_value, stderr: 0.0, method: self.method, low_confidence: false };
        }
        if log_value == f64::NEG_INFINITY {
            return MassEstimate { value: 0.0, log_value, stderr: 0.0, method: self.method, low_confidence: true };
        }
        let b = self.log_batches.len() as f64;
        let rel: Vec<f64> = self.log_batches.iter().map(|l| (l - log_value).exp()).collect();
        let var = rel.iter().map(|x| (x - 1.0).powi(2)).sum::<f64>() / (b - 1.0).max(1.0);
        let rel_se = (var / b).sqrt();
        // a probability: noise above one is clipped
        let log_clipped = log_value.min(0.0);
        MassEstimate {
            value: log_clipped.exp(),
            log_value: log_clipped,
            stderr: value * rel_se,
            method: self.method,
            low_confidence: rel_se > max_rel_err,
        }
    }
}

fn log_unit_ball_volume(dim: usize, p: f64) -> f64 {
    let k = dim as f64;
    if p.is_infinite() {
        k * std::f64::consts::LN_2
    } else {
        k * (std::f64::consts::LN_2 + ln_gamma(1.0 + 1.0 / p)) - ln_gamma(1.0 + k / p)
    }
}

/// Importance sampling with a uniform proposal on `{x : ‖x − c‖_{ℓᵖ_w} < r}`.
fn mc_mass(
    log_density: &(dyn Fn(&[f64]) -> f64 + Sync),
    center: &[f64],
    radius: f64,
    p: f64,
    weights: &[f64],
    opts: &BallMassOptions,
) -> Result<MassSample> {
    let dim = center.len();
    let batches = opts.batches.max(2);
    let per_batch = opts.mc_samples.div_ceil(batches).max(1);
    let log_vol = log_unit_ball_volume(dim, p) + dim as f64 * radius.ln() + weights.iter().map(|w| w.ln()).sum::<f64>();
    let gamma = if p.is_finite() {
        Some(Gamma::new(1.0 / p, 1.0).map_err(|e| Error::Numerical(format!("gamma sampler: {e}")))?)
    } else {
        None
    };
    let log_batches = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_for(opts.seed, &[0xBA11, dim as u64, b as u64]);
            let mut xi = vec![0.0; dim];
            let mut x = vec![0.0; dim];
            // streaming log-sum-exp
            let (mut m, mut s) = (f64::NEG_INFINITY, 0.0);
            for _ in 0..per_batch {
                uniform_in_lp_ball(&mut rng, p, gamma.as_ref(), &mut xi);
                for k in 0..dim {
                    x[k] = center[k] + radius * weights[k] * xi[k];
                }
                let l = log_density(&x);
                if l == f64::NEG_INFINITY {
                    continue;
                }
                if l > m {
                    s = s * (m - l).exp() + 1.0;
                    m = l;
                } else {
                    s += (l - m).exp();
                }
            }
            if m == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                log_vol + m + s.ln() - (per_batch as f64).ln()
            }
        })
        .collect();
    Ok(MassSample { log_batches, method: MassMethod::MonteCarlo })
}

fn is_unweighted_euclidean(norm: &WeightedSeqSpace) -> bool {
    norm.p() == 2.0 && norm.weights().iter().all(|&w| w == 1.0)
}

fn density_1d_log_mass(d: &dyn Density1D, c: f64, r: f64, kind: BallKind, quad_tol: f64) -> Result<f64> {
    match kind {
        BallKind::Open => log_ball_mass_1d(d, c, r, quad_tol),
        // μ(B̄_r) = lim_{s↓r} μ(B_s); the next double above r is within one ulp
        BallKind::Closed => log_ball_mass_1d(d, c, r.next_up(), quad_tol),
    }
}

fn mass_sample(
    measure: &Measure,
    center: &[f64],
    radius: f64,
    norm: &WeightedSeqSpace,
    opts: &BallMassOptions,
) -> Result<MassSample> {
    check_dim(measure.dim(), center.len())?;
    check_dim(measure.dim(), norm.dim())?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    let b = opts.batches.max(2);
    let closed = opts.ball == BallKind::Closed;
    let w = norm.weights();
    match measure {
        Measure::Density1D(reg) => {
            let d = reg.density();
            let method =
                if d.ball_mass(center[0], radius * w[0]).is_some() { MassMethod::ClosedForm } else { MassMethod::Quadrature };
            let l = density_1d_log_mass(d, center[0], radius * w[0], opts.ball, opts.quad_tol)?;
            Ok(MassSample::exact(l, method, b))
        }
        Measure::Crosses(c) => {
            let r = if closed { radius.next_up() } else { radius };
            Ok(MassSample::exact(c.ball_mass(center, r, norm)?.ln(), MassMethod::ClosedForm, b))
        }
        Measure::Besov(m) => {
            if norm.is_sup() {
                let l = center
                    .iter()
                    .zip(m.gamma())
                    .zip(w)
                    .map(|((c, g), wk)| laplace_interval_mass(*g, c - radius * wk, c + radius * wk).ln())
                    .sum();
                Ok(MassSample::exact(l, MassMethod::ExactProduct, b))
            } else {
                mc_mass(&|x| m.log_density(x), center, radius, norm.p(), w, opts)
            }
        }
        Measure::Gaussian(g) => {
            let cov = g.covariance();
            let lmax = cov.eigenvalues().iter().cloned().fold(0.0, f64::max);
            let null = |l: f64| l <= DEFAULT_RANK_TOL * lmax;
            if norm.is_sup() && cov.is_diagonal() {
                let mut l = 0.0;
                for k in 0..g.dim() {
                    let (h, lam, d) = (radius * w[k], cov.eigenvalues()[k], center[k] - g.mean()[k]);
                    l += if null(lam) {
                        if d.abs() < h || (closed && d.abs() <= h) {
                            0.0
                        } else {
                            f64::NEG_INFINITY
                        }
                    } else {
                        let sd = lam.sqrt();
                        std_normal_interval((d - h) / sd, (d + h) / sd).ln()
                    };
                }
                return Ok(MassSample::exact(l, MassMethod::ExactProduct, b));
            }
            if is_unweighted_euclidean(norm) {
                // rotate to the eigenbasis; kernel coordinates are deterministic
                let diff: Vec<f64> = center.iter().zip(g.mean()).map(|(c, m)| c - m).collect();
                let e = cov.to_eigen(&diff);
                let mut kernel2 = 0.0;
                let mut rc = Vec::new();
                let mut lam = Vec::new();
                for (ek, &l) in e.iter().zip(cov.eigenvalues()) {
                    if null(l) {
                        kernel2 += ek * ek;
                    } else {
                        rc.push(*ek);
                        lam.push(l);
                    }
                }
                let r2 = radius * radius;
                if kernel2 > r2 || (!closed && kernel2 == r2) {
                    return Ok(MassSample::exact(f64::NEG_INFINITY, MassMethod::ClosedForm, b));
                }
                let r_eff = (r2 - kernel2).sqrt();
                return match rc.len() {
                    0 => Ok(MassSample::exact(0.0, MassMethod::ClosedForm, b)),
                    1 => {
                        let sd = lam[0].sqrt();
                        let l = std_normal_interval((rc[0] - r_eff) / sd, (rc[0] + r_eff) / sd).ln();
                        Ok(MassSample::exact(l, MassMethod::ClosedForm, b))
                    }
                    n => {
                        let log_norm: f64 = lam.iter().map(|l| -0.5 * (2.0 * std::f64::consts::PI * l).ln()).sum();
                        let ld = |y: &[f64]| log_norm - 0.5 * y.iter().zip(&lam).map(|(a, l)| a * a / l).sum::<f64>();
                        mc_mass(&ld, &rc, r_eff, 2.0, &vec![1.0; n], opts)
                    }
                };
            }
            if g.is_degenerate() {
                return Err(Error::InvalidInput(
                    "degenerate Gaussian balls are only supported for the Euclidean norm or diagonal sup-norm".into(),
                ));
            }
            mc_mass(&|x| g.log_density(x), center, radius, norm.p(), w, opts)
        }
    }
}

impl Measure {
    /// `μ(B_r(center))` in the given norm.
    pub fn ball_mass(
        &self,
        center: &[f64],
        radius: f64,
        norm: &WeightedSeqSpace,
        opts: &BallMassOptions,
    ) -> Result<MassEstimate> {
        Ok(mass_sample(self, center, radius, norm, opts)?.estimate(opts.max_rel_err))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BallRatioEstimate {
    pub radii: Vec<f64>,
    /// `μ(B_r(x1))/μ(B_r(x2))` per radius.
    pub ratios: Vec<f64>,
    pub stderr: Vec<f64>,
    pub limit: f64,
    pub limit_stderr: f64,
    pub ci: (f64, f64),
    pub method: MassMethod,
    /// Norm generating the balls.
    pub norm: WeightedSeqSpace,
    pub fit_slope: f64,
    pub low_confidence: bool,
    pub diagnostics: Vec<String>,
}

/// Extrapolates `log ratio` linearly in `r^power` over the smallest radii.
/// Returns `(limit, slope, intercept_se)`; a zero ratio in the window gives a
/// zero limit.
fn extrapolate(radii: &[f64], log_ratios: &[f64], fit_points: usize, power: f64) -> Result<(f64, f64, f64)> {
    let n = radii.len();
    let k = fit_points.clamp(1, n);
    let (xs, ys) = (&radii[n - k..], &log_ratios[n - k..]);
    if ys.iter().any(|y| *y == f64::NEG_INFINITY) {
        return Ok((0.0, 0.0, 0.0));
    }
    if k == 1 {
        return Ok((ys[0].exp(), 0.0, 0.0));
    }
    let x: Vec<f64> = xs.iter().map(|r| r.powf(power)).collect();
    let fit = fit_line(&x, ys)?;
    Ok((fit.intercept.exp(), fit.slope, fit.intercept_se))
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::InvalidInput("radius schedule is empty".into()));
    }
    if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidInput("radii must be positive and finite".into()));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("radii must be strictly decreasing".into()));
    }
    Ok(())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, f) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

fn sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Ratio curve `μ(B_r(x1))/μ(B_r(x2))` over `radii` and its extrapolated
/// limit as `r ↘ 0`, with a bootstrap (over Monte Carlo batches) confidence
/// interval.
pub fn ball_ratio_curve(
    measure: &Measure,
    x1: &[f64],
    x2: &[f64],
    radii: &[f64],
    norm: &WeightedSeqSpace,
    opts: &BallMassOptions,
) -> Result<BallRatioEstimate> {
    check_radii(radii)?;
    let samples: Vec<(MassSample, MassSample)> = radii
        .iter()
        .map(|&r| Ok((mass_sample(measure, x1, r, norm, opts)?, mass_sample(measure, x2, r, norm, opts)?)))
        .collect::<Result<_>>()?;
    let mut diagnostics = Vec::new();
    if let Some((i, _)) = samples.iter().enumerate().find(|(_, (_, s2))| s2.log_mean(None) == f64::NEG_INFINITY) {
        return Err(Error::InvalidInput(format!(
            "x2 outside support: denominator mass is zero at radius {}",
            radii[i]
        )));
    }
    let log_ratio = |idx: Option<&[usize]>| -> Vec<f64> {
        samples.iter().map(|(a, b)| a.log_mean(idx) - b.log_mean(idx)).collect()
    };
    let lr = log_ratio(None);
    let ratios: Vec<f64> = lr.iter().map(|l| l.exp()).collect();
    let (limit, fit_slope, se) = extrapolate(radii, &lr, opts.fit_points, opts.fit_power)?;
    let is_mc = samples.iter().any(|(a, b)| a.method == MassMethod::MonteCarlo || b.method == MassMethod::MonteCarlo);
    let method = if is_mc { MassMethod::MonteCarlo } else { samples[0].1.method };
    let mut low_confidence = false;
    for (i, (a, b)) in samples.iter().enumerate() {
        let (ea, eb) = (a.estimate(opts.max_rel_err), b.estimate(opts.max_rel_err));
        if ea.low_confidence || eb.low_confidence {
            low_confidence = true;
            diagnostics.push(format!("radius {}: relative standard error above {}", radii[i], opts.max_rel_err));
        }
    }
    let (stderr, limit_stderr, ci) = if is_mc && opts.bootstrap > 1 {
        let nb = samples[0].0.log_batches.len();
        let boots: Vec<(Vec<f64>, f64)> = (0..opts.bootstrap)
            .into_par_iter()
            .map(|rep| {
                let mut rng = rng_for(opts.seed, &[0xB007, rep as u64]);
                let idx: Vec<usize> = (0..nb).map(|_| rng.random_range(0..nb)).collect();
                let lrb = log_ratio(Some(&idx));
                let lim = extrapolate(radii, &lrb, opts.fit_points, opts.fit_power).map(|t| t.0).unwrap_or(f64::NAN);
                (lrb.iter().map(|l| l.exp()).collect(), lim)
            })
            .collect();
        let stderr: Vec<f64> =
            (0..radii.len()).map(|j| sd(&boots.iter().map(|b| b.0[j]).collect::<Vec<_>>())).collect();
        let mut lims: Vec<f64> = boots.iter().map(|b| b.1).filter(|x| x.is_finite()).collect();
        lims.sort_by(f64::total_cmp);
        if lims.is_empty() {
            diagnostics.push("bootstrap produced no finite limits".into());
            (stderr, f64::INFINITY, (0.0, f64::INFINITY))
        } else {
            // resampling spread plus the residual error of the line fit
            let combined = sd(&lims).hypot(limit * se);
            (stderr, combined, (quantile(&lims, 0.025), quantile(&lims, 0.975)))
        }
    } else {
        let half = 1.96 * se;
        (vec![0.0; radii.len()], limit * se, ((limit.ln() - half).exp(), (limit.ln() + half).exp()))
    };
    diagnostics.push(format!(
        "limit from a line fit of log ratio in r^{} over the {} smallest radii",
        opts.fit_power,
        opts.fit_points.clamp(1, radii.len())
    ));
    Ok(BallRatioEstimate {
        radii: radii.to_vec(),
        ratios,
        stderr,
        limit,
        limit_stderr,
        ci,
        method,
        norm: norm.clone(),
        fit_slope,
        low_confidence,
        diagnostics,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OpenClosedReport {
    pub open: BallRatioEstimate,
    pub closed: BallRatioEstimate,
    pub limit_discrepancy: f64,
    pub max_ratio_discrepancy: f64,
    /// The two limits agree within the wider of the two intervals.
    pub agree: bool,
}

/// Ratio curves with open and with closed balls and their discrepancy.
pub fn open_vs_closed_check(
    measure: &Measure,
    x1: &[f64],
    x2: &[f64],
    radii: &[f64],
    norm: &WeightedSeqSpace,
    opts: &BallMassOptions,
) -> Result<OpenClosedReport> {
    let open = ball_ratio_curve(measure, x1, x2, radii, norm, &BallMassOptions { ball: BallKind::Open, ..opts.clone() })?;
    let closed =
        ball_ratio_curve(measure, x1, x2, radii, norm, &BallMassOptions { ball: BallKind::Closed, ..opts.clone() })?;
    let limit_discrepancy = (open.limit - closed.limit).abs();
    let max_ratio_discrepancy =
        open.ratios.iter().zip(&closed.ratios).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let width = (open.ci.1 - open.ci.0).max(closed.ci.1 - closed.ci.0);
    let agree = limit_discrepancy <= width.max(1e-10 * open.limit.abs().max(1.0));
    Ok(OpenClosedReport { open, closed, limit_discrepancy, max_ratio_discrepancy, agree })
}
