//! Onsager–Machlup functionals, their `+∞` extension off the domain `E`, and
//! empirical checks against small-ball mass ratios.

use std::fmt;
use std::sync::Arc;

use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;
use serde::Serialize;

use crate::bip::Potential;
use crate::error::{check_dim, Error, Result};
use crate::measures::{
    ball_ratio_curve, BallMassOptions, BallRatioEstimate, BesovMeasure, Density1D, GaussianMeasure, Measure,
};
use crate::numerics::fit_line;
use crate::report::{num, vec_cell, CheckVerdict, Table, Verdict};
use crate::spaces::{WeightedSeqSpace, DEFAULT_RANGE_TOL, DEFAULT_RANK_TOL};

/// OM functional `I: ℝ^K → (−∞, ∞]`, finite exactly on the domain `E`.
pub trait OmFunctional: Send + Sync {
    fn dim(&self) -> usize;

    /// `I(u)`, `+∞` off `E`.
    fn eval(&self, u: &[f64]) -> f64;

    fn in_domain(&self, u: &[f64]) -> bool {
        self.eval(u).is_finite()
    }

    /// Reference point `x*` with finite value.
    fn anchor(&self) -> Vec<f64>;

    fn name(&self) -> String;

    /// Value and gradient of the smooth part, where one exists.
    fn smooth_part(&self, _u: &[f64]) -> Option<(f64, Vec<f64>)> {
        None
    }

    /// Weights `w` of a nonsmooth part `Σ_k |u_k|/w_k`.
    fn l1_weights(&self) -> Option<Vec<f64>> {
        None
    }
}

impl fmt::Debug for dyn OmFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OmFunctional({})", self.name())
    }
}

/// `I(u) = ½‖C^{†/2}(u − m)‖²` on `m + range C^{1/2}`.
#[derive(Clone, Debug)]
pub struct GaussianOm {
    measure: GaussianMeasure,
    rank_tol: f64,
    range_tol: f64,
}

impl GaussianOm {
    pub fn new(measure: GaussianMeasure) -> Self {
        Self { measure, rank_tol: DEFAULT_RANK_TOL, range_tol: DEFAULT_RANGE_TOL }
    }

    pub fn with_tolerances(mut self, rank_tol: f64, range_tol: f64) -> Self {
        self.rank_tol = rank_tol;
        self.range_tol = range_tol;
        self
    }

    pub fn measure(&self) -> &GaussianMeasure {
        &self.measure
    }

    fn diff(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(self.measure.mean()).map(|(a, b)| a - b).collect()
    }

    /// `C^{†/2}(u − m)`, the Cameron–Martin coordinates of `u`.
    pub fn whitened(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), u.len())?;
        self.measure.covariance().sqrt_pinv_apply(&self.diff(u), self.rank_tol)
    }
}

pub fn gaussian_om(mu: &GaussianMeasure) -> GaussianOm {
    GaussianOm::new(mu.clone())
}

impl OmFunctional for GaussianOm {
    fn dim(&self) -> usize {
        self.measure.dim()
    }

    fn eval(&self, u: &[f64]) -> f64 {
        if u.len() != self.dim() || !self.in_domain(u) {
            return f64::INFINITY;
        }
        let v = self.whitened(u).expect("dimension checked");
        0.5 * v.iter().map(|x| x * x).sum::<f64>()
    }

    fn in_domain(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && self.measure.covariance().in_range(&self.diff(u), self.rank_tol, self.range_tol).unwrap_or(false)
    }

    fn anchor(&self) -> Vec<f64> {
        self.measure.mean().to_vec()
    }

    fn name(&self) -> String {
        format!("gaussian_om(dim={})", self.dim())
    }

    fn smooth_part(&self, u: &[f64]) -> Option<(f64, Vec<f64>)> {
        if !self.in_domain(u) {
            return None;
        }
        let g = self.measure.covariance().pinv_apply(&self.diff(u), self.rank_tol).ok()?;
        Some((self.eval(u), g))
    }
}

/// `I(u) = Σ_k |u_k|/γ_k`, the `ℓ¹_γ` norm. Finite at every truncation; the
/// untruncated domain `ℓ¹_γ` is represented by [`BesovOm::tail_bound`].
#[derive(Clone, Debug)]
pub struct BesovOm {
    measure: BesovMeasure,
}

impl BesovOm {
    pub fn new(measure: BesovMeasure) -> Self {
        Self { measure }
    }

    pub fn measure(&self) -> &BesovMeasure {
        &self.measure
    }

    pub fn gamma(&self) -> &[f64] {
        self.measure.gamma()
    }

    /// Bound on the OM tail `Σ_{k>K} |u_k|/γ_k` for coefficients
    /// `|u_k| ≤ c·k^{-decay}`; infinite when the tail diverges.
    pub fn tail_bound(&self, c: f64, decay: f64) -> f64 {
        self.measure.om_tail_bound(c, decay)
    }
}

pub fn besov_om(mu: &BesovMeasure) -> BesovOm {
    BesovOm::new(mu.clone())
}

impl OmFunctional for BesovOm {
    fn dim(&self) -> usize {
        self.measure.dim()
    }

    fn eval(&self, u: &[f64]) -> f64 {
        if u.len() != self.dim() || u.iter().any(|x| !x.is_finite()) {
            return f64::INFINITY;
        }
        u.iter().zip(self.gamma()).map(|(x, g)| x.abs() / g).sum()
    }

    fn anchor(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn name(&self) -> String {
        format!("besov_om(s={}, dim={})", self.measure.s(), self.dim())
    }

    fn smooth_part(&self, _u: &[f64]) -> Option<(f64, Vec<f64>)> {
        Some((0.0, vec![0.0; self.dim()]))
    }

    fn l1_weights(&self) -> Option<Vec<f64>> {
        Some(self.gamma().to_vec())
    }
}

/// `Φ + I₀` on the domain of `I₀`.
#[derive(Clone)]
pub struct PosteriorOm {
    prior: Arc<dyn OmFunctional>,
    phi: Potential,
}

impl PosteriorOm {
    pub fn new(prior: Arc<dyn OmFunctional>, phi: Potential) -> Result<Self> {
        check_dim(prior.dim(), phi.dim())?;
        Ok(Self { prior, phi })
    }

    pub fn prior(&self) -> &Arc<dyn OmFunctional> {
        &self.prior
    }

    pub fn phi(&self) -> &Potential {
        &self.phi
    }
}

pub fn posterior_om(prior: Arc<dyn OmFunctional>, phi: Potential) -> Result<PosteriorOm> {
    PosteriorOm::new(prior, phi)
}

impl OmFunctional for PosteriorOm {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn eval(&self, u: &[f64]) -> f64 {
        let p = self.prior.eval(u);
        if p.is_finite() {
            self.phi.eval(u) + p
        } else {
            f64::INFINITY
        }
    }

    fn in_domain(&self, u: &[f64]) -> bool {
        self.prior.in_domain(u)
    }

    fn anchor(&self) -> Vec<f64> {
        self.prior.anchor()
    }

    fn name(&self) -> String {
        format!("{} + {}", self.phi.name(), self.prior.name())
    }

    fn smooth_part(&self, u: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (v, g) = self.prior.smooth_part(u)?;
        let gp = self.phi.gradient(u);
        Some((v + self.phi.eval(u), g.iter().zip(gp).map(|(a, b)| a + b).collect()))
    }

    fn l1_weights(&self) -> Option<Vec<f64>> {
        self.prior.l1_weights()
    }
}

type OmFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// OM functional given by a closure; the domain is where it is finite.
#[derive(Clone)]
pub struct FnOm {
    name: String,
    dim: usize,
    f: OmFn,
    anchor: Vec<f64>,
}

impl FnOm {
    pub fn new(
        name: impl Into<String>,
        anchor: Vec<f64>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let om = Self { name: name.into(), dim: anchor.len(), f: Arc::new(f), anchor };
        if om.dim == 0 || !om.eval(&om.anchor).is_finite() {
            return Err(Error::InvalidInput(format!("OM functional '{}' must be finite at its anchor", om.name)));
        }
        Ok(om)
    }

    /// `−log ρ` for a density on the line.
    pub fn neg_log_density(density: Arc<dyn Density1D>, anchor: f64) -> Result<Self> {
        let name = format!("-log {}", density.name());
        Self::new(name, vec![anchor], move |x| {
            let p = density.density(x[0]);
            if p > 0.0 {
                -p.ln()
            } else {
                f64::INFINITY
            }
        })
    }
}

impl OmFunctional for FnOm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, u: &[f64]) -> f64 {
        if u.len() != self.dim {
            return f64::INFINITY;
        }
        (self.f)(u)
    }

    fn anchor(&self) -> Vec<f64> {
        self.anchor.clone()
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

fn ratio_table(name: &str, est: &BallRatioEstimate) -> Table {
    let mut t = Table::new(name, &["radius", "ratio", "stderr"]);
    for i in 0..est.radii.len() {
        t.push(vec![num(est.radii[i]), num(est.ratios[i]), num(est.stderr[i])]);
    }
    t
}

#[derive(Clone, Debug, Serialize)]
pub struct OmDifferenceReport {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// `I(x2) − I(x1)`.
    pub om_difference: f64,
    /// `exp(I(x2) − I(x1))`.
    pub expected: f64,
    pub estimate: BallRatioEstimate,
    pub deviation: f64,
    pub tolerance: f64,
    pub verdict: CheckVerdict,
}

impl OmDifferenceReport {
    pub fn tables(&self) -> Vec<Table> {
        vec![ratio_table("om_difference", &self.estimate)]
    }
}

/// Compares the extrapolated limit of `μ(B_r(x1))/μ(B_r(x2))` with
/// `exp(I(x2) − I(x1))`. Tolerance: `3·limit_stderr + abs_tol`. The
/// verdict is inconclusive when the 95% interval is wider than `max_ci_rel`
/// times the expected value or a mass estimate was flagged.
pub fn om_difference_check(
    measure: &Measure,
    om: &dyn OmFunctional,
    x1: &[f64],
    x2: &[f64],
    radii: &[f64],
    norm: &WeightedSeqSpace,
    opts: &BallMassOptions,
    abs_tol: f64,
) -> Result<OmDifferenceReport> {
    for x in [x1, x2] {
        check_dim(om.dim(), x.len())?;
        if !om.in_domain(x) {
            return Err(Error::InvalidInput(format!("point {x:?} is outside the OM domain")));
        }
    }
    let om_difference = om.eval(x2) - om.eval(x1);
    let expected = om_difference.exp();
    let estimate = ball_ratio_curve(measure, x1, x2, radii, norm, opts)?;
    let deviation = (estimate.limit - expected).abs();
    let tolerance = 3.0 * estimate.limit_stderr + abs_tol;
    let max_ci_rel = 0.5;
    let verdict = if estimate.low_confidence || (estimate.ci.1 - estimate.ci.0) > max_ci_rel * expected.max(abs_tol) {
        CheckVerdict::Inconclusive
    } else {
        CheckVerdict::from_bool(deviation <= tolerance)
    };
    Ok(OmDifferenceReport { x1: x1.to_vec(), x2: x2.to_vec(), om_difference, expected, estimate, deviation, tolerance, verdict })
}

#[derive(Clone, Debug, Serialize)]
pub struct MPropertyEntry {
    pub point: Vec<f64>,
    pub estimate: BallRatioEstimate,
    pub smallest_ratio: f64,
    /// Fraction of consecutive radius steps along which the ratio does not
    /// increase.
    pub monotone_fraction: f64,
    /// Slope of `log ratio` against `log r` over the schedule.
    pub log_log_slope: Option<f64>,
    pub decreasing_to_zero: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MPropertyReport {
    pub anchor: Vec<f64>,
    pub entries: Vec<MPropertyEntry>,
    pub verdict: CheckVerdict,
}

impl MPropertyReport {
    pub fn tables(&self) -> Vec<Table> {
        let mut t = Table::new("m_property", &["point", "radius", "ratio", "stderr"]);
        for e in &self.entries {
            for i in 0..e.estimate.radii.len() {
                t.push(vec![vec_cell(&e.point), num(e.estimate.radii[i]), num(e.estimate.ratios[i]), num(e.estimate.stderr[i])]);
            }
        }
        vec![t]
    }
}

/// For each point outside `E`, the curve `μ(B_r(x))/μ(B_r(x*))` against the
/// anchor `x*`. A curve passes when it is non-increasing on at least 75% of
/// the steps and either reaches zero or has a positive log-log slope with a
/// smallest value below the first one.
pub fn m_property_probe(
    measure: &Measure,
    om: &dyn OmFunctional,
    outside_points: &[Vec<f64>],
    radii: &[f64],
    norm: &WeightedSeqSpace,
    opts: &BallMassOptions,
) -> Result<MPropertyReport> {
    let anchor = om.anchor();
    if let Some(p) = outside_points.iter().find(|p| om.in_domain(p)) {
        return Err(Error::InvalidInput(format!("point {p:?} passes the domain test")));
    }
    let entries = outside_points
        .iter()
        .map(|x| {
            let estimate = ball_ratio_curve(measure, x, &anchor, radii, norm, opts)?;
            let r = &estimate.ratios;
            let smallest_ratio = r.iter().cloned().fold(f64::INFINITY, f64::min);
            let steps = r.len().saturating_sub(1).max(1) as f64;
            let monotone_fraction = r.windows(2).filter(|w| w[1] <= w[0] * (1.0 + 1e-12)).count() as f64 / steps;
            let pos: Vec<(f64, f64)> =
                radii.iter().zip(r).filter(|(_, v)| **v > 0.0).map(|(a, v)| (a.ln(), v.ln())).collect();
            let log_log_slope = if pos.len() >= 2 {
                let (xs, ys): (Vec<f64>, Vec<f64>) = pos.into_iter().unzip();
                fit_line(&xs, &ys).ok().map(|f| f.slope)
            } else {
                None
            };
            let last = *r.last().unwrap();
            let decreasing_to_zero = monotone_fraction >= 0.75
                && (last == 0.0 || (log_log_slope.is_some_and(|s| s > 0.0) && last < r[0]));
            Ok(MPropertyEntry { point: x.clone(), estimate, smallest_ratio, monotone_fraction, log_log_slope, decreasing_to_zero })
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = CheckVerdict::from_bool(entries.iter().all(|e| e.decreasing_to_zero));
    Ok(MPropertyReport { anchor, entries, verdict })
}

#[derive(Clone, Debug, PartialEq, serde::Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeOptions {
    /// Strong "yes" needs the extrapolated ratio in `[1 − tol, 1]`; weak
    /// "yes" needs the worst ratio at most `1 + tol`.
    pub tol: f64,
    /// Nelder–Mead iterations around the best competitor.
    pub refine_iters: u64,
    /// A dip counts when it is below `1 − stderr_factor·stderr`.
    pub stderr_factor: f64,
    /// Lower limit on the dip threshold for exact masses.
    pub floor: f64,
    /// Radii for the weak-mode ratios; the strong-mode radii when absent.
    pub weak_radii: Option<Vec<f64>>,
}

impl Default for ModeOptions {
    fn default() -> Self {
        Self { tol: 1e-2, refine_iters: 50, stderr_factor: 5.0, floor: 1e-9, weak_radii: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StrongPoint {
    pub radius: f64,
    pub candidate_mass: f64,
    /// Approximation `M̂_r` of `sup_w μ(B_r(w))`.
    pub sup_mass: f64,
    pub argsup: Vec<f64>,
    pub ratio: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakEntry {
    pub competitor: Vec<f64>,
    pub ratios: Vec<f64>,
    pub limit: f64,
    pub limsup_estimate: f64,
    pub stderr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ModeVerdicts {
    pub strong: Verdict,
    pub global_weak: Verdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeClassification {
    pub candidate: Vec<f64>,
    pub norm: WeightedSeqSpace,
    pub radii: Vec<f64>,
    pub strong_ratio_curve: Vec<f64>,
    pub strong_points: Vec<StrongPoint>,
    pub strong_limit: f64,
    pub weak_radii: Vec<f64>,
    pub weak_entries: Vec<WeakEntry>,
    pub weak_worst_ratio: f64,
    pub weak_worst_competitor: Option<Vec<f64>>,
    pub verdicts: ModeVerdicts,
    pub caveats: Vec<String>,
}

impl ModeClassification {
    pub fn tables(&self) -> Vec<Table> {
        let mut s = Table::new("strong_ratio", &["radius", "ratio", "stderr", "sup_mass", "argsup"]);
        for p in &self.strong_points {
            s.push(vec![num(p.radius), num(p.ratio), num(p.stderr), num(p.sup_mass), vec_cell(&p.argsup)]);
        }
        let mut w = Table::new("weak_ratio", &["competitor", "radius", "ratio"]);
        for e in &self.weak_entries {
            for (r, v) in self.weak_radii.iter().zip(&e.ratios) {
                w.push(vec![vec_cell(&e.competitor), num(*r), num(*v)]);
            }
        }
        vec![s, w]
    }
}

struct NegLogMass<'a> {
    measure: &'a Measure,
    radius: f64,
    norm: &'a WeightedSeqSpace,
    opts: &'a BallMassOptions,
}

impl CostFunction for NegLogMass<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, ArgminError> {
        let m = self.measure.ball_mass(p, self.radius, self.norm, self.opts)?;
        Ok(if m.value > 0.0 { -m.log_value } else { f64::MAX })
    }
}

/// Nelder–Mead on `−log μ(B_r(·))` from `start`, initial simplex edge `r/2`.
fn refine(
    measure: &Measure,
    start: &[f64],
    radius: f64,
    norm: &WeightedSeqSpace,
    opts: &BallMassOptions,
    iters: u64,
) -> Option<(Vec<f64>, f64)> {
    if iters == 0 {
        return None;
    }
    let mut simplex = vec![start.to_vec()];
    for k in 0..start.len() {
        let mut p = start.to_vec();
        p[k] += 0.5 * radius;
        simplex.push(p);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(0.0).ok()?;
    let cost = NegLogMass { measure, radius, norm, opts };
    let res = Executor::new(cost, solver).configure(|s| s.max_iters(iters)).run().ok()?;
    let state = res.state();
    let p = state.get_best_param()?.clone();
    let c = state.get_best_cost();
    (c < f64::MAX).then(|| (p, (-c).exp()))
}

/// Strong and global weak mode verdicts for `candidate`.
///
/// `M_r` is approximated by the largest ball mass over `competitors` and the
/// candidate, followed by Nelder–Mead refinement around the best point.
/// Strong: "no" when the ratio dips below `1 − max(stderr_factor·stderr,
/// floor)` at one of the smaller half of the radii; "yes" when the
/// extrapolated ratio is within `[1 − tol, 1]`. Weak: the limsup of
/// `μ(B_r(u′))/μ(B_r(u))` is estimated per competitor by the larger of the
/// extrapolated limit and the ratios at the `fit_points` smallest radii.
pub fn classify_mode(
    measure: &Measure,
    candidate: &[f64],
    competitors: &[Vec<f64>],
    radii: &[f64],
    norm: &WeightedSeqSpace,
    opts: &BallMassOptions,
    mode_opts: &ModeOptions,
) -> Result<ModeClassification> {
    check_dim(measure.dim(), candidate.len())?;
    for c in competitors {
        check_dim(measure.dim(), c.len())?;
    }
    if radii.is_empty() {
        return Err(Error::InvalidInput("radius schedule is empty".into()));
    }
    let mut caveats = vec![
        "M_r is a sup over the competitor set plus local Nelder-Mead refinement, not over the whole space".to_string(),
        format!("balls in the weighted l^{} norm", norm.p()),
    ];
    let strong_points = radii
        .par_iter()
        .map(|&r| {
            let cm = measure.ball_mass(candidate, r, norm, opts)?;
            if !(cm.value > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "candidate has zero ball mass at radius {r}; it is not in the support"
                )));
            }
            let mut best = (candidate.to_vec(), cm.value, cm.stderr);
            for c in competitors {
                let m = measure.ball_mass(c, r, norm, opts)?;
                if m.value > best.1 {
                    best = (c.clone(), m.value, m.stderr);
                }
            }
            if let Some((p, v)) = refine(measure, &best.0, r, norm, opts, mode_opts.refine_iters) {
                if v > best.1 {
                    let se = measure.ball_mass(&p, r, norm, opts)?.stderr;
                    best = (p, v, se);
                }
            }
            let ratio = cm.value / best.1;
            let rel = |se: f64, v: f64| if v > 0.0 { se / v } else { 0.0 };
            let stderr = if best.0 == candidate { 0.0 } else { ratio * rel(cm.stderr, cm.value).hypot(rel(best.2, best.1)) };
            Ok(StrongPoint { radius: r, candidate_mass: cm.value, sup_mass: best.1, argsup: best.0, ratio, stderr })
        })
        .collect::<Result<Vec<_>>>()?;
    let strong_ratio_curve: Vec<f64> = strong_points.iter().map(|p| p.ratio).collect();
    let n = radii.len();
    let k = opts.fit_points.clamp(1, n);
    let strong_limit = if k >= 2 {
        let xs: Vec<f64> = radii[n - k..].iter().map(|r| r.powf(opts.fit_power)).collect();
        let ys: Vec<f64> = strong_ratio_curve[n - k..].iter().map(|r| r.ln()).collect();
        fit_line(&xs, &ys).map(|f| f.intercept.exp().min(1.0)).unwrap_or(f64::NAN)
    } else {
        strong_ratio_curve[n - 1]
    };
    let dip = strong_points[n / 2..]
        .iter()
        .any(|p| p.ratio < 1.0 - (mode_opts.stderr_factor * p.stderr).max(mode_opts.floor));
    let mut strong = if dip {
        Verdict::No
    } else if strong_limit >= 1.0 - mode_opts.tol {
        Verdict::Yes
    } else {
        Verdict::Inconclusive
    };

    let weak_radii = mode_opts.weak_radii.clone().unwrap_or_else(|| radii.to_vec());
    let wn = weak_radii.len();
    let wk = opts.fit_points.clamp(1, wn);
    let weak_entries = competitors
        .par_iter()
        .map(|c| {
            let est = ball_ratio_curve(measure, c, candidate, &weak_radii, norm, opts)?;
            let window_max = est.ratios[wn - wk..].iter().cloned().fold(0.0, f64::max);
            let limsup_estimate = est.limit.max(window_max);
            Ok(WeakEntry { competitor: c.clone(), ratios: est.ratios, limit: est.limit, limsup_estimate, stderr: est.limit_stderr })
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = weak_entries.iter().max_by(|a, b| a.limsup_estimate.total_cmp(&b.limsup_estimate));
    let (weak_worst_ratio, weak_worst_competitor, worst_se) = match worst {
        Some(e) => (e.limsup_estimate, Some(e.competitor.clone()), e.stderr),
        None => (1.0, None, 0.0),
    };
    let margin = mode_opts.tol.max(mode_opts.stderr_factor * worst_se);
    let global_weak = if weak_worst_ratio <= 1.0 + mode_opts.tol.max(3.0 * worst_se) {
        Verdict::Yes
    } else if weak_worst_ratio > 1.0 + margin {
        Verdict::No
    } else {
        Verdict::Inconclusive
    };
    if competitors.is_empty() {
        caveats.push("empty competitor set: the weak verdict is vacuous".into());
    }
    if strong == Verdict::Yes && global_weak != Verdict::Yes {
        strong = Verdict::Inconclusive;
        caveats.push("strong ratio near 1 but the weak test did not pass; strong downgraded to inconclusive".into());
    }
    Ok(ModeClassification {
        candidate: candidate.to_vec(),
        norm: norm.clone(),
        radii: radii.to_vec(),
        strong_ratio_curve,
        strong_points,
        strong_limit,
        weak_radii,
        weak_entries,
        weak_worst_ratio,
        weak_worst_competitor,
        verdicts: ModeVerdicts { strong, global_weak },
        caveats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{geometric_radii, Normal1D, RegisteredDensity};
    use crate::spaces::SpectralOperator;
    use approx::assert_abs_diff_eq;
    use serde_json::json;

    #[test]
    fn gaussian_om_values() {
        let mu = GaussianMeasure::new(vec![0.0, 0.0], SpectralOperator::diagonal(vec![4.0, 1.0]).unwrap()).unwrap();
        let om = gaussian_om(&mu);
        assert_eq!(om.eval(&[0.0, 0.0]), 0.0);
        assert_abs_diff_eq!(om.eval(&[2.0, 0.0]), 0.5, epsilon = 1e-15);
        let deg = GaussianMeasure::new(vec![0.0, 0.0], SpectralOperator::diagonal(vec![4.0, 0.0]).unwrap()).unwrap();
        let om = gaussian_om(&deg);
        assert_eq!(om.eval(&[0.0, 1.0]), f64::INFINITY);
        assert!(!om.in_domain(&[0.0, 1.0]));
        assert!(om.in_domain(&[3.0, 0.0]));
    }

    #[test]
    fn besov_om_values() {
        let om = besov_om(&BesovMeasure::new(1.0, 1, 1.0, 3).unwrap());
        assert_eq!(om.eval(&[0.0; 3]), 0.0);
        assert_abs_diff_eq!(om.eval(&[1.0, 0.0, 0.0]), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(om.eval(&[1.0, 1.0, 0.0]), 1.0 + 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn posterior_minimiser_is_posterior_mean() {
        let prior: Arc<dyn OmFunctional> = Arc::new(gaussian_om(&GaussianMeasure::standard(1)));
        let phi = Potential::new("misfit", 1, |u| 0.5 * (2.0 - u[0]).powi(2), None).unwrap();
        let post = posterior_om(prior, phi).unwrap();
        let xs: Vec<f64> = (0..=2000).map(|i| i as f64 / 1000.0).collect();
        let best = xs.iter().cloned().min_by(|a, b| post.eval(&[*a]).total_cmp(&post.eval(&[*b]))).unwrap();
        assert_abs_diff_eq!(best, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn difference_check_standard_normal() {
        let m = Measure::Density1D(RegisteredDensity::from_name("normal", &json!({})).unwrap());
        let om = FnOm::neg_log_density(Arc::new(Normal1D::new(0.0, 1.0).unwrap()), 0.0).unwrap();
        let opts = BallMassOptions { fit_power: 2.0, ..Default::default() };
        let rep = om_difference_check(&m, &om, &[1.0], &[0.0], &geometric_radii(0.1, 8), &m.default_norm(), &opts, 1e-9)
            .unwrap();
        assert_abs_diff_eq!(rep.expected, (-0.5f64).exp(), epsilon = 1e-14);
        assert_eq!(rep.verdict, CheckVerdict::Pass, "{rep:?}");
    }

    #[test]
    fn standard_normal_mode() {
        let m = Measure::Density1D(RegisteredDensity::from_name("normal", &json!({})).unwrap());
        let comps: Vec<Vec<f64>> = [-1.0, -0.3, 0.2, 0.5, 2.0].iter().map(|x| vec![*x]).collect();
        let c = classify_mode(&m, &[0.0], &comps, &geometric_radii(0.1, 8), &m.default_norm(), &Default::default(), &Default::default())
            .unwrap();
        assert_eq!(c.verdicts, ModeVerdicts { strong: Verdict::Yes, global_weak: Verdict::Yes });
        let c = classify_mode(&m, &[0.5], &comps, &geometric_radii(0.1, 8), &m.default_norm(), &Default::default(), &Default::default())
            .unwrap();
        assert_eq!(c.verdicts.strong, Verdict::No);
        assert_eq!(c.verdicts.global_weak, Verdict::No);
    }

    #[test]
    fn degenerate_direction_has_property_m() {
        let mu = GaussianMeasure::new(vec![0.0, 0.0], SpectralOperator::diagonal(vec![1.0, 0.0]).unwrap()).unwrap();
        let om = gaussian_om(&mu);
        let m = Measure::Gaussian(mu);
        let rep = m_property_probe(&m, &om, &[vec![0.0, 1.0]], &geometric_radii(0.5, 6), &m.default_norm(), &Default::default())
            .unwrap();
        assert_eq!(rep.verdict, CheckVerdict::Pass);
        assert_eq!(rep.entries[0].smallest_ratio, 0.0);
        assert!(m_property_probe(&m, &om, &[vec![1.0, 0.0]], &[0.1], &m.default_norm(), &Default::default()).is_err());
    }
}
