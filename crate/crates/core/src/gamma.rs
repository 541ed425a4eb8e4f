//! Sampled probes of Γ-convergence, equicoercivity and continuous
//! convergence, the explicit recovery sequences for Gaussian and Besov-1
//! families, and clustering of minimiser sequences.
//!
//! A "pass" means no counterexample was found among the sampled paths; a
//! "fail" always carries a witness.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bip::Potential;
use crate::error::{check_dim, Error, Result};
use crate::measures::{BesovMeasure, GaussianMeasure};
use crate::numerics::{lp_ball_sampler, rng_for, uniform_in_lp_ball};
use crate::om::{BesovOm, GaussianOm, OmFunctional, PosteriorOm};
use crate::report::{num, vec_cell, CheckVerdict, Table};
use crate::spaces::{DEFAULT_RANK_TOL, DEFAULT_RANGE_TOL};

type MemberFn = Arc<dyn Fn(usize) -> Arc<dyn OmFunctional> + Send + Sync>;

/// `n ↦ F_n` for `n ≥ 1` together with the candidate limit `F`.
#[derive(Clone)]
pub struct FunctionalSequence {
    name: String,
    dim: usize,
    member: MemberFn,
    limit: Arc<dyn OmFunctional>,
}

impl std::fmt::Debug for FunctionalSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FunctionalSequence({}, dim={})", self.name, self.dim)
    }
}

impl FunctionalSequence {
    pub fn new(
        name: impl Into<String>,
        limit: Arc<dyn OmFunctional>,
        member: impl Fn(usize) -> Arc<dyn OmFunctional> + Send + Sync + 'static,
    ) -> Result<Self> {
        let dim = limit.dim();
        check_dim(dim, member(1).dim())?;
        Ok(Self { name: name.into(), dim, member: Arc::new(member), limit })
    }

    /// `F_n = F` for all `n`.
    pub fn constant(f: Arc<dyn OmFunctional>) -> Self {
        let g = f.clone();
        Self { name: format!("constant {}", f.name()), dim: f.dim(), member: Arc::new(move |_| g.clone()), limit: f }
    }

    /// Gaussian OM functionals of `n ↦ N(m_n, C_n)` against `N(m, C)`.
    pub fn gaussian(
        limit: GaussianMeasure,
        member: impl Fn(usize) -> GaussianMeasure + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new("gaussian family", Arc::new(GaussianOm::new(limit)), move |n| Arc::new(GaussianOm::new(member(n))))
    }

    /// Besov OM functionals of `n ↦ B^{s_n}` against `B^{s_∞}`.
    pub fn besov(limit: BesovMeasure, member: impl Fn(usize) -> BesovMeasure + Send + Sync + 'static) -> Result<Self> {
        Self::new("besov family", Arc::new(BesovOm::new(limit)), move |n| Arc::new(BesovOm::new(member(n))))
    }

    /// `F_n + G_n` against `F + G`.
    pub fn plus_potentials(
        &self,
        g: impl Fn(usize) -> Potential + Send + Sync + 'static,
        g_limit: Potential,
    ) -> Result<Self> {
        let limit: Arc<dyn OmFunctional> = Arc::new(PosteriorOm::new(self.limit.clone(), g_limit)?);
        let member = self.member.clone();
        Self::new(format!("{} + potentials", self.name), limit, move |n| {
            Arc::new(PosteriorOm::new(member(n), g(n)).expect("dimensions agree")) as Arc<dyn OmFunctional>
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn member(&self, n: usize) -> Arc<dyn OmFunctional> {
        (self.member)(n)
    }

    pub fn limit(&self) -> &Arc<dyn OmFunctional> {
        &self.limit
    }
}

/// An explicit sequence `n ↦ x_n`.
pub type PathFn = Arc<dyn Fn(usize) -> Vec<f64> + Send + Sync>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiminfOptions {
    /// Last index `N`; the window is `n ∈ [N/2, N]`.
    pub n_max: usize,
    pub random_paths: usize,
    pub alphas: Vec<f64>,
    /// `‖x_n − x‖ = scale · n^{-α}`.
    pub scale: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for LiminfOptions {
    fn default() -> Self {
        Self { n_max: 200, random_paths: 64, alphas: vec![0.5, 1.0, 2.0], scale: 1.0, tol: 1e-9, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LiminfEntry {
    pub path: String,
    /// `min_{n∈[N/2,N]} F_n(x_n) − F(x)`.
    pub margin: f64,
    /// Same quantity over the preceding window `[N/4, N/2)`.
    pub early_margin: f64,
    pub violated: bool,
    pub witness_n: usize,
    pub witness_point: Vec<f64>,
    pub witness_value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LiminfProbe {
    pub x: Vec<f64>,
    pub limit_value: f64,
    pub paths_sampled: usize,
    pub violations: usize,
    pub worst_margin: f64,
    /// Smallest window minimum over all paths and `F(x)`: an upper estimate
    /// of the Γ-limit at `x`.
    pub envelope_estimate: f64,
    pub entries: Vec<LiminfEntry>,
    pub verdict: CheckVerdict,
    pub notes: Vec<String>,
}

const SHRINK_FACTOR: f64 = 0.75;

fn window(n_max: usize) -> std::ops::RangeInclusive<usize> {
    (n_max / 2).max(1)..=n_max.max(1)
}

/// Checks `F(x) ≤ min_{n∈[N/2,N]} F_n(x_n) + tol` along the constant path,
/// `random_paths` random straight-line paths with decay `n^{-α}` (cycling
/// through `alphas`) and the given adversarial paths. A deficit that shrinks
/// by at least a quarter from the window `[N/4, N/2)` is not a violation.
pub fn gamma_liminf_probe(
    seq: &FunctionalSequence,
    x: &[f64],
    adversarial: &[(String, PathFn)],
    opts: &LiminfOptions,
) -> Result<LiminfProbe> {
    check_dim(seq.dim(), x.len())?;
    if opts.alphas.is_empty() && opts.random_paths > 0 {
        return Err(Error::InvalidParameter("at least one decay rate is required".into()));
    }
    let fx = seq.limit().eval(x);
    let mut paths: Vec<(String, PathFn)> = Vec::new();
    let xc = x.to_vec();
    paths.push(("constant".into(), Arc::new(move |_| xc.clone())));
    for p in 0..opts.random_paths {
        let mut rng = rng_for(opts.seed, &[0x6A11, p as u64]);
        let mut dir: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|d| *d /= norm);
        let alpha = opts.alphas[p % opts.alphas.len()];
        let (xc, c) = (x.to_vec(), opts.scale);
        paths.push((
            format!("random#{p}(alpha={alpha})"),
            Arc::new(move |n| xc.iter().zip(&dir).map(|(a, d)| a + c * (n as f64).powf(-alpha) * d).collect()),
        ));
    }
    paths.extend(adversarial.iter().cloned());
    let entries: Vec<LiminfEntry> = paths
        .par_iter()
        .map(|(label, path)| {
            let mut best = (usize::MAX, Vec::new(), f64::INFINITY);
            for n in window(opts.n_max) {
                let xn = path(n);
                let v = seq.member(n).eval(&xn);
                if v < best.2 || best.0 == usize::MAX {
                    best = (n, xn, v);
                }
            }
            let early = (opts.n_max / 4).max(1)..(opts.n_max / 2).max(1);
            let early_best = early.map(|n| seq.member(n).eval(&path(n))).fold(f64::INFINITY, f64::min);
            let to_margin = |v: f64| if fx.is_finite() { v - fx } else if v.is_infinite() { 0.0 } else { f64::NAN };
            let (margin, early_margin) = (to_margin(best.2), to_margin(early_best));
            // deficits that shrink between windows are finite-n effects
            let shrinking = early_margin.is_finite() && margin > SHRINK_FACTOR * early_margin;
            LiminfEntry {
                path: label.clone(),
                margin,
                early_margin,
                violated: margin < -opts.tol && !shrinking,
                witness_n: best.0,
                witness_point: best.1,
                witness_value: best.2,
            }
        })
        .collect();
    let violations = entries.iter().filter(|e| e.violated).count();
    let worst_margin = entries.iter().map(|e| e.margin).filter(|m| !m.is_nan()).fold(f64::INFINITY, f64::min);
    let envelope_estimate = entries.iter().map(|e| e.witness_value).fold(fx, f64::min);
    let mut notes = vec![format!("{} paths, window n in [{}, {}]", entries.len(), opts.n_max / 2, opts.n_max)];
    let verdict = if !fx.is_finite() {
        notes.push("F(x) is infinite: a finite window minimum does not decide divergence".into());
        CheckVerdict::Inconclusive
    } else {
        CheckVerdict::from_bool(violations == 0)
    };
    Ok(LiminfProbe {
        x: x.to_vec(),
        limit_value: fx,
        paths_sampled: entries.len(),
        violations,
        worst_margin,
        envelope_estimate,
        entries,
        verdict,
        notes,
    })
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn l2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `u_n = m_n + A_n A†(u − m)` with `A = C^{1/2}`, or the constant sequence
/// when `u − m` is outside the range of `A`.
pub fn gaussian_recovery_sequence(mu_seq: &[GaussianMeasure], mu_limit: &GaussianMeasure, u: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_dim(mu_limit.dim(), u.len())?;
    let cov = mu_limit.covariance();
    let d = sub(u, mu_limit.mean());
    if !cov.in_range(&d, DEFAULT_RANK_TOL, DEFAULT_RANGE_TOL)? {
        return Ok(vec![u.to_vec(); mu_seq.len()]);
    }
    let v = cov.sqrt_pinv_apply(&d, DEFAULT_RANK_TOL)?;
    mu_seq
        .iter()
        .map(|mu| {
            check_dim(mu_limit.dim(), mu.dim())?;
            let av = mu.covariance().sqrt_apply(&v)?;
            Ok(av.iter().zip(mu.mean()).map(|(a, m)| a + m).collect())
        })
        .collect()
}

/// `u^{(n)}_k = γ^{(n)}_k u_k / γ^{(∞)}_k`.
pub fn besov_recovery_sequence(mu_seq: &[BesovMeasure], mu_limit: &BesovMeasure, u: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_dim(mu_limit.dim(), u.len())?;
    mu_seq
        .iter()
        .map(|mu| {
            check_dim(mu_limit.dim(), mu.dim())?;
            Ok(u.iter().zip(mu.gamma()).zip(mu_limit.gamma()).map(|((x, gn), g)| gn * x / g).collect())
        })
        .collect()
}

/// `(‖u^{(n)} − u‖_{ℓ¹_δ}, I^{(∞)}(u)·‖γ^{(n)} − γ^{(∞)}‖_{ℓ¹_δ})` with `δ` of
/// the limit measure.
pub fn besov_recovery_bound(mu_n: &BesovMeasure, mu_limit: &BesovMeasure, u: &[f64], u_n: &[f64]) -> Result<(f64, f64)> {
    let amb = mu_limit.ambient_space();
    let dist = amb.distance(u_n, u)?;
    let i = BesovOm::new(mu_limit.clone()).eval(u);
    Ok((dist, i * amb.distance(mu_n.gamma(), mu_limit.gamma())?))
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoveryCheck {
    pub x: Vec<f64>,
    pub limit_value: f64,
    /// `max F_n(x_n)` over the trailing half of the sequence.
    pub limsup_estimate: f64,
    pub gap: f64,
    pub final_distance: f64,
    pub verdict: CheckVerdict,
}

/// Limsup inequality along a recovery sequence given at `indices`.
pub fn recovery_check(
    seq: &FunctionalSequence,
    x: &[f64],
    indices: &[usize],
    recovery: &[Vec<f64>],
    tol: f64,
) -> Result<RecoveryCheck> {
    if indices.len() != recovery.len() || indices.is_empty() {
        return Err(Error::InvalidInput("recovery sequence and indices must be non-empty and of equal length".into()));
    }
    let fx = seq.limit().eval(x);
    let start = indices.len() / 2;
    let limsup_estimate = indices[start..]
        .iter()
        .zip(&recovery[start..])
        .map(|(&n, xn)| seq.member(n).eval(xn))
        .fold(f64::NEG_INFINITY, f64::max);
    let gap = limsup_estimate - fx;
    let final_distance = l2(&sub(recovery.last().unwrap(), x));
    let verdict = if fx.is_infinite() { CheckVerdict::Pass } else { CheckVerdict::from_bool(gap <= tol) };
    Ok(RecoveryCheck { x: x.to_vec(), limit_value: fx, limsup_estimate, gap, final_distance, verdict })
}

#[derive(Clone, Debug, Serialize)]
pub struct EquicoercivityEntry {
    pub t: f64,
    pub members: usize,
    /// Members left out because the uniform bound only covers `n` large
    /// enough.
    pub excluded_members: Vec<usize>,
    pub samples: usize,
    pub violations: usize,
    /// Largest `bound value / bound` seen; at most one on success.
    pub max_bound_ratio: f64,
    pub witness: Option<Vec<f64>>,
    pub verdict: CheckVerdict,
    pub bound: String,
}

const EQUI_SLACK: f64 = 1e-12;

/// Samples `{I_n ≤ t}` for each member (uniform in the Cameron–Martin ball
/// of radius `√(2t)` plus 10% boundary points) and checks membership,
/// `‖A_n†(u − m_n)‖ ≤ √(2t)` and the uniform bound
/// `‖u − m‖ ≤ sup_n ‖A_n‖ √(2t) + sup_n ‖m_n − m‖`.
pub fn gaussian_equicoercivity_probe(
    mu_seq: &[GaussianMeasure],
    mu_limit: &GaussianMeasure,
    t: f64,
    samples: usize,
    seed: u64,
) -> Result<EquicoercivityEntry> {
    let bound = format!("||A_n^+(u - m_n)|| <= sqrt(2t) and ||u - m|| <= R(t)");
    let empty = |members| EquicoercivityEntry {
        t,
        members,
        excluded_members: vec![],
        samples: 0,
        violations: 0,
        max_bound_ratio: 0.0,
        witness: None,
        verdict: CheckVerdict::Pass,
        bound: bound.clone(),
    };
    if t < 0.0 || mu_seq.is_empty() {
        return Ok(empty(mu_seq.len()));
    }
    let rad = (2.0 * t).sqrt();
    let uniform_radius = mu_seq.iter().map(|m| m.covariance().operator_norm().sqrt()).fold(0.0, f64::max) * rad
        + mu_seq.iter().map(|m| l2(&sub(m.mean(), mu_limit.mean()))).fold(0.0, f64::max);
    let per = samples.div_ceil(mu_seq.len());
    let gamma2 = lp_ball_sampler(2.0)?;
    let results: Vec<(usize, usize, f64, Option<Vec<f64>>)> = mu_seq
        .par_iter()
        .enumerate()
        .map(|(i, mu)| {
            let cov = mu.covariance();
            let modes: Vec<usize> = (0..mu.dim()).filter(|&k| !cov.is_null_mode(k, DEFAULT_RANK_TOL)).collect();
            let om = GaussianOm::new(mu.clone());
            let mut rng = rng_for(seed, &[0xE9C0, i as u64]);
            let mut xi = vec![0.0; modes.len()];
            let (mut bad, mut worst, mut witness) = (0, 0.0f64, None);
            for s in 0..per {
                if modes.is_empty() {
                    break;
                }
                uniform_in_lp_ball(&mut rng, 2.0, gamma2.as_ref(), &mut xi);
                if s % 10 == 0 {
                    let nrm = l2(&xi);
                    xi.iter_mut().for_each(|v| *v /= nrm);
                }
                let mut c = vec![0.0; mu.dim()];
                for (j, &k) in modes.iter().enumerate() {
                    c[k] = rad * xi[j] * cov.eigenvalues()[k].sqrt();
                }
                let u: Vec<f64> = cov.from_eigen(&c).iter().zip(mu.mean()).map(|(a, m)| a + m).collect();
                let inside = om.eval(&u) <= t * (1.0 + 1e-9) + EQUI_SLACK;
                let cm = l2(&om.whitened(&u).expect("dimension checked"));
                let r1 = if rad > 0.0 { cm / rad } else { 0.0 };
                let r2 = if uniform_radius > 0.0 { l2(&sub(&u, mu_limit.mean())) / uniform_radius } else { 0.0 };
                let ratio = r1.max(r2);
                worst = worst.max(ratio);
                if !inside || ratio > 1.0 + 1e-9 {
                    bad += 1;
                    witness.get_or_insert(u);
                }
            }
            (per, bad, worst, witness)
        })
        .collect();
    let mut entry = empty(mu_seq.len());
    for (n, bad, worst, w) in results {
        entry.samples += n;
        entry.violations += bad;
        entry.max_bound_ratio = entry.max_bound_ratio.max(worst);
        if entry.witness.is_none() {
            entry.witness = w;
        }
    }
    entry.verdict = CheckVerdict::from_bool(entry.violations == 0);
    Ok(entry)
}

/// Samples `{Σ|u_k|/γ^{(n)}_k ≤ t}` (uniform in the weighted `ℓ¹` ball plus
/// 10% boundary points) for each member with `s^{(n)} ≥ s̄ = s^{(∞)} − η/2`
/// and checks `|u_k| ≤ γ̄_k t` with `γ̄_k = k^{1/2 − s̄/d}`.
pub fn besov_equicoercivity_probe(
    mu_seq: &[(usize, BesovMeasure)],
    mu_limit: &BesovMeasure,
    t: f64,
    samples: usize,
    seed: u64,
) -> Result<EquicoercivityEntry> {
    let s_bar = mu_limit.s() - 0.5 * mu_limit.eta();
    let dim = mu_limit.dim();
    let gamma_bar: Vec<f64> = (1..=dim).map(|k| (k as f64).powf(0.5 - s_bar / mu_limit.d() as f64)).collect();
    let (kept, excluded): (Vec<_>, Vec<_>) = mu_seq.iter().partition(|(_, mu)| mu.s() >= s_bar);
    let mut entry = EquicoercivityEntry {
        t,
        members: kept.len(),
        excluded_members: excluded.iter().map(|(n, _)| *n).collect(),
        samples: 0,
        violations: 0,
        max_bound_ratio: 0.0,
        witness: None,
        verdict: CheckVerdict::Pass,
        bound: format!("|u_k| <= k^(1/2 - s_bar/d) t, s_bar = {s_bar}"),
    };
    if t < 0.0 || kept.is_empty() {
        return Ok(entry);
    }
    let per = samples.div_ceil(kept.len());
    let g1 = lp_ball_sampler(1.0)?;
    let results: Vec<(usize, f64, Option<Vec<f64>>)> = kept
        .par_iter()
        .map(|(n, mu)| {
            check_dim(dim, mu.dim())?;
            let om = BesovOm::new(mu.clone());
            let mut rng = rng_for(seed, &[0xE9C1, *n as u64]);
            let mut xi = vec![0.0; dim];
            let (mut bad, mut worst, mut witness) = (0, 0.0f64, None);
            for s in 0..per {
                uniform_in_lp_ball(&mut rng, 1.0, g1.as_ref(), &mut xi);
                if s % 10 == 0 {
                    let nrm: f64 = xi.iter().map(|v| v.abs()).sum();
                    xi.iter_mut().for_each(|v| *v /= nrm);
                }
                let u: Vec<f64> = xi.iter().zip(mu.gamma()).map(|(x, g)| t * g * x).collect();
                let inside = om.eval(&u) <= t * (1.0 + 1e-9) + EQUI_SLACK;
                let ratio = if t > 0.0 {
                    u.iter().zip(&gamma_bar).map(|(x, g)| x.abs() / (g * t)).fold(0.0, f64::max)
                } else {
                    0.0
                };
                worst = worst.max(ratio);
                if !inside || ratio > 1.0 + 1e-12 {
                    bad += 1;
                    witness.get_or_insert(u);
                }
            }
            Ok((bad, worst, witness))
        })
        .collect::<Result<_>>()?;
    for (bad, worst, w) in results {
        entry.samples += per;
        entry.violations += bad;
        entry.max_bound_ratio = entry.max_bound_ratio.max(worst);
        if entry.witness.is_none() {
            entry.witness = w;
        }
    }
    entry.verdict = CheckVerdict::from_bool(entry.violations == 0);
    Ok(entry)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterOptions {
    pub cluster_tol: f64,
    /// Distance from a cluster point to the nearest limit argmin.
    pub tol: f64,
    /// Allowed `|F_N(x_N) − min F|`.
    pub value_tol: f64,
    /// Fraction of the sequence forming the trailing window.
    pub window_fraction: f64,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        Self { cluster_tol: 1e-3, tol: 1e-4, value_tol: 1e-3, window_fraction: 0.25 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Cluster {
    /// Latest member of the cluster.
    pub representative: Vec<f64>,
    pub index: usize,
    pub size: usize,
    pub diameter: f64,
    pub distance_to_argmin: f64,
    pub limit_value: f64,
    pub is_argmin: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeConvergenceReport {
    pub window_indices: Vec<usize>,
    pub clusters: Vec<Cluster>,
    pub limit_min: f64,
    /// `|F_N(x_N) − min F|` at the last index.
    pub min_value_gap: f64,
    pub verdict: CheckVerdict,
    pub diagnostic: Option<String>,
}

impl ModeConvergenceReport {
    pub fn tables(&self) -> Vec<Table> {
        let mut t = Table::new("clusters", &["index", "representative", "size", "diameter", "distance_to_argmin", "is_argmin"]);
        for c in &self.clusters {
            t.push(vec![
                c.index.to_string(),
                vec_cell(&c.representative),
                c.size.to_string(),
                num(c.diameter),
                num(c.distance_to_argmin),
                c.is_argmin.to_string(),
            ]);
        }
        vec![t]
    }
}

/// Single-linkage clusters (radius `cluster_tol`) of the trailing window of
/// minimisers; each cluster's latest member must lie within `tol` of an
/// argmin of the limit, and the last minimum value within `value_tol` of
/// `min F`.
pub fn mode_convergence_check(
    seq: &FunctionalSequence,
    indices: &[usize],
    minimizers: &[Vec<f64>],
    limit_argmins: &[Vec<f64>],
    opts: &ClusterOptions,
) -> Result<ModeConvergenceReport> {
    if indices.len() != minimizers.len() || indices.is_empty() {
        return Err(Error::InvalidInput("minimizers and indices must be non-empty and of equal length".into()));
    }
    if limit_argmins.is_empty() {
        return Err(Error::InvalidInput("at least one limit argmin is required".into()));
    }
    let len = indices.len();
    let w = ((len as f64 * opts.window_fraction).ceil() as usize).clamp(1, len);
    let start = len - w;
    let pts = &minimizers[start..];
    // union-find over the window
    let mut parent: Vec<usize> = (0..w).collect();
    fn find(p: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for i in 0..w {
        for j in i + 1..w {
            if l2(&sub(&pts[i], &pts[j])) <= opts.cluster_tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let limit = seq.limit();
    let limit_min = limit_argmins.iter().map(|a| limit.eval(a)).fold(f64::INFINITY, f64::min);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of: Vec<Option<usize>> = vec![None; w];
    for i in 0..w {
        let r = find(&mut parent, i);
        match root_of[r] {
            Some(g) => groups[g].push(i),
            None => {
                root_of[r] = Some(groups.len());
                groups.push(vec![i]);
            }
        }
    }
    let clusters: Vec<Cluster> = groups
        .iter()
        .map(|g| {
            let last = *g.last().unwrap();
            let rep = pts[last].clone();
            let diameter = g
                .iter()
                .flat_map(|&a| g.iter().map(move |&b| (a, b)))
                .map(|(a, b)| l2(&sub(&pts[a], &pts[b])))
                .fold(0.0, f64::max);
            let distance_to_argmin = limit_argmins.iter().map(|a| l2(&sub(a, &rep))).fold(f64::INFINITY, f64::min);
            let limit_value = limit.eval(&rep);
            let is_argmin = distance_to_argmin <= opts.tol && limit_value <= limit_min + opts.value_tol;
            Cluster { representative: rep, index: indices[start + last], size: g.len(), diameter, distance_to_argmin, limit_value, is_argmin }
        })
        .collect();
    let n_last = *indices.last().unwrap();
    let min_value_gap = (seq.member(n_last).eval(minimizers.last().unwrap()) - limit_min).abs();
    let (verdict, diagnostic) = if clusters.len() > (w / 2).max(1) {
        (CheckVerdict::Inconclusive, Some("no convergent subsequence found at this N".to_string()))
    } else {
        (CheckVerdict::from_bool(clusters.iter().all(|c| c.is_argmin) && min_value_gap <= opts.value_tol), None)
    };
    Ok(ModeConvergenceReport {
        window_indices: indices[start..].to_vec(),
        clusters,
        limit_min,
        min_value_gap,
        verdict,
        diagnostic,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuityOptions {
    /// Neighbourhood radius `ρ_n = rho0 · n^{-1/2}`.
    pub rho0: f64,
    pub samples: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for ContinuityOptions {
    fn default() -> Self {
        Self { rho0: 1.0, samples: 200, tol: 1e-6, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuityEntry {
    pub point: Vec<f64>,
    pub indices: Vec<usize>,
    pub radii: Vec<f64>,
    /// `max |φ_n(x′) − φ(x)|` over the sampled neighbourhood, per index.
    pub suprema: Vec<f64>,
    /// Fraction of ordered pairs `i < j` with `sup_j ≤ sup_i`.
    pub trend_fraction: f64,
    pub verdict: CheckVerdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuityReport {
    pub entries: Vec<ContinuityEntry>,
    pub verdict: CheckVerdict,
}

impl ContinuityReport {
    pub fn tables(&self) -> Vec<Table> {
        let mut t = Table::new("continuous_convergence", &["point", "n", "radius", "sup_abs_difference"]);
        for e in &self.entries {
            for i in 0..e.indices.len() {
                t.push(vec![vec_cell(&e.point), e.indices[i].to_string(), num(e.radii[i]), num(e.suprema[i])]);
            }
        }
        vec![t]
    }
}

/// Extra neighbourhood points for index `n` around `x`.
pub type WitnessFn = dyn Fn(usize, &[f64]) -> Vec<Vec<f64>> + Send + Sync;

/// Sampled continuous convergence `φ_n → φ`: for each point, the supremum
/// of `|φ_n(x′) − φ(x)|` over `x` and `samples` uniform points of the ball
/// of radius `ρ_n` (plus any witness points inside it). Passes when the last
/// supremum is below `tol`, or the suprema trend down (75% of pairs) and the
/// last is below a tenth of the first.
pub fn continuous_convergence_probe(
    phi_seq: &(dyn Fn(usize) -> Potential + Sync),
    indices: &[usize],
    phi_limit: &Potential,
    points: &[Vec<f64>],
    witnesses: Option<&WitnessFn>,
    opts: &ContinuityOptions,
) -> Result<ContinuityReport> {
    if indices.is_empty() {
        return Err(Error::InvalidInput("index list is empty".into()));
    }
    let g2 = lp_ball_sampler(2.0)?;
    let entries = points
        .iter()
        .enumerate()
        .map(|(pi, x)| {
            check_dim(phi_limit.dim(), x.len())?;
            let fx = phi_limit.eval(x);
            let radii: Vec<f64> = indices.iter().map(|&n| opts.rho0 / (n as f64).sqrt()).collect();
            let suprema: Vec<f64> = indices
                .par_iter()
                .zip(&radii)
                .map(|(&n, &rho)| {
                    let phi = phi_seq(n);
                    let mut rng = rng_for(opts.seed, &[0xC0A7, pi as u64, n as u64]);
                    let mut xi = vec![0.0; x.len()];
                    let mut sup = (phi.eval(x) - fx).abs();
                    for _ in 0..opts.samples {
                        uniform_in_lp_ball(&mut rng, 2.0, g2.as_ref(), &mut xi);
                        let xp: Vec<f64> = x.iter().zip(&xi).map(|(a, b)| a + rho * b).collect();
                        sup = sup.max((phi.eval(&xp) - fx).abs());
                    }
                    if let Some(wf) = witnesses {
                        for xp in wf(n, x) {
                            if l2(&sub(&xp, x)) <= rho {
                                sup = sup.max((phi.eval(&xp) - fx).abs());
                            }
                        }
                    }
                    sup
                })
                .collect();
            let m = suprema.len();
            let pairs = m * (m - 1) / 2;
            let good = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).filter(|&(i, j)| suprema[j] <= suprema[i]).count();
            let trend_fraction = if pairs == 0 { 1.0 } else { good as f64 / pairs as f64 };
            let (first, last) = (suprema[0], suprema[m - 1]);
            let ok = last <= opts.tol || (trend_fraction >= 0.75 && last <= 0.1 * first);
            Ok(ContinuityEntry { point: x.clone(), indices: indices.to_vec(), radii, suprema, trend_fraction, verdict: CheckVerdict::from_bool(ok) })
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = entries.iter().fold(CheckVerdict::Pass, |v, e| v.and(e.verdict));
    Ok(ContinuityReport { entries, verdict })
}

/// `n ↦ φ ∘ P_n`.
pub fn projection_sequence(phi: Potential) -> impl Fn(usize) -> Potential + Send + Sync {
    move |n| phi.compose_projection(n)
}

#[derive(Clone, Debug, Serialize)]
pub struct SumRuleReport {
    pub liminf: Vec<LiminfProbe>,
    pub recovery: Vec<RecoveryCheck>,
    pub continuity: ContinuityReport,
    pub verdict: CheckVerdict,
}

/// Liminf and recovery probes for `F_n + G_n` against `F + G`, alongside the
/// continuous-convergence probe of `G_n → G`. `recovery(x)` returns the
/// recovery sequence of `F` at `x` for `indices`.
pub fn sum_rule_check(
    f_seq: &FunctionalSequence,
    g_seq: impl Fn(usize) -> Potential + Send + Sync + Clone + 'static,
    g_limit: &Potential,
    points: &[Vec<f64>],
    indices: &[usize],
    recovery: Option<&dyn Fn(&[f64]) -> Result<Vec<Vec<f64>>>>,
    liminf_opts: &LiminfOptions,
    cont_opts: &ContinuityOptions,
    tol: f64,
) -> Result<SumRuleReport> {
    let sum = f_seq.plus_potentials(g_seq.clone(), g_limit.clone())?;
    let liminf = points.iter().map(|x| gamma_liminf_probe(&sum, x, &[], liminf_opts)).collect::<Result<Vec<_>>>()?;
    let recovery = match recovery {
        Some(rf) => points
            .iter()
            .map(|x| recovery_check(&sum, x, indices, &rf(x)?, tol))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let continuity = continuous_convergence_probe(&g_seq, indices, g_limit, points, None, cont_opts)?;
    let verdict = liminf
        .iter()
        .map(|p| p.verdict)
        .chain(recovery.iter().map(|r| r.verdict))
        .fold(continuity.verdict, CheckVerdict::and);
    Ok(SumRuleReport { liminf, recovery, continuity, verdict })
}

#[derive(Clone, Debug, Serialize)]
pub struct GammaProbeSummary {
    pub probe: String,
    pub verdict: CheckVerdict,
    pub margin: f64,
    pub witnesses: usize,
    pub detail: Value,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GammaReport {
    pub probes: Vec<GammaProbeSummary>,
}

impl GammaReport {
    pub fn push(&mut self, probe: impl Into<String>, verdict: CheckVerdict, margin: f64, witnesses: usize, detail: &impl Serialize) {
        self.probes.push(GammaProbeSummary {
            probe: probe.into(),
            verdict,
            margin,
            witnesses,
            detail: serde_json::to_value(detail).unwrap_or(Value::Null),
        });
    }

    pub fn verdict(&self) -> CheckVerdict {
        self.probes.iter().fold(CheckVerdict::Pass, |v, p| v.and(p.verdict))
    }

    pub fn tables(&self) -> Vec<Table> {
        let mut t = Table::new("gamma_summary", &["probe", "verdict", "margin", "witnesses"]);
        for p in &self.probes {
            t.push(vec![p.probe.clone(), format!("{:?}", p.verdict).to_lowercase(), num(p.margin), p.witnesses.to_string()]);
        }
        vec![t]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterexamples::SpikeFamily;
    use crate::om::FnOm;
    use crate::spaces::SpectralOperator;
    use approx::assert_abs_diff_eq;

    fn gauss(m: Vec<f64>, ev: Vec<f64>) -> GaussianMeasure {
        GaussianMeasure::new(m, SpectralOperator::diagonal(ev).unwrap()).unwrap()
    }

    #[test]
    fn scalar_gaussian_recovery() {
        let lim = gauss(vec![0.0], vec![1.0]);
        let seq: Vec<GaussianMeasure> = (1..=5).map(|n| gauss(vec![0.0], vec![(1.0 + 1.0 / n as f64).powi(2)])).collect();
        let rec = gaussian_recovery_sequence(&seq, &lim, &[1.0]).unwrap();
        for (n, (u, mu)) in rec.iter().zip(&seq).enumerate() {
            assert_abs_diff_eq!(u[0], 1.0 + 1.0 / (n + 1) as f64, epsilon = 1e-14);
            assert_abs_diff_eq!(GaussianOm::new(mu.clone()).eval(u), 0.5, epsilon = 1e-14);
        }
        let deg = gauss(vec![0.0, 0.0], vec![1.0, 0.0]);
        assert_eq!(gaussian_recovery_sequence(&[deg.clone()], &deg, &[0.0, 1.0]).unwrap(), vec![vec![0.0, 1.0]]);
    }

    #[test]
    fn besov_recovery_second_coordinate() {
        let lim = BesovMeasure::new(1.0, 1, 1.0, 3).unwrap();
        let seq: Vec<BesovMeasure> = (1..=4).map(|n| BesovMeasure::new(1.0 + 1.0 / n as f64, 1, 1.0, 3).unwrap()).collect();
        let rec = besov_recovery_sequence(&seq, &lim, &[0.0, 1.0, 0.0]).unwrap();
        for (n, u) in rec.iter().enumerate() {
            assert_abs_diff_eq!(u[1], 2f64.powf(-1.0 / (n + 1) as f64), epsilon = 1e-14);
        }
    }

    #[test]
    fn spike_path_violates_liminf() {
        let lim: Arc<dyn OmFunctional> =
            Arc::new(FnOm::neg_log_density(Arc::new(SpikeFamily::new(None).unwrap()), 1.0).unwrap());
        let seq = FunctionalSequence::new("spike", lim, |n| {
            Arc::new(FnOm::neg_log_density(Arc::new(SpikeFamily::new(Some(n as u64)).unwrap()), 1.0).unwrap())
                as Arc<dyn OmFunctional>
        })
        .unwrap();
        let path: PathFn = Arc::new(|n| vec![1.0 / n as f64]);
        let opts = LiminfOptions { random_paths: 6, ..Default::default() };
        let p = gamma_liminf_probe(&seq, &[0.0], &[("spike".into(), path)], &opts).unwrap();
        assert_eq!(p.verdict, CheckVerdict::Fail);
        let e = p.entries.iter().find(|e| e.path == "spike").unwrap();
        assert!(e.violated && e.margin < -0.5, "{e:?}");
    }

    #[test]
    fn equicoercivity_negative_level_is_vacuous() {
        let lim = gauss(vec![0.0], vec![1.0]);
        let e = gaussian_equicoercivity_probe(&[lim.clone()], &lim, -1.0, 100, 0).unwrap();
        assert_eq!((e.samples, e.verdict), (0, CheckVerdict::Pass));
    }

    #[test]
    fn clusters_of_alternating_sequence() {
        let lim: Arc<dyn OmFunctional> = Arc::new(FnOm::new("double well", vec![1.0], |x| (x[0] * x[0] - 1.0).powi(2)).unwrap());
        let seq = FunctionalSequence::constant(lim);
        let idx: Vec<usize> = (1..=40).collect();
        let mins: Vec<Vec<f64>> = idx.iter().map(|&n| vec![if n % 2 == 0 { 1.0 } else { -1.0 }]).collect();
        let rep = mode_convergence_check(&seq, &idx, &mins, &[vec![-1.0], vec![1.0]], &Default::default()).unwrap();
        assert_eq!(rep.clusters.len(), 2);
        assert_eq!(rep.verdict, CheckVerdict::Pass);
    }
}
