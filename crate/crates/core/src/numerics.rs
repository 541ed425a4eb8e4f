//! Small numerical building blocks shared by the measure, counterexample and
//! probe modules: adaptive quadrature, one-dimensional maximisation, a
//! least-squares line fit and counter-based seed derivation.

use std::sync::OnceLock;

use gauss_quad::GaussLegendre;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 40;

/// Adaptive quadrature of `f` over `[a, b]` to absolute tolerance `abs_tol`.
///
/// Each panel is integrated with 15-point Gauss–Legendre, whole and as two
/// halves; the difference is the error estimate and panels that miss their
/// share of the tolerance are bisected.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidInput("integration limits must be finite".into()));
    }
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, abs_tol).map(|v| -v);
    }
    let rule = gauss_legendre();
    let panel = |lo: f64, hi: f64| rule.integrate(lo, hi, f);
    let mut total = 0.0;
    let mut stack = vec![(a, b, panel(a, b), abs_tol.max(f64::MIN_POSITIVE), 0u32)];
    while let Some((lo, hi, whole, tol, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let (left, right) = (panel(lo, mid), panel(mid, hi));
        let refined = left + right;
        let err = (refined - whole).abs();
        // below roundoff of the panel value there is nothing left to gain
        let floor = 1e-15 * refined.abs();
        if err <= tol.max(floor) {
            total += refined;
        } else if depth >= MAX_DEPTH || mid <= lo || mid >= hi {
            return Err(Error::Numerical(format!(
                "quadrature did not converge on [{lo}, {hi}] (error estimate {err:.3e})"
            )));
        } else {
            stack.push((lo, mid, left, 0.5 * tol, depth + 1));
            stack.push((mid, hi, right, 0.5 * tol, depth + 1));
        }
    }
    Ok(total)
}

fn gauss_legendre() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(15.try_into().expect("nonzero")).expect("valid degree"))
}

/// Quadrature over consecutive breakpoints `points[0] < points[1] < ...`.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: &F, points: &[f64], abs_tol: f64) -> Result<f64> {
    if points.len() < 2 {
        return Ok(0.0);
    }
    let share = abs_tol / (points.len() - 1) as f64;
    points.windows(2).map(|w| integrate(f, w[0], w[1], share)).sum()
}

/// Global maximiser of a smooth `f` on `[lo, hi]`, given its derivative.
///
/// A uniform grid locates the best cell; the maximiser is then polished by
/// bisection on the sign of `df` inside the neighbouring cells.
pub fn argmax_1d(
    f: &impl Fn(f64) -> f64,
    df: &impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    grid: usize,
) -> (f64, f64) {
    let maxima = local_maxima_1d(f, df, lo, hi, grid);
    maxima
        .into_iter()
        .fold((lo, f64::NEG_INFINITY), |best, m| if m.1 > best.1 { m } else { best })
}

/// All interior local maximisers detected on a grid of `grid` cells, each
/// polished to machine precision.
pub fn local_maxima_1d(
    f: &impl Fn(f64) -> f64,
    df: &impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    grid: usize,
) -> Vec<(f64, f64)> {
    let grid = grid.max(2);
    let h = (hi - lo) / grid as f64;
    let xs: Vec<f64> = (0..=grid).map(|i| lo + i as f64 * h).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut out = Vec::new();
    for i in 0..=grid {
        let left = if i == 0 { f64::NEG_INFINITY } else { fs[i - 1] };
        let right = if i == grid { f64::NEG_INFINITY } else { fs[i + 1] };
        if fs[i] >= left && fs[i] > right {
            let a = xs[i.saturating_sub(1)];
            let b = xs[(i + 1).min(grid)];
            let x = polish_max(df, a, b).unwrap_or(xs[i]);
            let x = if f(x) >= fs[i] { x } else { xs[i] };
            out.push((x, f(x)));
        }
    }
    out
}

fn polish_max(df: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> Option<f64> {
    let (da, db) = (df(a), df(b));
    if !(da >= 0.0 && db <= 0.0) {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if df(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// Ordinary least-squares line `y ≈ intercept + slope · x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Standard error of the intercept from the residuals (zero for two or
    /// fewer points).
    pub intercept_se: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() || n == 0 {
        return Err(Error::InvalidInput("line fit needs matching non-empty inputs".into()));
    }
    if n == 1 {
        return Ok(LineFit { intercept: y[0], slope: 0.0, intercept_se: 0.0 });
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("line fit needs at least two distinct abscissae".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let intercept_se = if n > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        let s2 = rss / (nf - 2.0);
        (s2 * (1.0 / nf + mx * mx / sxx)).sqrt()
    } else {
        0.0
    };
    Ok(LineFit { intercept, slope, intercept_se })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from a root seed and a path of counters.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(root), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn rng_for(root: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, path))
}

/// Uniform point in the unit ball of unweighted `ℓᵖ` (Barthe, Guédon,
/// Mendelson and Naor): `g/(‖g‖ᵖ_p + Z)^{1/p}` with `g_k` of density
/// `∝ exp(−|x|ᵖ)` and `Z ~ Exp(1)`. `gamma` must be `Gamma(1/p, 1)` for
/// finite `p`; the cube is sampled directly for `p = ∞`.
pub fn uniform_in_lp_ball(rng: &mut impl Rng, p: f64, gamma: Option<&Gamma<f64>>, out: &mut [f64]) {
    if p.is_infinite() {
        out.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        return;
    }
    let mut s = 0.0;
    if p == 2.0 {
        // signed Gamma(1/2)^{1/2} is N(0, 1/2)
        for x in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x = z * std::f64::consts::FRAC_1_SQRT_2;
            s += *x * *x;
        }
    } else if p == 1.0 {
        for x in out.iter_mut() {
            let g: f64 = Exp1.sample(rng);
            s += g;
            *x = if rng.random_bool(0.5) { g } else { -g };
        }
    } else {
        let gamma = gamma.expect("Gamma(1/p, 1) sampler for finite p");
        for x in out.iter_mut() {
            let g: f64 = gamma.sample(rng);
            s += g;
            let mag = g.powf(1.0 / p);
            *x = if rng.random_bool(0.5) { mag } else { -mag };
        }
    }
    let z: f64 = Exp1.sample(rng);
    let scale = if p == 2.0 { (s + z).sqrt().recip() } else { (s + z).powf(-1.0 / p) };
    out.iter_mut().for_each(|x| *x *= scale);
}

/// `Gamma(1/p, 1)` sampler for [`uniform_in_lp_ball`], `None` for `p = ∞`.
pub fn lp_ball_sampler(p: f64) -> Result<Option<Gamma<f64>>> {
    if p.is_infinite() {
        return Ok(None);
    }
    Gamma::new(1.0 / p, 1.0).map(Some).map_err(|e| Error::InvalidParameter(format!("p = {p}: {e}")))
}

/// Log-sum-exp of a slice, `-inf` when empty or all `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
