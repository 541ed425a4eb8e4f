//! Density on `ℝ` built from components `ρ_k` centred at the integers: an
//! integrable `|x−k|^{-1/2}` spike of weight `k^{-2}` plus a plateau of height
//! `k²` and half-width `1/(2k⁴)`. The OM functional on `ℕ` is `2 log k`, yet
//! `u = 1` fails the strong-mode criterion along `r_n = 1/(2n⁴)`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::Density1D;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OmNotStrongMeasure {
    levels: usize,
}

/// `∫_0^x ρ₀` for `|x| ≤ 1/4` (odd in `x`), clamped to `±1/8` beyond.
fn rho0_primitive(x: f64) -> f64 {
    let a = x.abs().min(0.25);
    x.signum() * 0.5 * (a.sqrt() - a)
}

fn rho0(x: f64) -> f64 {
    if x == 0.0 || x.abs() > 0.25 {
        0.0
    } else {
        0.25 * (x.abs().powf(-0.5) - 2.0)
    }
}

impl OmNotStrongMeasure {
    /// Normalisation constant of the untruncated density, `24/(5π²)`.
    pub const NORMALISATION: f64 = 24.0 / (5.0 * PI * PI);

    pub fn new(levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidParameter("at least one level is required".into()));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn plateau_half_width(k: usize) -> f64 {
        0.5 / (k as f64).powi(4)
    }

    /// Half-width of the support of `ρ_k`; the plateau of `ρ_1` is wider than
    /// the spike.
    pub fn support_half_width(k: usize) -> f64 {
        Self::plateau_half_width(k).max(0.25)
    }

    /// Unnormalised mass of `ρ_k` on the interval `k + [lo, hi]`.
    pub fn component_mass(k: usize, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let kf = k as f64;
        let h = Self::plateau_half_width(k);
        let spike = (rho0_primitive(hi) - rho0_primitive(lo)) / (kf * kf);
        let plateau = kf * kf * (hi.min(h) - lo.max(-h)).max(0.0);
        spike + plateau
    }

    /// `∫_{B_r(k)} ρ_k = k^{-2}(r^{1/2} − r) + 2rk²` for small `r`.
    pub fn component_ball_closed_form(k: usize, r: f64) -> Result<f64> {
        let kf = k as f64;
        if r > 0.25_f64.min(Self::plateau_half_width(k)) {
            return Err(Error::OutOfRegime(format!(
                "closed form needs r <= min(1/4, 1/(2k^4)) = {}, got {r}",
                0.25_f64.min(Self::plateau_half_width(k))
            )));
        }
        Ok((r.sqrt() - r) / (kf * kf) + 2.0 * r * kf * kf)
    }

    /// Normalised mass of the ball `B(center, radius)`; offsets from each
    /// integer are formed as `(center − k) ± radius`.
    pub fn ball(&self, center: f64, radius: f64) -> f64 {
        let mut total = 0.0;
        let lo_k = (center - radius - 0.5).ceil().max(1.0) as usize;
        let hi_k = ((center + radius + 0.5).floor().max(0.0) as usize).min(self.levels);
        for k in lo_k..=hi_k {
            let off = center - k as f64;
            total += Self::component_mass(k, off - radius, off + radius);
        }
        Self::NORMALISATION * total
    }
}

impl Density1D for OmNotStrongMeasure {
    fn density(&self, x: f64) -> f64 {
        let k = x.round();
        if k < 1.0 || k > self.levels as f64 {
            return 0.0;
        }
        let off = x - k;
        let ku = k as usize;
        let plateau = if off.abs() <= Self::plateau_half_width(ku) { k * k } else { 0.0 };
        Self::NORMALISATION * (rho0(off) / (k * k) + plateau)
    }

    fn support(&self) -> Vec<(f64, f64)> {
        (1..=self.levels)
            .map(|k| (k as f64 - Self::support_half_width(k), k as f64 + Self::support_half_width(k)))
            .collect()
    }

    fn breakpoints(&self) -> Vec<f64> {
        (1..=self.levels)
            .flat_map(|k| {
                let c = k as f64;
                let h = Self::plateau_half_width(k);
                [c - h, c - 0.25, c, c + 0.25, c + h]
            })
            .collect()
    }

    fn interval_mass(&self, a: f64, b: f64) -> Option<f64> {
        Some(self.ball(0.5 * (a + b), 0.5 * (b - a)))
    }

    fn ball_mass(&self, center: f64, radius: f64) -> Option<f64> {
        Some(self.ball(center, radius))
    }

    fn total_mass(&self) -> f64 {
        Self::NORMALISATION * (1..=self.levels).map(|k| 1.25 / (k as f64).powi(2)).sum::<f64>()
    }

    fn name(&self) -> String {
        format!("om_not_strong(levels={})", self.levels)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OmNotStrongReport {
    /// `(k, I(k) = 2 log k)`.
    pub om_values: Vec<(usize, f64)>,
    /// `(k, μ(B_r(1))/μ(B_r(k)))` at the smallest radius of the schedule.
    pub ratio_to_k: Vec<(usize, f64)>,
    pub radii: Vec<f64>,
    /// `μ(B_r(1.1))/μ(B_r(1))` per radius; `1.1` lies off `ℕ`.
    pub off_integer_ratios: Vec<f64>,
    /// `(n, r_n, μ(B(1,r_n))/μ(B(n,r_n)), bound)` with
    /// `bound = (1/(√2 n²) + 1/n⁴)·n²`.
    pub strong_dips: Vec<(usize, f64, f64, f64)>,
    /// `max_k μ(B_r(k))/μ(B_r(1))` over the competitors at the smallest radius.
    pub weak_worst_ratio: f64,
    pub weak_mode: bool,
}

/// Closed-form checks on the measure: ratios `k²`, decay off the integers,
/// and the dip of the strong-mode ratio along `r_n = 1/(2n⁴)`.
pub fn om_not_strong_suite(measure: &OmNotStrongMeasure, ks: &[usize], dips: &[usize]) -> Result<OmNotStrongReport> {
    let max_k = ks.iter().chain(dips).copied().max().unwrap_or(1);
    if max_k > measure.levels() {
        return Err(Error::InvalidInput(format!("index {max_k} exceeds the {} retained levels", measure.levels())));
    }
    let radii: Vec<f64> = (0..10).map(|j| 1e-6 * 0.5f64.powi(j) / (max_k as f64).powi(4)).collect();
    let r_min = *radii.last().unwrap();
    let om_values = ks.iter().map(|&k| (k, 2.0 * (k as f64).ln())).collect();
    let ratio_to_k = ks.iter().map(|&k| (k, measure.ball(1.0, r_min) / measure.ball(k as f64, r_min))).collect();
    let off_integer_ratios = radii.iter().map(|&r| measure.ball(1.1, r) / measure.ball(1.0, r)).collect();
    let strong_dips = dips
        .iter()
        .map(|&n| {
            let r = OmNotStrongMeasure::plateau_half_width(n);
            let nf = n as f64;
            let bound = (1.0 / (std::f64::consts::SQRT_2 * nf * nf) + nf.powi(-4)) * nf * nf;
            (n, r, measure.ball(1.0, r) / measure.ball(nf, r), bound)
        })
        .collect();
    let competitors = 1..=measure.levels().min(20);
    let weak_worst_ratio = competitors
        .map(|k| measure.ball(k as f64, r_min) / measure.ball(1.0, r_min))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(OmNotStrongReport {
        om_values,
        ratio_to_k,
        radii,
        off_integer_ratios,
        strong_dips,
        weak_worst_ratio,
        weak_mode: weak_worst_ratio <= 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spike_primitive_matches_paper_form() {
        for r in [1e-6, 1e-3, 0.1, 0.25] {
            let m = rho0_primitive(r) - rho0_primitive(-r);
            assert_abs_diff_eq!(m, r.sqrt() - r, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(rho0_primitive(0.25) - rho0_primitive(-0.25), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn component_mass_closed_form() {
        for k in 1..=4usize {
            let r = 0.5 * OmNotStrongMeasure::plateau_half_width(k);
            let cf = OmNotStrongMeasure::component_ball_closed_form(k, r).unwrap();
            assert_abs_diff_eq!(OmNotStrongMeasure::component_mass(k, -r, r), cf, epsilon = 1e-15);
            let w = OmNotStrongMeasure::support_half_width(k);
            let total = OmNotStrongMeasure::component_mass(k, -w, w);
            assert_abs_diff_eq!(total, 1.25 / (k * k) as f64, epsilon = 1e-14);
        }
        assert!(OmNotStrongMeasure::component_ball_closed_form(2, 0.1).is_err());
    }

    #[test]
    fn closed_form_agrees_with_quadrature_away_from_spike() {
        let m = OmNotStrongMeasure::new(5).unwrap();
        // intervals that avoid the singular point at the integers
        for (a, b) in [(2.01, 2.2), (1.8, 1.999), (3.0 + 1e-4, 3.01), (0.5, 0.95)] {
            let q = crate::measures::quadrature_mass(&m, a, b, 1e-14).unwrap();
            let cf = m.interval_mass(a, b).unwrap();
            assert_abs_diff_eq!(cf, q, epsilon = 1e-8);
        }
    }

    #[test]
    fn suite_reproduces_ratios_and_dip() {
        let m = OmNotStrongMeasure::new(30).unwrap();
        let rep = om_not_strong_suite(&m, &[2, 3, 5], &[10]).unwrap();
        for &(k, r) in &rep.ratio_to_k {
            assert!((r / (k * k) as f64 - 1.0).abs() < 1e-2, "k={k}: {r}");
        }
        let (_, _, dip, bound) = rep.strong_dips[0];
        assert!(dip <= bound && dip <= 0.72, "{dip} {bound}");
        assert_abs_diff_eq!(bound, std::f64::consts::FRAC_1_SQRT_2 + 0.01, epsilon = 1e-14);
        assert!(rep.weak_mode);
        assert!(rep.off_integer_ratios.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn untruncated_mass_is_one() {
        let m = OmNotStrongMeasure::new(200_000).unwrap();
        assert_abs_diff_eq!(m.total_mass(), 1.0, epsilon = 1e-5);
    }
}
