//! Length measure on two crosses in `ℝ²`: `E₊` axis-aligned at `e₁`, `E₋`
//! rotated by `π/4` at `−e₁`, every arm of half-length 1. Left unnormalised.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::spaces::WeightedSeqSpace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossNorm {
    L1,
    Linf,
}

impl CrossNorm {
    pub fn space(self) -> WeightedSeqSpace {
        match self {
            CrossNorm::L1 => WeightedSeqSpace::unweighted(1.0, 2).expect("valid"),
            CrossNorm::Linf => WeightedSeqSpace::sup(2),
        }
    }
}

/// Segment `{mid + s·dir : s ∈ [−1, 1]}` with `|dir| = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub mid: [f64; 2],
    pub dir: [f64; 2],
}

impl Segment {
    fn point(&self, s: f64) -> [f64; 2] {
        [self.mid[0] + s * self.dir[0], self.mid[1] + s * self.dir[1]]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossesMeasure {
    segments: Vec<[[f64; 2]; 2]>,
    #[serde(skip)]
    segs: Vec<Segment>,
}

impl Default for CrossesMeasure {
    fn default() -> Self {
        Self::new()
    }
}

impl CrossesMeasure {
    pub fn new() -> Self {
        let segs = vec![
            Segment { mid: [1.0, 0.0], dir: [1.0, 0.0] },
            Segment { mid: [1.0, 0.0], dir: [0.0, 1.0] },
            Segment { mid: [-1.0, 0.0], dir: [FRAC_1_SQRT_2, FRAC_1_SQRT_2] },
            Segment { mid: [-1.0, 0.0], dir: [FRAC_1_SQRT_2, -FRAC_1_SQRT_2] },
        ];
        let segments = segs.iter().map(|s| [s.point(-1.0), s.point(1.0)]).collect();
        Self { segments, segs }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segs
    }

    pub fn total_mass(&self) -> f64 {
        2.0 * self.segs.len() as f64
    }

    /// Arc length of the part of the crosses inside the open ball
    /// `{x : ‖x − center‖ < radius}` of `space` (any `p`, weighted or not).
    pub fn ball_mass(&self, center: &[f64], radius: f64, space: &WeightedSeqSpace) -> Result<f64> {
        check_dim(2, center.len())?;
        check_dim(2, space.dim())?;
        if !(radius > 0.0) {
            return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
        }
        Ok(self.segs.iter().map(|seg| segment_ball_length(seg, center, radius, space)).sum())
    }
}

/// Length of `{s ∈ [−1, 1] : ‖seg(s) − c‖ < r}`. The distance along a line
/// is convex in `s`, so the set is an interval around the minimiser.
fn segment_ball_length(seg: &Segment, c: &[f64], r: f64, space: &WeightedSeqSpace) -> f64 {
    let f = |s: f64| {
        let p = seg.point(s);
        space.norm_unchecked(&[p[0] - c[0], p[1] - c[1]])
    };
    // golden-section search for the minimiser of a convex function
    let (mut a, mut b) = (-1.0_f64, 1.0_f64);
    let g = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    let s0 = [-1.0, 1.0, 0.5 * (a + b)].into_iter().min_by(|x, y| f(*x).total_cmp(&f(*y))).unwrap();
    if f(s0) >= r {
        return 0.0;
    }
    let edge = |inside: f64, outside: f64| {
        if f(outside) < r {
            return outside;
        }
        let (mut i, mut o) = (inside, outside);
        for _ in 0..200 {
            let m = 0.5 * (i + o);
            if f(m) < r {
                i = m;
            } else {
                o = m;
            }
        }
        0.5 * (i + o)
    };
    edge(s0, 1.0) - edge(s0, -1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossCenter {
    MinusE1,
    E1,
}

/// Closed-form ball masses `2√2 r`, `4r` (1-norm) and `4√2 r`, `4r`
/// (sup-norm) for balls contained in a single cross.
pub fn crosses_ball_masses(norm: CrossNorm, center: CrossCenter, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {r}")));
    }
    if r > 0.5 {
        return Err(Error::OutOfRegime(format!("closed forms need r <= 0.5, got {r}")));
    }
    Ok(match (norm, center) {
        (CrossNorm::L1, CrossCenter::MinusE1) => 2.0 * SQRT_2 * r,
        (CrossNorm::L1, CrossCenter::E1) => 4.0 * r,
        (CrossNorm::Linf, CrossCenter::MinusE1) => 4.0 * SQRT_2 * r,
        (CrossNorm::Linf, CrossCenter::E1) => 4.0 * r,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossesSummary {
    pub norm: CrossNorm,
    /// `I(−e₁) − I(e₁) = −log(μ(B_r(−e₁))/μ(B_r(e₁)))`.
    pub om_difference: f64,
    pub mode: CrossCenter,
}

pub fn crosses_summary(norm: CrossNorm) -> Result<CrossesSummary> {
    let r = 0.1;
    let minus = crosses_ball_masses(norm, CrossCenter::MinusE1, r)?;
    let plus = crosses_ball_masses(norm, CrossCenter::E1, r)?;
    let om_difference = -(minus / plus).ln();
    let mode = if om_difference > 0.0 { CrossCenter::E1 } else { CrossCenter::MinusE1 };
    Ok(CrossesSummary { norm, om_difference, mode })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn geometry_matches_closed_forms() {
        let m = CrossesMeasure::new();
        for norm in [CrossNorm::L1, CrossNorm::Linf] {
            for r in [1e-3, 0.1, 0.3, 0.5] {
                for (c, cc) in [([-1.0, 0.0], CrossCenter::MinusE1), ([1.0, 0.0], CrossCenter::E1)] {
                    let g = m.ball_mass(&c, r, &norm.space()).unwrap();
                    let cf = crosses_ball_masses(norm, cc, r).unwrap();
                    assert_abs_diff_eq!(g, cf, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn large_radius_is_out_of_regime() {
        assert!(matches!(crosses_ball_masses(CrossNorm::L1, CrossCenter::E1, 0.6), Err(Error::OutOfRegime(_))));
    }

    #[test]
    fn om_difference_flips_with_norm() {
        let l1 = crosses_summary(CrossNorm::L1).unwrap();
        let li = crosses_summary(CrossNorm::Linf).unwrap();
        assert_abs_diff_eq!(l1.om_difference, SQRT_2.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(li.om_difference, -SQRT_2.ln(), epsilon = 1e-12);
        assert_eq!(l1.mode, CrossCenter::E1);
        assert_eq!(li.mode, CrossCenter::MinusE1);
    }

    #[test]
    fn whole_measure_inside_large_ball() {
        let m = CrossesMeasure::new();
        let g = m.ball_mass(&[0.0, 0.0], 10.0, &WeightedSeqSpace::euclidean(2)).unwrap();
        assert_abs_diff_eq!(g, m.total_mass(), epsilon = 1e-12);
    }
}
