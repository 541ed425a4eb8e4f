//! Piecewise-constant measure on two clusters of dyadic intervals accumulating
//! at `−1` and `+1`. The ball-mass ratio between the two accumulation points
//! oscillates, so its limit inferior and limit superior differ.
//!
//! With `a_n = 2^{−(n−1)(n+2)/2}` and `α_n = 2^{−n}(a_n − a_{n+1})` the density
//! is `2^n` on `[−1+α_n, −1+2α_n]` and on `[1−α_n, 1−α_n/2]`. Every quantity is
//! a power of two times a factor close to one, so masses are carried as
//! `2^{exp2} · mantissa` and never underflow.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::Density1D;

/// Largest depth for which `α_n` is a normal double and offsets are exact.
pub const MAX_DEPTH: usize = 43;

/// `2^{exp2} · mantissa`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DyadicMass {
    pub exp2: i64,
    pub mantissa: f64,
}

impl DyadicMass {
    pub const ZERO: Self = Self { exp2: 0, mantissa: 0.0 };

    pub fn is_zero(&self) -> bool {
        self.mantissa == 0.0
    }

    pub fn ln(&self) -> f64 {
        self.exp2 as f64 * std::f64::consts::LN_2 + self.mantissa.ln()
    }

    pub fn to_f64(&self) -> f64 {
        self.mantissa * pow2(self.exp2)
    }

    /// `self / other`, exact whenever the mantissas are.
    pub fn ratio(&self, other: &Self) -> f64 {
        pow2(self.exp2 - other.exp2) * (self.mantissa / other.mantissa)
    }
}

fn pow2(e: i64) -> f64 {
    // exp2 of an integer is exact in the normal range
    (e.clamp(-1100, 1100) as f64).exp2()
}

/// `log₂ a_n = −(n−1)(n+2)/2`; the product is always even.
pub fn log2_a(n: usize) -> i64 {
    let n = n as i64;
    -((n - 1) * (n + 2)) / 2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Cluster {
    /// Intervals `[−1+α_k, −1+2α_k]`.
    Left,
    /// Intervals `[1−α_k, 1−α_k/2]`.
    Right,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiminfOnlyMeasure {
    depth: usize,
    /// `α_k` for `k = 1..=depth`.
    alpha: Vec<f64>,
}

impl LiminfOnlyMeasure {
    pub fn new(depth: usize) -> Result<Self> {
        if !(2..=MAX_DEPTH).contains(&depth) {
            return Err(Error::InvalidParameter(format!("depth must lie in 2..={MAX_DEPTH}, got {depth}")));
        }
        let alpha: Vec<f64> = (1..=depth)
            .map(|k| pow2(log2_a(k) - k as i64) - pow2(log2_a(k + 1) - k as i64))
            .collect();
        let m = Self { depth, alpha };
        m.check_disjoint()?;
        Ok(m)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `α_n` (1-based).
    pub fn alpha(&self, n: usize) -> f64 {
        self.alpha[n - 1]
    }

    pub fn epsilon(&self, n: usize) -> f64 {
        2.0 * self.alpha(n)
    }

    pub fn delta(&self, n: usize) -> f64 {
        self.alpha(n)
    }

    fn check_disjoint(&self) -> Result<()> {
        for w in self.alpha.windows(2) {
            // [α_{k+1}, 2α_{k+1}] lies strictly left of [α_k, 2α_k]
            if !(w[1] > 0.0 && 2.0 * w[1] < w[0]) {
                return Err(Error::Numerical("dyadic intervals overlap".into()));
            }
        }
        Ok(())
    }

    /// Interval `k` of a cluster as offsets from the accumulation point.
    fn offsets(&self, cluster: Cluster, k: usize) -> (f64, f64) {
        let a = self.alpha(k);
        match cluster {
            Cluster::Left => (a, 2.0 * a),
            Cluster::Right => (-a, -0.5 * a),
        }
    }

    /// Mass of `(lo, hi)`, with both ends given as offsets from the cluster's
    /// accumulation point. Maximal runs of fully covered intervals are summed
    /// by telescoping, `Σ_{k=i}^{j} 2^k α_k = a_i − a_{j+1}`.
    pub fn cluster_mass(&self, cluster: Cluster, lo: f64, hi: f64) -> DyadicMass {
        let mut fractions = Vec::with_capacity(self.depth);
        for k in 1..=self.depth {
            let (a, b) = self.offsets(cluster, k);
            let overlap = (hi.min(b) - lo.max(a)).max(0.0);
            fractions.push(if overlap >= b - a { 1.0 } else { overlap / (b - a) });
        }
        let Some(first) = fractions.iter().position(|&f| f > 0.0) else {
            return DyadicMass::ZERO;
        };
        let base = log2_a(first + 1);
        let mut mantissa = 0.0;
        let mut k = first;
        while k < self.depth {
            if fractions[k] == 1.0 {
                let start = k;
                while k < self.depth && fractions[k] == 1.0 {
                    k += 1;
                }
                // indices start+1 ..= k (1-based), i.e. a_{start+1} − a_{k+1}
                mantissa += pow2(log2_a(start + 1) - base) - pow2(log2_a(k + 1) - base);
            } else {
                let f = fractions[k];
                if f > 0.0 {
                    let n = (k + 1) as i64;
                    mantissa += f * pow2(log2_a(k + 1) - base) * (1.0 - pow2(-n - 1));
                }
                k += 1;
            }
        }
        let exp2 = match cluster {
            Cluster::Left => base,
            Cluster::Right => base - 1,
        };
        DyadicMass { exp2, mantissa }
    }

    /// Mass of the ball `B(center, radius)` (open and closed agree: the measure
    /// has no atoms).
    pub fn ball_mass_dyadic(&self, center: f64, radius: f64) -> DyadicMass {
        let left = self.cluster_mass(Cluster::Left, center + 1.0 - radius, center + 1.0 + radius);
        let right = self.cluster_mass(Cluster::Right, center - 1.0 - radius, center - 1.0 + radius);
        match (left.is_zero(), right.is_zero()) {
            (true, _) => right,
            (_, true) => left,
            _ => {
                let e = left.exp2.max(right.exp2);
                DyadicMass {
                    exp2: e,
                    mantissa: left.mantissa * pow2(left.exp2 - e) + right.mantissa * pow2(right.exp2 - e),
                }
            }
        }
    }

    /// Total unnormalised mass `(3/2)(a_1 − a_{depth+1})`.
    pub fn total_dyadic(&self) -> DyadicMass {
        DyadicMass { exp2: -1, mantissa: 3.0 * (1.0 - pow2(log2_a(self.depth + 1))) }
    }
}

impl Density1D for LiminfOnlyMeasure {
    fn density(&self, x: f64) -> f64 {
        for k in 1..=self.depth {
            for (cluster, c) in [(Cluster::Left, -1.0), (Cluster::Right, 1.0)] {
                let (a, b) = self.offsets(cluster, k);
                let off = x - c;
                if off >= a && off <= b {
                    return pow2(k as i64);
                }
            }
        }
        0.0
    }

    fn support(&self) -> Vec<(f64, f64)> {
        vec![(-1.0, -1.0 + 2.0 * self.alpha(1)), (1.0 - self.alpha(1), 1.0)]
    }

    fn breakpoints(&self) -> Vec<f64> {
        (1..=self.depth)
            .flat_map(|k| {
                let a = self.alpha(k);
                [-1.0 + a, -1.0 + 2.0 * a, 1.0 - a, 1.0 - 0.5 * a]
            })
            .collect()
    }

    fn interval_mass(&self, a: f64, b: f64) -> Option<f64> {
        let c = 0.5 * (a + b);
        Some(self.ball_mass_dyadic(c, 0.5 * (b - a)).to_f64())
    }

    fn log_interval_mass(&self, a: f64, b: f64) -> Option<f64> {
        let c = 0.5 * (a + b);
        Some(self.ball_mass_dyadic(c, 0.5 * (b - a)).ln())
    }

    fn ball_mass(&self, center: f64, radius: f64) -> Option<f64> {
        Some(self.ball_mass_dyadic(center, radius).to_f64())
    }

    fn log_ball_mass(&self, center: f64, radius: f64) -> Option<f64> {
        Some(self.ball_mass_dyadic(center, radius).ln())
    }

    fn total_mass(&self) -> f64 {
        self.total_dyadic().to_f64()
    }

    fn name(&self) -> String {
        format!("liminf_only(depth={})", self.depth)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LiminfOnlyRatios {
    pub n: Vec<usize>,
    /// `μ(B(−1, ε_n)) / μ(B(1, ε_n))`.
    pub epsilon_ratios: Vec<f64>,
    /// `μ(B(−1, δ_n)) / μ(B(1, δ_n))`.
    pub delta_ratios: Vec<f64>,
}

pub fn liminf_only_ratios(measure: &LiminfOnlyMeasure, n_max: usize) -> Result<LiminfOnlyRatios> {
    if n_max == 0 || n_max + 2 > measure.depth() {
        return Err(Error::InvalidInput(format!(
            "n_max must lie in 1..={} for depth {}",
            measure.depth().saturating_sub(2),
            measure.depth()
        )));
    }
    let mut out = LiminfOnlyRatios { n: Vec::new(), epsilon_ratios: Vec::new(), delta_ratios: Vec::new() };
    for n in 1..=n_max {
        let ratio = |r: f64| measure.ball_mass_dyadic(-1.0, r).ratio(&measure.ball_mass_dyadic(1.0, r));
        out.n.push(n);
        out.epsilon_ratios.push(ratio(measure.epsilon(n)));
        out.delta_ratios.push(ratio(measure.delta(n)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_matches_expanded_formula() {
        let m = LiminfOnlyMeasure::new(40).unwrap();
        for n in 1..=10usize {
            let nf = n as f64;
            let expanded = 2f64.powf(-(nf * nf + 3.0 * nf - 2.0) / 2.0) - 2f64.powf(-(nf * nf + 5.0 * nf) / 2.0);
            assert_eq!(m.alpha(n), expanded);
        }
    }

    #[test]
    fn epsilon_ratios_are_two() {
        let m = LiminfOnlyMeasure::new(40).unwrap();
        let r = liminf_only_ratios(&m, 30).unwrap();
        assert!(r.epsilon_ratios.iter().all(|&x| x == 2.0));
    }

    #[test]
    fn delta_ratios_from_interval_masses() {
        // μ(B(−1, α_n)) = a_{n+1} and μ(B(1, α_n)) = b_n = a_n/2, so the ratio
        // is 2 a_{n+1}/a_n = 2^{−n}.
        let m = LiminfOnlyMeasure::new(40).unwrap();
        let r = liminf_only_ratios(&m, 30).unwrap();
        for (i, &x) in r.delta_ratios.iter().enumerate() {
            let n = (i + 1) as i32;
            assert_eq!(x, 2f64.powi(-n));
        }
    }

    #[test]
    fn brute_force_sum_agrees_for_small_depth() {
        // direct summation of 2^k·overlap in f64 for shallow levels
        let m = LiminfOnlyMeasure::new(8).unwrap();
        for (c, r) in [(-1.0f64, 0.3f64), (1.0, 0.05), (-1.0, 1e-3), (0.9, 0.2)] {
            let mut direct = 0.0f64;
            for k in 1..=8usize {
                let a = m.alpha(k);
                let w = 2f64.powi(k as i32);
                for (lo, hi) in [(-1.0 + a, -1.0 + 2.0 * a), (1.0 - a, 1.0 - 0.5 * a)] {
                    direct += w * ((c + r).min(hi) - (c - r).max(lo)).max(0.0);
                }
            }
            let v = m.ball_mass_dyadic(c, r).to_f64();
            assert!((v - direct).abs() <= 1e-14 * direct.max(1e-300), "{c} {r}: {v} vs {direct}");
        }
    }

    #[test]
    fn telescoping_total_mass() {
        let m = LiminfOnlyMeasure::new(40).unwrap();
        let left = m.cluster_mass(Cluster::Left, 0.0, 1.0);
        // Σ_{k=1}^{40} 2^k α_k = a_1 − a_41 and a_41 is far below double resolution
        assert_eq!(left.exp2, 0);
        assert_eq!(left.mantissa, 1.0);
        let right = m.cluster_mass(Cluster::Right, -1.0, 0.0);
        assert_eq!(right.ratio(&left), 0.5);
    }

    #[test]
    fn rejects_bad_depth() {
        assert!(LiminfOnlyMeasure::new(1).is_err());
        assert!(LiminfOnlyMeasure::new(60).is_err());
        let m = LiminfOnlyMeasure::new(10).unwrap();
        assert!(liminf_only_ratios(&m, 9).is_err());
    }
}
