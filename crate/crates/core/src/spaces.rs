//! Truncated weighted sequence spaces and spectrally stored operators.
//!
//! Every vector in this crate is a finite truncation `(u_1, ..., u_K)` of a
//! real sequence. Norms are the weighted `ℓᵖ` norms
//! `‖u‖ = ‖(u_k / γ_k)_k‖_{ℓᵖ}`, and covariance-type operators are kept as an
//! eigenvalue vector plus an optional orthonormal basis so that square roots
//! and pseudoinverses are coordinate-wise.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Eigenvalues `λ_k ≤ DEFAULT_RANK_TOL · max_j λ_j` are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Relative size of the kernel component below which a vector is considered
/// to lie in the range of an operator.
pub const DEFAULT_RANGE_TOL: f64 = 1e-10;

const ORTHONORMAL_TOL: f64 = 1e-10;

/// A weighted `ℓᵖ` space truncated to `weights.len()` coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedSeqSpace {
    p: f64,
    weights: Vec<f64>,
}

impl WeightedSeqSpace {
    pub fn new(p: f64, weights: Vec<f64>) -> Result<Self> {
        if !(p > 0.0) {
            return Err(Error::InvalidParameter(format!("exponent p must be positive, got {p}")));
        }
        if weights.is_empty() {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "weights must be positive and finite, got {w}"
            )));
        }
        Ok(Self { p, weights })
    }

    /// Unweighted `ℓᵖ` on `dim` coordinates.
    pub fn unweighted(p: f64, dim: usize) -> Result<Self> {
        Self::new(p, vec![1.0; dim])
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::unweighted(2.0, dim).expect("dim >= 1")
    }

    pub fn sup(dim: usize) -> Self {
        Self::unweighted(f64::INFINITY, dim).expect("dim >= 1")
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_sup(&self) -> bool {
        self.p.is_infinite()
    }

    pub fn norm(&self, u: &[f64]) -> Result<f64> {
        check_dim(self.dim(), u.len())?;
        Ok(self.norm_unchecked(u))
    }

    /// Distance `‖a − b‖`.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_dim(self.dim(), a.len())?;
        check_dim(self.dim(), b.len())?;
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        Ok(self.norm_unchecked(&diff))
    }

    pub(crate) fn norm_unchecked(&self, u: &[f64]) -> f64 {
        let scaled = u.iter().zip(&self.weights).map(|(x, w)| (x / w).abs());
        if self.p.is_infinite() {
            scaled.fold(0.0, f64::max)
        } else if self.p == 1.0 {
            scaled.sum()
        } else if self.p == 2.0 {
            scaled.map(|a| a * a).sum::<f64>().sqrt()
        } else {
            scaled.map(|a| a.powf(self.p)).sum::<f64>().powf(1.0 / self.p)
        }
    }
}

/// Keeps coordinates `1..=n` and zeroes the rest.
pub fn project(u: &[f64], n: usize) -> Result<Vec<f64>> {
    if n == 0 || n > u.len() {
        return Err(Error::InvalidInput(format!(
            "projection dimension {n} outside 1..={}",
            u.len()
        )));
    }
    let mut out = u.to_vec();
    out[n..].iter_mut().for_each(|x| *x = 0.0);
    Ok(out)
}

/// A symmetric positive semi-definite operator `Σ_k λ_k e_k ⊗ e_k` on `ℝ^K`.
///
/// Without an explicit basis the eigenvectors are the coordinate vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralOperator {
    eigenvalues: Vec<f64>,
    basis: Option<DMatrix<f64>>,
}

impl SpectralOperator {
    pub fn diagonal(eigenvalues: Vec<f64>) -> Result<Self> {
        validate_eigenvalues(&eigenvalues)?;
        Ok(Self { eigenvalues, basis: None })
    }

    pub fn identity(dim: usize) -> Self {
        Self { eigenvalues: vec![1.0; dim], basis: None }
    }

    /// `basis` holds the eigenvectors as columns.
    pub fn with_basis(eigenvalues: Vec<f64>, basis: DMatrix<f64>) -> Result<Self> {
        validate_eigenvalues(&eigenvalues)?;
        let k = eigenvalues.len();
        if basis.nrows() != k || basis.ncols() != k {
            return Err(Error::InvalidInput(format!(
                "basis must be {k}x{k}, got {}x{}",
                basis.nrows(),
                basis.ncols()
            )));
        }
        let gram = basis.transpose() * &basis;
        let defect = (gram - DMatrix::<f64>::identity(k, k)).amax();
        if defect > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput(format!(
                "basis is not orthonormal (max defect {defect:.3e})"
            )));
        }
        Ok(Self { eigenvalues, basis: Some(basis) })
    }

    /// Converts a dense symmetric positive semi-definite matrix by symmetric
    /// eigendecomposition. Slightly negative eigenvalues from round-off are
    /// clamped to zero.
    pub fn from_dense(matrix: &DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidInput("covariance must be a non-empty square matrix".into()));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let asym = (matrix - matrix.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(Error::InvalidInput(format!("matrix is not symmetric (defect {asym:.3e})")));
        }
        let sym = (matrix + matrix.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let max = eig.eigenvalues.amax();
        let mut eigenvalues = Vec::with_capacity(eig.eigenvalues.len());
        for &l in eig.eigenvalues.iter() {
            if l < -1e-10 * max.max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidInput(format!(
                    "matrix is not positive semi-definite (eigenvalue {l:.3e})"
                )));
            }
            eigenvalues.push(l.max(0.0));
        }
        Ok(Self { eigenvalues, basis: Some(eig.eigenvectors) })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn basis(&self) -> Option<&DMatrix<f64>> {
        self.basis.as_ref()
    }

    pub fn is_diagonal(&self) -> bool {
        self.basis.is_none()
    }

    /// Coordinates of `x` in the eigenbasis.
    pub fn to_eigen(&self, x: &[f64]) -> Vec<f64> {
        match &self.basis {
            None => x.to_vec(),
            Some(q) => (q.transpose() * DVector::from_column_slice(x)).as_slice().to_vec(),
        }
    }

    /// Ambient coordinates of a vector given in the eigenbasis.
    pub fn from_eigen(&self, c: &[f64]) -> Vec<f64> {
        match &self.basis {
            None => c.to_vec(),
            Some(q) => (q * DVector::from_column_slice(c)).as_slice().to_vec(),
        }
    }

    fn map_spectrum(&self, x: &[f64], f: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let c = self.to_eigen(x);
        let mapped: Vec<f64> = c.iter().zip(&self.eigenvalues).map(|(&ci, &l)| f(ci, l)).collect();
        Ok(self.from_eigen(&mapped))
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.map_spectrum(x, |c, l| c * l)
    }

    pub fn sqrt_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.map_spectrum(x, |c, l| c * l.sqrt())
    }

    fn zero_threshold(&self, rank_tol: f64) -> f64 {
        rank_tol * self.eigenvalues.iter().cloned().fold(0.0, f64::max)
    }

    /// Whether eigenvalue `k` counts as zero under `rank_tol`.
    pub fn is_null_mode(&self, k: usize, rank_tol: f64) -> bool {
        let l = self.eigenvalues[k];
        l <= self.zero_threshold(rank_tol) || l == 0.0
    }

    pub fn rank(&self, rank_tol: f64) -> usize {
        (0..self.dim()).filter(|&k| !self.is_null_mode(k, rank_tol)).count()
    }

    /// Moore–Penrose pseudoinverse `A† y`.
    pub fn pinv_apply(&self, y: &[f64], rank_tol: f64) -> Result<Vec<f64>> {
        if rank_tol < 0.0 {
            return Err(Error::InvalidParameter("rank_tol must be non-negative".into()));
        }
        let thr = self.zero_threshold(rank_tol);
        self.map_spectrum(y, |c, l| if l > thr && l > 0.0 { c / l } else { 0.0 })
    }

    /// `C^{†/2} v = (C^{1/2})† v`.
    pub fn sqrt_pinv_apply(&self, v: &[f64], rank_tol: f64) -> Result<Vec<f64>> {
        if rank_tol < 0.0 {
            return Err(Error::InvalidParameter("rank_tol must be non-negative".into()));
        }
        let thr = self.zero_threshold(rank_tol);
        self.map_spectrum(v, |c, l| if l > thr && l > 0.0 { c / l.sqrt() } else { 0.0 })
    }

    /// Euclidean norm of the component of `v` in the (numerical) kernel.
    pub fn kernel_component_norm(&self, v: &[f64], rank_tol: f64) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        let c = self.to_eigen(v);
        Ok((0..self.dim())
            .filter(|&k| self.is_null_mode(k, rank_tol))
            .map(|k| c[k] * c[k])
            .sum::<f64>()
            .sqrt())
    }

    /// Range membership `v ∈ range C^{1/2}` (equal to `range C` in finite
    /// dimensions): the kernel component must be at most
    /// `range_tol · max(1, ‖v‖)`.
    pub fn in_range(&self, v: &[f64], rank_tol: f64, range_tol: f64) -> Result<bool> {
        let kernel = self.kernel_component_norm(v, rank_tol)?;
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(kernel <= range_tol * norm.max(1.0))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        match &self.basis {
            None => d,
            Some(q) => q * d * q.transpose(),
        }
    }

    /// Dense `C^{1/2}`.
    pub fn sqrt_dense(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            self.dim(),
            self.eigenvalues.iter().map(|l| l.sqrt()),
        ));
        match &self.basis {
            None => d,
            Some(q) => q * d * q.transpose(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0 && factor.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale factor must be >= 0, got {factor}")));
        }
        Ok(Self {
            eigenvalues: self.eigenvalues.iter().map(|l| l * factor).collect(),
            basis: self.basis.clone(),
        })
    }

    /// Spectral norm `max_k λ_k`.
    pub fn operator_norm(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(0.0, f64::max)
    }
}

fn validate_eigenvalues(eigenvalues: &[f64]) -> Result<()> {
    if eigenvalues.is_empty() {
        return Err(Error::InvalidInput("operator dimension must be at least 1".into()));
    }
    if let Some(l) = eigenvalues.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(Error::InvalidInput(format!("eigenvalues must be finite and >= 0, got {l}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn norm_of_zero_is_zero() {
        let s = WeightedSeqSpace::new(1.5, vec![0.3, 2.0, 7.0]).unwrap();
        assert_eq!(s.norm(&[0.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn weighted_l1_small_case() {
        let s = WeightedSeqSpace::new(1.0, vec![1.0, 2.0]).unwrap();
        assert_eq!(s.norm(&[1.0, 2.0]).unwrap(), 2.0);
    }

    #[test]
    fn besov_type_weights() {
        // γ_k = k^{-1/2}, so the norm is Σ k^{1/2} |u_k|.
        let w: Vec<f64> = (1..=5).map(|k| (k as f64).powf(-0.5)).collect();
        let s = WeightedSeqSpace::new(1.0, w).unwrap();
        let v = s.norm(&[1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(v, 1.0 + std::f64::consts::SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn sup_norm() {
        let s = WeightedSeqSpace::new(f64::INFINITY, vec![1.0, 0.5]).unwrap();
        assert_eq!(s.norm(&[-0.75, 0.5]).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let s = WeightedSeqSpace::euclidean(3);
        assert!(matches!(s.norm(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn invalid_spaces_rejected() {
        assert!(WeightedSeqSpace::new(0.0, vec![1.0]).is_err());
        assert!(WeightedSeqSpace::new(1.0, vec![]).is_err());
        assert!(WeightedSeqSpace::new(1.0, vec![1.0, 0.0]).is_err());
        assert!(WeightedSeqSpace::new(1.0, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project(&[1.0, 2.0, 3.0], 2).unwrap(), vec![1.0, 2.0, 0.0]);
        assert_eq!(project(&[1.0, 2.0, 3.0], 3).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(project(&[1.0, 2.0], 0).is_err());
        assert!(project(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn pinv_examples() {
        let a = SpectralOperator::diagonal(vec![2.0, 0.0]).unwrap();
        assert_eq!(a.pinv_apply(&[4.0, 3.0], DEFAULT_RANK_TOL).unwrap(), vec![2.0, 0.0]);

        let id = SpectralOperator::identity(3);
        assert_eq!(id.pinv_apply(&[1.0, -2.0, 5.0], DEFAULT_RANK_TOL).unwrap(), vec![1.0, -2.0, 5.0]);

        let a = SpectralOperator::diagonal(vec![3.0, 1.0]).unwrap();
        assert_eq!(a.pinv_apply(&[6.0, 2.0], DEFAULT_RANK_TOL).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn pinv_is_minimum_norm_over_solution_set() {
        // A = diag(3, 0) has solutions (2, t) of A x = (6, 0); a grid over t
        // confirms t = 0 minimises the norm.
        let a = SpectralOperator::diagonal(vec![3.0, 0.0]).unwrap();
        let x = a.pinv_apply(&[6.0, 0.0], DEFAULT_RANK_TOL).unwrap();
        let best = (-1000..=1000)
            .map(|i| i as f64 * 0.01)
            .map(|t| (4.0 + t * t, t))
            .fold((f64::INFINITY, 0.0), |acc, v| if v.0 < acc.0 { v } else { acc });
        assert_eq!(best.1, 0.0);
        assert_eq!(x, vec![2.0, 0.0]);
    }

    #[test]
    fn sqrt_pinv_examples() {
        let c = SpectralOperator::diagonal(vec![4.0, 1.0]).unwrap();
        assert_eq!(c.sqrt_pinv_apply(&[2.0, 0.0], DEFAULT_RANK_TOL).unwrap(), vec![1.0, 0.0]);
        let c = SpectralOperator::diagonal(vec![0.0, 1.0]).unwrap();
        assert_eq!(c.sqrt_pinv_apply(&[0.0, 5.0], DEFAULT_RANK_TOL).unwrap(), vec![0.0, 5.0]);
        let c = SpectralOperator::diagonal(vec![4.0, 0.0]).unwrap();
        assert_eq!(c.sqrt_pinv_apply(&[2.0, 1.0], DEFAULT_RANK_TOL).unwrap(), vec![1.0, 0.0]);
        assert!(!c.in_range(&[2.0, 1.0], DEFAULT_RANK_TOL, DEFAULT_RANGE_TOL).unwrap());
        assert!(c.in_range(&[2.0, 0.0], DEFAULT_RANK_TOL, DEFAULT_RANGE_TOL).unwrap());
    }

    #[test]
    fn dense_roundtrip_and_validation() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let op = SpectralOperator::from_dense(&m).unwrap();
        assert!((op.to_dense() - &m).amax() < 1e-12);
        let mut e = op.eigenvalues().to_vec();
        e.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(e[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e[1], 3.0, epsilon = 1e-12);
        let sq = op.sqrt_dense();
        assert!((&sq * &sq - &m).amax() < 1e-12);

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(SpectralOperator::from_dense(&bad).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(SpectralOperator::from_dense(&asym).is_err());
        assert!(SpectralOperator::diagonal(vec![1.0, -1.0]).is_err());
        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(SpectralOperator::with_basis(vec![1.0, 1.0], skew).is_err());
    }

    fn random_basis(seed: u64, k: usize) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        m.qr().q()
    }

    proptest! {
        #[test]
        fn pinv_of_image_is_projection_onto_kernel_complement(
            eigs in proptest::collection::vec(prop_oneof![Just(0.0), 0.1f64..10.0], 1..6),
            seed in any::<u64>(),
        ) {
            let k = eigs.len();
            let x: Vec<f64> = (0..k).map(|i| ((seed >> (i % 60)) & 0xff) as f64 / 37.0 - 3.0).collect();
            let op = SpectralOperator::with_basis(eigs.clone(), random_basis(seed, k)).unwrap();
            let ax = op.apply(&x).unwrap();
            let back = op.pinv_apply(&ax, DEFAULT_RANK_TOL).unwrap();
            // projection onto (ker A)^⊥ computed in the eigenbasis
            let c = op.to_eigen(&x);
            let proj: Vec<f64> = c.iter().zip(&eigs).map(|(ci, l)| if *l > 0.0 { *ci } else { 0.0 }).collect();
            let proj = op.from_eigen(&proj);
            for (a, b) in back.iter().zip(&proj) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn pinv_has_minimum_norm_among_sampled_solutions(
            eigs in proptest::collection::vec(prop_oneof![Just(0.0), 0.1f64..10.0], 1..6),
            x in proptest::collection::vec(-5.0f64..5.0, 6),
            z in proptest::collection::vec(-5.0f64..5.0, 6),
        ) {
            let k = eigs.len();
            let op = SpectralOperator::diagonal(eigs.clone()).unwrap();
            let y = op.apply(&x[..k]).unwrap();
            let xm = op.pinv_apply(&y, DEFAULT_RANK_TOL).unwrap();
            // any x + z with z in the kernel also solves A x = y
            let other: Vec<f64> = (0..k).map(|i| if eigs[i] == 0.0 { x[i] + z[i] } else { x[i] }).collect();
            let n = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
            prop_assert!(n(&xm) <= n(&other) + 1e-12);
        }

        #[test]
        fn norm_homogeneous_and_triangle(
            p in prop_oneof![Just(1.0), Just(2.0), Just(f64::INFINITY), 1.0f64..6.0],
            w in proptest::collection::vec(0.1f64..3.0, 4),
            a in proptest::collection::vec(-5.0f64..5.0, 4),
            b in proptest::collection::vec(-5.0f64..5.0, 4),
            lambda in -4.0f64..4.0,
        ) {
            let s = WeightedSeqSpace::new(p, w).unwrap();
            let la: Vec<f64> = a.iter().map(|x| lambda * x).collect();
            let na = s.norm(&a).unwrap();
            prop_assert!((s.norm(&la).unwrap() - lambda.abs() * na).abs() <= 1e-10 * (1.0 + na));
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            prop_assert!(s.norm(&sum).unwrap() <= na + s.norm(&b).unwrap() + 1e-10);
        }

        #[test]
        fn projection_idempotent_and_non_expansive(
            p in prop_oneof![Just(1.0), Just(2.0), Just(f64::INFINITY), 0.5f64..6.0],
            w in proptest::collection::vec(0.1f64..3.0, 5),
            u in proptest::collection::vec(-5.0f64..5.0, 5),
            n in 1usize..=5,
        ) {
            let s = WeightedSeqSpace::new(p, w).unwrap();
            let pu = project(&u, n).unwrap();
            prop_assert_eq!(project(&pu, n).unwrap(), pu.clone());
            prop_assert!(s.norm(&pu).unwrap() <= s.norm(&u).unwrap() + 1e-12);
        }
    }
}
