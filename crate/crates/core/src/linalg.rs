//! Shared dense linear-algebra helpers: numerical rank, orthonormal bases,
//! null spaces, Kronecker vectorization and a few norm utilities.
//!
//! All rank decisions in the crate go through [`numerical_rank`] so the
//! tolerance semantics are uniform. Rank-revealing factorizations use
//! column-pivoted QR and symmetric eigendecompositions rather than the
//! iterative SVD, which misbehaves on matrices mixing O(1) blocks with
//! rounding-noise entries.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Safety factor on the adaptive rank threshold. Matrices built from
/// chains of orthonormal-basis products and moderately conditioned
/// coordinate changes carry rounding debris up to a few hundred times
/// `eps`, which must not register as rank; genuine structure in this
/// toolkit lives at 1e-10 relative and above.
pub const RANK_SAFETY: f64 = 1024.0;

/// Rank tolerance policy applied to a singular-value (or pivot) profile.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RankTol {
    /// `RANK_SAFETY * max(dims) * eps * max(sigma_max, 1)`: the usual
    /// SVD-style rule with an absolute floor at the machine noise of
    /// unit-scale data, so a matrix that is rounding debris of O(1)
    /// products is rank zero.
    #[default]
    Adaptive,
    /// Fixed absolute threshold.
    Absolute(f64),
}

/// Number of leading profile values above the threshold implied by `tol`.
///
/// The profile must be nonincreasing in magnitude (singular values or
/// pivoted QR diagonal). Returns the rank together with the effective
/// absolute threshold used.
pub fn numerical_rank(profile: &[f64], max_dim: usize, tol: RankTol) -> (usize, f64) {
    let largest = profile.first().copied().unwrap_or(0.0).abs();
    let threshold = match tol {
        RankTol::Adaptive => RANK_SAFETY * max_dim as f64 * f64::EPSILON * largest.max(1.0),
        RankTol::Absolute(t) => t,
    };
    let rank = profile
        .iter()
        .take_while(|&&s| s.abs() > threshold)
        .count();
    (rank, threshold)
}

/// Rank-revealing data of a column-pivoted QR factorization.
pub struct RankRevealing {
    /// Orthonormal basis of the column span (`rank` columns).
    pub basis: DMatrix<f64>,
    /// Magnitudes of the R diagonal, nonincreasing.
    pub diag: Vec<f64>,
    /// Effective rank threshold that was applied.
    pub threshold: f64,
}

/// Column-pivoted QR with the rank decided by `tol`.
pub fn rank_revealing(m: &DMatrix<f64>, tol: RankTol) -> RankRevealing {
    let (n, k) = m.shape();
    if n == 0 || k == 0 {
        return RankRevealing {
            basis: DMatrix::zeros(n, 0),
            diag: vec![],
            threshold: 0.0,
        };
    }
    let qr = m.clone().col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..n.min(k)).map(|i| r[(i, i)].abs()).collect();
    let (rank, threshold) = numerical_rank(&diag, n.max(k), tol);
    let q = qr.q();
    RankRevealing {
        basis: q.columns(0, rank).into_owned(),
        diag,
        threshold,
    }
}

/// Orthonormal basis of the column span of `m`.
///
/// Returns `(basis, effective_threshold)`; the basis has `rank` columns.
pub fn orth(m: &DMatrix<f64>, tol: RankTol) -> (DMatrix<f64>, f64) {
    let rr = rank_revealing(m, tol);
    (rr.basis, rr.threshold)
}

/// Orthonormal basis of the orthogonal complement of `span(basis)` in R^n.
///
/// `basis` must have orthonormal columns. Works through the projector
/// `I - B B^T`, whose eigenvalues are exactly 0 or 1, so the cut at 1/2 is
/// unambiguous.
pub fn complement(basis: &DMatrix<f64>, ambient: usize) -> DMatrix<f64> {
    let r = basis.ncols();
    if r == 0 {
        return DMatrix::identity(ambient, ambient);
    }
    if r >= ambient {
        return DMatrix::zeros(ambient, 0);
    }
    let proj = symmetrize(&(DMatrix::identity(ambient, ambient) - basis * basis.transpose()));
    let eig = proj.symmetric_eigen();
    let mut order: Vec<usize> = (0..ambient).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let count = order
        .iter()
        .take_while(|&&i| eig.eigenvalues[i] > 0.5)
        .count();
    let mut out = DMatrix::zeros(ambient, count);
    for (col, &i) in order.iter().take(count).enumerate() {
        out.set_column(col, &eig.eigenvectors.column(i));
    }
    out
}

/// Orthonormal basis of the null space of `m` (an n x k matrix, null space
/// in R^k), computed as the complement of the row space.
pub fn nullspace(m: &DMatrix<f64>, tol: RankTol) -> DMatrix<f64> {
    let k = m.ncols();
    if k == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(k, k);
    }
    let (row_space, _) = orth(&m.transpose(), tol);
    complement(&row_space, k)
}

/// Frobenius norm.
pub fn frob(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Relative zero test against an explicit scale: `||m||_F <= tol * scale`.
pub fn is_zero_rel(m: &DMatrix<f64>, tol: f64, scale: f64) -> bool {
    frob(m) <= tol * scale
}

/// Largest singular value, via the Gram matrix of the smaller side.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let (n, k) = m.shape();
    if n == 0 || k == 0 {
        return 0.0;
    }
    let gram = if k <= n {
        m.transpose() * m
    } else {
        m * m.transpose()
    };
    let eig = symmetrize(&gram).symmetric_eigen();
    eig.eigenvalues.iter().copied().fold(0.0f64, f64::max).sqrt()
}

/// Condition-number estimate from the pivoted QR diagonal; `inf` for
/// rank-deficient inputs.
pub fn cond_est(m: &DMatrix<f64>) -> f64 {
    let (n, k) = m.shape();
    if n == 0 || k == 0 {
        return 1.0;
    }
    let qr = m.clone().col_piv_qr();
    let r = qr.r();
    let first = r[(0, 0)].abs();
    let last = r[(n.min(k) - 1, n.min(k) - 1)].abs();
    if last == 0.0 {
        f64::INFINITY
    } else {
        first / last
    }
}

/// True when every entry is finite.
pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Fails with [`Error::NonFinite`] when `m` has NaN or infinite entries.
pub fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if all_finite(m) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Column-stacking vectorization.
pub fn vec_cols(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_cols`].
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// Horizontal concatenation of a non-empty list of equally tall matrices.
pub fn hcat(parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts[0].nrows();
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        assert_eq!(p.nrows(), rows, "hcat: inconsistent row counts");
        out.view_mut((0, at), (rows, p.ncols())).copy_from(p);
        at += p.ncols();
    }
    out
}

/// Vertical concatenation of a non-empty list of equally wide matrices.
pub fn vcat(parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    let cols = parts[0].ncols();
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        assert_eq!(p.ncols(), cols, "vcat: inconsistent column counts");
        out.view_mut((at, 0), (p.nrows(), cols)).copy_from(p);
        at += p.nrows();
    }
    out
}

/// Solve `a x = b` by LU with partial pivoting; `None` when `a` is singular.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().lu().solve(b)
}
