//! Subspace algebra over R^n at a numerical tolerance.
//!
//! Every subspace is stored as an orthonormal basis, recomputed after each
//! operation, which keeps principal-angle tests well conditioned and makes
//! equality decidable. Containment is certified through the largest
//! principal angle between the candidate and its projection.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, RankTol};

/// A linear subspace of R^n, stored as an n x r matrix with orthonormal
/// columns plus the rank tolerance that was used to construct it.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: DMatrix<f64>,
    ambient: usize,
    tol: f64,
}

/// Result of a containment or equality test: the verdict plus the largest
/// principal angle that witnesses it.
#[derive(Debug, Clone, Copy)]
pub struct Containment {
    pub holds: bool,
    pub max_angle: f64,
}

impl Subspace {
    /// The zero subspace of R^n.
    pub fn zero(ambient: usize) -> Self {
        Subspace {
            basis: DMatrix::zeros(ambient, 0),
            ambient,
            tol: 0.0,
        }
    }

    /// All of R^n.
    pub fn full(ambient: usize) -> Self {
        Subspace {
            basis: DMatrix::identity(ambient, ambient),
            ambient,
            tol: 0.0,
        }
    }

    /// Column span of an arbitrary matrix, with the default adaptive rank cut.
    pub fn image(m: &DMatrix<f64>) -> Result<Self> {
        Self::image_with_tol(m, RankTol::Adaptive)
    }

    /// Column span with an explicit rank tolerance.
    pub fn image_with_tol(m: &DMatrix<f64>, tol: RankTol) -> Result<Self> {
        linalg::check_finite(m, "image operand")?;
        let (basis, eff) = linalg::orth(m, tol);
        Ok(Subspace {
            ambient: m.nrows(),
            basis,
            tol: eff,
        })
    }

    /// Null space of `m` (a subspace of R^{ncols}).
    pub fn kernel(m: &DMatrix<f64>) -> Result<Self> {
        Self::kernel_with_tol(m, RankTol::Adaptive)
    }

    pub fn kernel_with_tol(m: &DMatrix<f64>, tol: RankTol) -> Result<Self> {
        linalg::check_finite(m, "kernel operand")?;
        let basis = linalg::nullspace(m, tol);
        Ok(Subspace {
            ambient: m.ncols(),
            basis,
            tol: 0.0,
        })
    }

    /// Wraps an already-orthonormal basis. Fails when the columns are not
    /// orthonormal to 1e-12.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        let r = basis.ncols();
        let gram = basis.transpose() * &basis;
        let defect = linalg::frob(&(gram - DMatrix::identity(r, r)));
        if defect > 1e-12 * (r as f64).max(1.0) {
            return Err(Error::Numerical(format!(
                "basis columns not orthonormal (defect {defect:.3e})"
            )));
        }
        Ok(Subspace {
            ambient: basis.nrows(),
            basis,
            tol: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn is_zero(&self) -> bool {
        self.basis.ncols() == 0
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Rank tolerance recorded at construction.
    pub fn tol(&self) -> f64 {
        self.tol
    }

    fn check_ambient(&self, other: &Subspace) -> Result<()> {
        if self.ambient != other.ambient {
            return Err(Error::AmbientMismatch {
                left: self.ambient,
                right: other.ambient,
            });
        }
        Ok(())
    }

    /// span(U ∪ V).
    pub fn sum(&self, other: &Subspace) -> Result<Subspace> {
        self.check_ambient(other)?;
        if self.is_zero() {
            return Ok(other.clone());
        }
        if other.is_zero() {
            return Ok(self.clone());
        }
        let stacked = linalg::hcat(&[self.basis.clone(), other.basis.clone()]);
        Subspace::image(&stacked)
    }

    /// U ∩ V, via the null space of the coefficient pairing
    /// `[basis_U, -basis_V]` mapped back through `basis_U`.
    pub fn intersect(&self, other: &Subspace) -> Result<Subspace> {
        self.check_ambient(other)?;
        if self.is_zero() || other.is_zero() {
            return Ok(Subspace::zero(self.ambient));
        }
        let ru = self.dim();
        let stacked = linalg::hcat(&[self.basis.clone(), -&other.basis]);
        let null = linalg::nullspace(&stacked, RankTol::Adaptive);
        if null.ncols() == 0 {
            return Ok(Subspace::zero(self.ambient));
        }
        let coeff_u = null.rows(0, ru).into_owned();
        Subspace::image(&(&self.basis * coeff_u))
    }

    /// Preimage `{x : M x ∈ L}`, computed as the null space of
    /// `P_{L^⊥} M`. Always contains the null space of `M`.
    pub fn preimage(m: &DMatrix<f64>, l: &Subspace) -> Result<Subspace> {
        Self::preimage_with_tol(m, l, RankTol::Adaptive)
    }

    pub fn preimage_with_tol(m: &DMatrix<f64>, l: &Subspace, tol: RankTol) -> Result<Subspace> {
        if m.nrows() != l.ambient {
            return Err(Error::AmbientMismatch {
                left: m.nrows(),
                right: l.ambient,
            });
        }
        linalg::check_finite(m, "preimage operand")?;
        let proj_rej = if l.is_zero() {
            m.clone()
        } else {
            m - &l.basis * (l.basis.transpose() * m)
        };
        // The rejection can be pure rounding noise (when im(M) ⊆ L), so its
        // rank must be judged against the scale of M, not against itself.
        let tol = match tol {
            RankTol::Absolute(t) => RankTol::Absolute(t),
            RankTol::Adaptive => {
                let dim = m.nrows().max(m.ncols());
                RankTol::Absolute(
                    linalg::RANK_SAFETY
                        * dim as f64
                        * f64::EPSILON
                        * linalg::spectral_norm(m).max(1.0),
                )
            }
        };
        Subspace::kernel_with_tol(&proj_rej, tol)
    }

    /// Orthogonal complement in the ambient space.
    pub fn orth_complement(&self) -> Subspace {
        Subspace {
            basis: linalg::complement(&self.basis, self.ambient),
            ambient: self.ambient,
            tol: self.tol,
        }
    }

    /// Image of this subspace under a linear map: span(M * basis).
    pub fn map(&self, m: &DMatrix<f64>) -> Result<Subspace> {
        if m.ncols() != self.ambient {
            return Err(Error::AmbientMismatch {
                left: m.ncols(),
                right: self.ambient,
            });
        }
        if self.is_zero() {
            return Ok(Subspace::zero(m.nrows()));
        }
        Subspace::image(&(m * &self.basis))
    }

    /// Smallest A-invariant subspace containing `l`:
    /// `l + A l + ... + A^{n-1} l`, with early stop once the dimension
    /// stabilizes (the chain is monotone).
    pub fn smallest_invariant(a: &DMatrix<f64>, l: &Subspace) -> Result<Subspace> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(
                "smallest_invariant needs a square matrix".to_string(),
            ));
        }
        if a.nrows() != l.ambient {
            return Err(Error::AmbientMismatch {
                left: a.nrows(),
                right: l.ambient,
            });
        }
        let mut current = l.clone();
        for _ in 0..a.nrows() {
            let next = current.sum(&current.map(a)?)?;
            if next.dim() == current.dim() {
                return Ok(current);
            }
            current = next;
        }
        Ok(current)
    }

    /// Largest A-invariant subspace contained in `l`:
    /// `l ∩ A^{-1} l ∩ ... ∩ A^{-(n-1)} l`, iterated as
    /// `cur ← l ∩ A^{-1} cur` until the dimension stabilizes.
    pub fn largest_invariant_in(l: &Subspace, a: &DMatrix<f64>) -> Result<Subspace> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(
                "largest_invariant_in needs a square matrix".to_string(),
            ));
        }
        if a.nrows() != l.ambient {
            return Err(Error::AmbientMismatch {
                left: a.nrows(),
                right: l.ambient,
            });
        }
        let mut current = l.clone();
        for _ in 0..a.nrows() {
            let next = l.intersect(&Subspace::preimage(a, &current)?)?;
            if next.dim() == current.dim() {
                return Ok(next);
            }
            current = next;
        }
        Ok(current)
    }

    /// Largest principal angle between `other` and its projection onto
    /// `self`, i.e. `asin` of the largest singular value of
    /// `(I - U U^T) V`. Zero-dimensional `other` is contained trivially.
    pub fn angle_from(&self, other: &Subspace) -> Result<f64> {
        self.check_ambient(other)?;
        if other.is_zero() {
            return Ok(0.0);
        }
        if self.is_zero() {
            return Ok(std::f64::consts::FRAC_PI_2);
        }
        let residual = &other.basis - &self.basis * (self.basis.transpose() * &other.basis);
        let sin_max = linalg::spectral_norm(&residual);
        Ok(sin_max.clamp(0.0, 1.0).asin())
    }

    /// Containment test `other ⊆ self` at an angle tolerance.
    pub fn contains(&self, other: &Subspace, tol_angle: f64) -> Result<Containment> {
        let max_angle = self.angle_from(other)?;
        Ok(Containment {
            holds: max_angle <= tol_angle,
            max_angle,
        })
    }

    /// Two-sided containment (subspace equality) at an angle tolerance.
    pub fn equals(&self, other: &Subspace, tol_angle: f64) -> Result<Containment> {
        let fwd = self.angle_from(other)?;
        let bwd = other.angle_from(self)?;
        let max_angle = fwd.max(bwd);
        Ok(Containment {
            holds: max_angle <= tol_angle,
            max_angle,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn e(n: usize, i: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, 1);
        m[(i, 0)] = 1.0;
        m
    }

    #[test]
    fn image_examples() {
        let full = Subspace::image(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(full.dim(), 3);

        let dependent = dmatrix![1.0, 2.0; 0.0, 0.0; 0.0, 0.0];
        let s = Subspace::image(&dependent).unwrap();
        assert_eq!(s.dim(), 1);

        let zero = Subspace::image(&DMatrix::zeros(3, 2)).unwrap();
        assert_eq!(zero.dim(), 0);
    }

    #[test]
    fn image_rejects_non_finite() {
        let m = dmatrix![f64::NAN, 0.0; 0.0, 1.0];
        assert!(matches!(Subspace::image(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn sum_examples() {
        let e1 = Subspace::image(&e(2, 0)).unwrap();
        let e2 = Subspace::image(&e(2, 1)).unwrap();
        assert_eq!(e1.sum(&e2).unwrap().dim(), 2);
        assert_eq!(e1.sum(&Subspace::zero(2)).unwrap().dim(), 1);

        let diag = Subspace::image(&dmatrix![1.0; 1.0]).unwrap();
        assert_eq!(e1.sum(&diag).unwrap().dim(), 2);
    }

    #[test]
    fn intersect_examples() {
        let u = Subspace::image(&dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0]).unwrap();
        let v = Subspace::image(&dmatrix![0.0, 0.0; 1.0, 0.0; 0.0, 1.0]).unwrap();
        let w = u.intersect(&v).unwrap();
        assert_eq!(w.dim(), 1);
        assert!((w.basis()[(1, 0)].abs() - 1.0).abs() < 1e-12);

        let full = Subspace::full(3);
        let back = u.intersect(&full).unwrap();
        assert!(back.equals(&u, 1e-10).unwrap().holds);

        let e1 = Subspace::image(&e(2, 0)).unwrap();
        let e2 = Subspace::image(&e(2, 1)).unwrap();
        assert_eq!(e1.intersect(&e2).unwrap().dim(), 0);
    }

    #[test]
    fn preimage_examples() {
        let l = Subspace::image(&e(2, 0)).unwrap();
        let ident = DMatrix::identity(2, 2);
        assert!(Subspace::preimage(&ident, &l)
            .unwrap()
            .equals(&l, 1e-10)
            .unwrap()
            .holds);

        let zero = DMatrix::zeros(2, 2);
        assert_eq!(Subspace::preimage(&zero, &l).unwrap().dim(), 2);

        let m = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.0]);
        assert_eq!(Subspace::preimage(&m, &l).unwrap().dim(), 2);
    }

    #[test]
    fn orth_complement_examples() {
        let e1 = Subspace::image(&e(2, 0)).unwrap();
        let c = e1.orth_complement();
        assert_eq!(c.dim(), 1);
        assert!(c.basis()[(1, 0)].abs() > 0.999);
        assert_eq!(Subspace::full(3).orth_complement().dim(), 0);
        assert_eq!(Subspace::zero(3).orth_complement().dim(), 3);
    }

    #[test]
    fn smallest_invariant_examples() {
        let shift = dmatrix![0.0, 1.0; 0.0, 0.0];
        let l = Subspace::image(&e(2, 1)).unwrap();
        assert_eq!(Subspace::smallest_invariant(&shift, &l).unwrap().dim(), 2);

        let any = dmatrix![0.3, -1.0; 2.0, 0.1];
        assert_eq!(
            Subspace::smallest_invariant(&any, &Subspace::full(2))
                .unwrap()
                .dim(),
            2
        );

        let a = DMatrix::from_diagonal(&nalgebra::dvector![-1.0, 0.0]);
        let l1 = Subspace::image(&e(2, 0)).unwrap();
        let inv = Subspace::smallest_invariant(&a, &l1).unwrap();
        assert!(inv.equals(&l1, 1e-10).unwrap().holds);
    }

    #[test]
    fn largest_invariant_examples() {
        let any = dmatrix![0.3, -1.0; 2.0, 0.1];
        assert_eq!(
            Subspace::largest_invariant_in(&Subspace::full(2), &any)
                .unwrap()
                .dim(),
            2
        );

        let shift = dmatrix![0.0, 1.0; 0.0, 0.0];
        let l = Subspace::image(&e(2, 1)).unwrap();
        assert_eq!(Subspace::largest_invariant_in(&l, &shift).unwrap().dim(), 0);

        let a = DMatrix::from_diagonal(&nalgebra::dvector![-1.0, 0.0]);
        let l2 = Subspace::image(&e(2, 1)).unwrap();
        let inv = Subspace::largest_invariant_in(&l2, &a).unwrap();
        assert!(inv.equals(&l2, 1e-10).unwrap().holds);
    }

    #[test]
    fn contains_examples() {
        let full = Subspace::full(3);
        let e1 = Subspace::image(&e(3, 0)).unwrap();
        let c = full.contains(&e1, 1e-10).unwrap();
        assert!(c.holds && c.max_angle < 1e-12);

        let e1_2d = Subspace::image(&e(2, 0)).unwrap();
        let e2_2d = Subspace::image(&e(2, 1)).unwrap();
        let c = e1_2d.contains(&e2_2d, 1e-10).unwrap();
        assert!(!c.holds);
        assert!((c.max_angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12);

        let diag = Subspace::image(&dmatrix![1.0; 1.0]).unwrap();
        let c = diag.contains(&e1_2d, 1e-10).unwrap();
        assert!(!c.holds);
        assert!((c.max_angle - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn ambient_mismatch_is_reported() {
        let u = Subspace::full(2);
        let v = Subspace::full(3);
        assert!(matches!(u.sum(&v), Err(Error::AmbientMismatch { .. })));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;
        use rand::{Rng, SeedableRng};

        fn random_subspace(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Subspace {
            let r = rng.random_range(0..=n);
            let m = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
            Subspace::image(&m).unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn idempotence(seed in 0u64..1_000_000, n in 1usize..10) {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let u = random_subspace(&mut rng, n);
                prop_assert!(u.sum(&u).unwrap().equals(&u, 1e-10).unwrap().holds);
                prop_assert!(u.intersect(&u).unwrap().equals(&u, 1e-10).unwrap().holds);
            }

            #[test]
            fn de_morgan_duality(seed in 0u64..1_000_000, n in 1usize..10) {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let u = random_subspace(&mut rng, n);
                let v = random_subspace(&mut rng, n);
                let lhs = u.sum(&v).unwrap().orth_complement();
                let rhs = u.orth_complement().intersect(&v.orth_complement()).unwrap();
                prop_assert!(lhs.equals(&rhs, 1e-8).unwrap().holds);
            }

            #[test]
            fn grassmann_dimension_formula(seed in 0u64..1_000_000, n in 1usize..10) {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let u = random_subspace(&mut rng, n);
                let v = random_subspace(&mut rng, n);
                let sum = u.sum(&v).unwrap();
                let cap = u.intersect(&v).unwrap();
                prop_assert_eq!(sum.dim() + cap.dim(), u.dim() + v.dim());
            }

            #[test]
            fn invariant_closures(seed in 0u64..1_000_000, n in 1usize..8) {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                let l = random_subspace(&mut rng, n);

                let small = Subspace::smallest_invariant(&a, &l).unwrap();
                prop_assert!(small.contains(&l, 1e-8).unwrap().holds);
                prop_assert!(small.contains(&small.map(&a).unwrap(), 1e-8).unwrap().holds);

                let large = Subspace::largest_invariant_in(&l, &a).unwrap();
                prop_assert!(l.contains(&large, 1e-8).unwrap().holds);
                prop_assert!(large.contains(&large.map(&a).unwrap(), 1e-8).unwrap().holds);
            }
        }
    }
}
