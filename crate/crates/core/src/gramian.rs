//! Coupled generalized Lyapunov equations, Gramian containment reports and
//! balanced-truncation model reduction.
//!
//! The equations solved here are
//!
//! ```text
//! A P + P A^T + sum_j (F_j P F_j^T + B~_j B~_j^T) = 0
//! A^T Q + Q A + sum_j (F_j^T Q F_j + C~_j^T C~_j) = 0
//! ```
//!
//! vectorized into an n^2 x n^2 linear system through
//! `vec(A X B^T) = (B ⊗ A) vec(X)` and solved densely; this is intentional
//! desk-scale machinery, so exactness and testability win over scalability
//! and the state dimension is capped.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, RankTol};
use crate::reform::{GleMatrices, GleStacking, JumpOdeSystem, ModeDynamics, SwitchingSignal};
use crate::sim::{self, InputSignal, Trajectory};
use crate::subspace::{Containment, Subspace};

/// Default cap on the state dimension of the dense n^2 x n^2 solve.
pub const DEFAULT_DIM_CAP: usize = 200;

/// Symmetric positive-semidefinite solutions of the two coupled equations,
/// with their residual norms.
#[derive(Debug, Clone)]
pub struct GramianPair {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub residual_p: f64,
    pub residual_q: f64,
    pub operator_spectrum_ok: bool,
}

/// Solve both generalized Lyapunov equations with the default size cap.
pub fn solve_gle(mats: &GleMatrices, tol: f64) -> Result<GramianPair> {
    solve_gle_with_cap(mats, tol, DEFAULT_DIM_CAP)
}

pub fn solve_gle_with_cap(mats: &GleMatrices, tol: f64, cap: usize) -> Result<GramianPair> {
    let n = mats.state_dim();
    if n > cap {
        return Err(Error::DimensionMismatch(format!(
            "state dimension {n} exceeds the dense-solve cap {cap}"
        )));
    }
    if n == 0 {
        return Err(Error::DimensionMismatch("empty system".to_string()));
    }

    let p = solve_one(&mats.a, &mats.f, &mats.b, tol, "P")?;
    let dual = mats.transposed();
    let q = solve_one(&dual.a, &dual.f, &dual.b, tol, "Q")?;

    let residual_p = gle_residual(&mats.a, &mats.f, &mats.b, &p);
    let residual_q = gle_residual(&dual.a, &dual.f, &dual.b, &q);
    let scale_p = 1.0 + linalg::frob(&p);
    let scale_q = 1.0 + linalg::frob(&q);
    if residual_p > tol * scale_p || residual_q > tol * scale_q {
        return Err(Error::OperatorSingular(format!(
            "solution residuals {residual_p:.3e} / {residual_q:.3e} exceed tolerance; \
             the operator is numerically rank-deficient"
        )));
    }

    Ok(GramianPair {
        p,
        q,
        residual_p,
        residual_q,
        operator_spectrum_ok: true,
    })
}

/// Solve `A X + X A^T + sum_j F_j X F_j^T + sum_j G_j G_j^T = 0` for the
/// symmetric PSD `X`.
fn solve_one(
    a: &DMatrix<f64>,
    f: &[DMatrix<f64>],
    g: &[DMatrix<f64>],
    tol: f64,
    which: &'static str,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut op = eye.kronecker(a) + a.kronecker(&eye);
    for fj in f {
        op += fj.kronecker(fj);
    }
    let mut rhs_mat = DMatrix::<f64>::zeros(n, n);
    for gj in g {
        rhs_mat += gj * gj.transpose();
    }
    let rhs = -linalg::vec_cols(&rhs_mat);

    let lu = op.clone().lu();
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::OperatorSingular(format!("dense solve for {which} failed")))?;
    let lin_residual = (&op * &x - &rhs).norm() / (1.0 + rhs.norm());
    if lin_residual > tol.max(1e-8) {
        return Err(Error::OperatorSingular(format!(
            "linear-system residual {lin_residual:.3e} while solving for {which}"
        )));
    }

    let x = linalg::symmetrize(&linalg::unvec(&DVector::from(x), n, n));
    enforce_psd(x, which)
}

/// Symmetrize and clip eigenvalues in `[-1e-10 |X|, 0)` to zero; anything
/// more negative is an error, not clipped.
fn enforce_psd(x: DMatrix<f64>, which: &'static str) -> Result<DMatrix<f64>> {
    let scale = linalg::frob(&x).max(1.0);
    let eig = x.symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig < -1e-10 * scale {
        return Err(Error::NotPsd { which, min_eig });
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let rebuilt =
        &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    Ok(linalg::symmetrize(&rebuilt))
}

/// Frobenius norm of the equation left-hand side at a candidate solution.
pub fn gle_residual(
    a: &DMatrix<f64>,
    f: &[DMatrix<f64>],
    g: &[DMatrix<f64>],
    x: &DMatrix<f64>,
) -> f64 {
    let mut lhs = a * x + x * a.transpose();
    for fj in f {
        lhs += fj * x * fj.transpose();
    }
    for gj in g {
        lhs += gj * gj.transpose();
    }
    linalg::frob(&lhs)
}

/// Restriction of the Lyapunov data to the common differential subspace,
/// in the quasi-Weierstrass coordinates of the first mode, together with
/// the map that lifts restricted Gramians back to the full space.
#[derive(Debug, Clone)]
pub struct DifferentialRestriction {
    pub mats: GleMatrices,
    /// Columns of `T_1` spanning the differential subspace (n x n_J); a
    /// restricted Gramian `X_r` lifts to `lift X_r lift^T`, zero on the
    /// algebraic complement.
    pub lift: DMatrix<f64>,
}

impl DifferentialRestriction {
    pub fn lift_gramian(&self, restricted: &DMatrix<f64>) -> DMatrix<f64> {
        &self.lift * restricted * self.lift.transpose()
    }
}

/// Remove the structural singularity of the drift by restricting every mode
/// to the shared differential subspace. Refuses when the modes do not share
/// one (heterogeneous projector images are deferred territory).
pub fn restrict_to_differential(
    jos: &JumpOdeSystem,
    stacking: GleStacking,
) -> Result<DifferentialRestriction> {
    let decoupled = jos.decoupled.as_ref().ok_or_else(|| {
        Error::HeterogeneousDifferentialSubspaces(
            "restriction needs the decoupling data of a descriptor model".to_string(),
        )
    })?;
    let n = jos.state_dim();
    let n_j = decoupled[0].qwf.n_j;
    for (j, d) in decoupled.iter().enumerate() {
        if d.qwf.n_j != n_j {
            return Err(Error::HeterogeneousDifferentialSubspaces(format!(
                "mode {} has differential dimension {}, mode 1 has {}",
                j + 1,
                d.qwf.n_j,
                n_j
            )));
        }
    }
    let reference = Subspace::image(&decoupled[0].pi)?;
    for (j, d) in decoupled.iter().enumerate().skip(1) {
        let image = Subspace::image(&d.pi)?;
        let eq = reference.equals(&image, 1e-8)?;
        if !eq.holds {
            return Err(Error::HeterogeneousDifferentialSubspaces(format!(
                "projector images of modes 1 and {} differ (angle {:.3e})",
                j + 1,
                eq.max_angle
            )));
        }
    }

    let t1 = decoupled[0].qwf.t.clone();
    let t1_inv = t1
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular coordinate transform".to_string()))?;

    let full = crate::reform::gle_matrices(jos, stacking);
    let restrict_state = |m: &DMatrix<f64>| -> DMatrix<f64> {
        (&t1_inv * m * &t1).view((0, 0), (n_j, n_j)).into_owned()
    };
    let a_r = restrict_state(&full.a);
    let f_r: Vec<_> = full.f.iter().map(&restrict_state).collect();
    let b_r: Vec<_> = full
        .b
        .iter()
        .map(|b| (&t1_inv * b).rows(0, n_j).into_owned())
        .collect();
    let c_r: Vec<_> = full
        .c
        .iter()
        .map(|c| (c * &t1).columns(0, n_j).into_owned())
        .collect();

    // The discarded algebraic rows must be structurally zero; a residue
    // here means the common-subspace check above was fooled.
    for (j, b) in full.b.iter().enumerate() {
        let tail = (&t1_inv * b).rows(n_j, n - n_j).into_owned();
        let scale = 1.0 + linalg::frob(b);
        if linalg::frob(&tail) > 1e-6 * scale {
            return Err(Error::HeterogeneousDifferentialSubspaces(format!(
                "input block of mode {} leaks into the algebraic coordinates",
                j + 1
            )));
        }
    }

    Ok(DifferentialRestriction {
        mats: GleMatrices {
            a: a_r,
            f: f_r,
            b: b_r,
            c: c_r,
        },
        lift: t1.columns(0, n_j).into_owned(),
    })
}

/// Gramian-image containment of the reachable and observable subspaces,
/// per switching signal.
#[derive(Debug, Clone)]
pub struct ContainmentReport {
    pub per_signal: Vec<SignalContainment>,
    pub all_hold: bool,
}

#[derive(Debug, Clone)]
pub struct SignalContainment {
    pub reach: Containment,
    pub observe: Containment,
}

pub fn containment_report(
    gram: &GramianPair,
    jos: &JumpOdeSystem,
    signals: &[SwitchingSignal],
    tol_angle: f64,
) -> Result<ContainmentReport> {
    let span_p = Subspace::image(&gram.p)?;
    let span_q = Subspace::image(&gram.q)?;
    let mut per_signal = Vec::with_capacity(signals.len());
    let mut all_hold = true;
    for q in signals {
        let reach_set = crate::sets::reach_recursion(jos, q)?;
        let obs_set = crate::sets::unobs_recursion(jos, q)?;
        let reach = span_p.contains(reach_set.reachable(), tol_angle)?;
        let observe = span_q.contains(&obs_set.observable(), tol_angle)?;
        all_hold &= reach.holds && observe.holds;
        per_signal.push(SignalContainment { reach, observe });
    }
    Ok(ContainmentReport {
        per_signal,
        all_hold,
    })
}

/// Square-root balancing projections.
#[derive(Debug, Clone)]
pub struct BalanceResult {
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
    /// All singular values of `L_Q^T L_P`, nonincreasing.
    pub hankel: Vec<f64>,
    /// `|W^T V - I|_F`.
    pub bi_orthogonality_defect: f64,
}

/// Square-root balanced truncation to order `r`.
///
/// Factors `P = L_P L_P^T`, `Q = L_Q L_Q^T` through eigendecompositions
/// (the Gramians of a constrained system are typically singular, so
/// Cholesky is not an option), takes the SVD `L_Q^T L_P = U S Z^T` and
/// forms `V = L_P Z_r S_r^{-1/2}`, `W = L_Q U_r S_r^{-1/2}`.
pub fn balance(gram: &GramianPair, r: usize) -> Result<BalanceResult> {
    let n = gram.p.nrows();
    let l_p = psd_sqrt_factor(&gram.p);
    let l_q = psd_sqrt_factor(&gram.q);
    let product = l_q.transpose() * &l_p;
    let svd = product.clone().svd(true, true);
    let hankel: Vec<f64> = svd.singular_values.iter().copied().collect();
    let (rank, _) = linalg::numerical_rank(&hankel, n, RankTol::Adaptive);
    if r == 0 || r > rank {
        return Err(Error::RankTooLow {
            requested: r,
            max_feasible: rank,
        });
    }
    let u = svd.u.expect("SVD with compute_u");
    let z_t = svd.v_t.expect("SVD with compute_v");
    let scale = DMatrix::from_diagonal(&DVector::from_iterator(
        r,
        hankel.iter().take(r).map(|s| 1.0 / s.sqrt()),
    ));
    let v = &l_p * z_t.rows(0, r).transpose() * &scale;
    let w = &l_q * u.columns(0, r) * &scale;
    let defect = linalg::frob(&(w.transpose() * &v - DMatrix::identity(r, r)));
    Ok(BalanceResult {
        v,
        w,
        hankel,
        bi_orthogonality_defect: defect,
    })
}

/// All singular values of `L_Q^T L_P`, nonincreasing, without forming the
/// truncated projections.
pub fn hankel_values(gram: &GramianPair) -> Vec<f64> {
    let l_p = psd_sqrt_factor(&gram.p);
    let l_q = psd_sqrt_factor(&gram.q);
    let product = l_q.transpose() * &l_p;
    let svd = product.svd(false, false);
    let mut values: Vec<f64> = svd.singular_values.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// `L` with `X = L L^T` for symmetric PSD `X`, via eigendecomposition with
/// negative rounding noise clipped to zero.
fn psd_sqrt_factor(x: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = linalg::symmetrize(x).symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// A reduced jump-ODE model obtained by Petrov–Galerkin projection with the
/// balancing bases.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub hankel: Vec<f64>,
    pub modes: Vec<ModeDynamics>,
    /// `|Pi_r^2 - Pi_r|_F` per mode: the projected jump maps are generally
    /// no longer idempotent, which is reported rather than hidden.
    pub pi_idempotency_defect: Vec<f64>,
}

impl ReducedModel {
    pub fn order(&self) -> usize {
        self.v.ncols()
    }

    pub fn jump_ode_system(&self) -> JumpOdeSystem {
        JumpOdeSystem::from_modes(self.modes.clone())
    }
}

/// Project every per-mode matrix of the jump-ODE system with the balancing
/// bases of order `r`.
pub fn reduce(jos: &JumpOdeSystem, gram: &GramianPair, r: usize) -> Result<ReducedModel> {
    let bal = balance(gram, r)?;
    let (v, w) = (bal.v, bal.w);
    let mut modes = Vec::with_capacity(jos.mode_count());
    let mut pi_defect = Vec::with_capacity(jos.mode_count());
    for mode in &jos.modes {
        let pi_r = w.transpose() * &mode.pi * &v;
        pi_defect.push(linalg::frob(&(&pi_r * &pi_r - &pi_r)));
        modes.push(ModeDynamics {
            a_diff: w.transpose() * &mode.a_diff * &v,
            b_diff: w.transpose() * &mode.b_diff,
            c_diff: &mode.c_diff * &v,
            pi: pi_r,
            jump_b: w.transpose() * &mode.jump_b,
            feedthrough: mode.feedthrough.clone(),
            imp_c: &mode.imp_c * &v,
            nu: mode.nu,
        });
    }
    Ok(ReducedModel {
        v,
        w,
        hankel: bal.hankel,
        modes,
        pi_idempotency_defect: pi_defect,
    })
}

/// Output discrepancy between the full and the reduced model on one run.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub max_output_error: f64,
    pub l2_output_error: f64,
    pub max_impulse_error: f64,
    pub max_pi_idempotency_defect: f64,
}

/// Reduce to order `r`, simulate both models on `(q, u)` and report the
/// output and impulse-coefficient discrepancies.
pub fn reduce_and_compare(
    jos: &JumpOdeSystem,
    gram: &GramianPair,
    r: usize,
    q: &SwitchingSignal,
    u: &InputSignal,
    dt: f64,
) -> Result<(ReducedModel, ComparisonReport)> {
    let reduced = reduce(jos, gram, r)?;
    let reduced_sys = reduced.jump_ode_system();
    let full_traj = sim::simulate(jos, q, u, dt)?;
    let red_traj = sim::simulate(&reduced_sys, q, u, dt)?;
    let report = compare_outputs(&full_traj, &red_traj, &reduced);
    Ok((reduced, report))
}

fn compare_outputs(full: &Trajectory, red: &Trajectory, model: &ReducedModel) -> ComparisonReport {
    let mut max_err = 0.0f64;
    let mut l2_sq = 0.0;
    for (i, ((tf, _, yf), (_, _, yr))) in full.samples.iter().zip(&red.samples).enumerate() {
        let diff = (yf - yr).norm();
        max_err = max_err.max(diff);
        let weight = if i + 1 < full.samples.len() {
            full.samples[i + 1].0 - tf
        } else {
            0.0
        };
        l2_sq += diff * diff * weight;
    }
    let mut max_imp = 0.0f64;
    for (rf, rr) in full.impulses.iter().zip(&red.impulses) {
        for (cf, cr) in rf.coefficients.iter().zip(&rr.coefficients) {
            max_imp = max_imp.max((&cf.value - &cr.value).norm());
        }
    }
    ComparisonReport {
        max_output_error: max_err,
        l2_output_error: l2_sq.sqrt(),
        max_impulse_error: max_imp,
        max_pi_idempotency_defect: model
            .pi_idempotency_defect
            .iter()
            .copied()
            .fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pencil::ModeSystem;
    use crate::reform::{build_jump_ode, gle_matrices, GleStacking, SwitchedDae};
    use crate::Tolerances;
    use nalgebra::{dmatrix, dvector};

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    fn scalar_modes(drifts: &[f64]) -> JumpOdeSystem {
        let modes = drifts
            .iter()
            .map(|&a| {
                ModeSystem::new(
                    DMatrix::identity(1, 1),
                    dmatrix![a],
                    dmatrix![1.0],
                    dmatrix![1.0],
                )
                .unwrap()
            })
            .collect();
        let sys = SwitchedDae::new(modes, &tols()).unwrap();
        build_jump_ode(&sys, &tols()).unwrap()
    }

    #[test]
    fn scalar_single_mode_gramians() {
        let jos = scalar_modes(&[-1.0]);
        let mats = gle_matrices(&jos, GleStacking::AllModes);
        let gram = solve_gle(&mats, 1e-10).unwrap();
        assert!((gram.p[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((gram.q[(0, 0)] - 0.5).abs() < 1e-12);
        assert!(gram.residual_p < 1e-12);
    }

    #[test]
    fn scalar_two_mode_gramians() {
        let jos = scalar_modes(&[-1.0, -2.0]);
        let mats = gle_matrices(&jos, GleStacking::AllModes);
        let gram = solve_gle(&mats, 1e-10).unwrap();
        assert!((gram.p[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((gram.q[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn desk_model_has_no_gramians() {
        let mode1 = ModeSystem::new(
            dmatrix![1.0, 0.0; 0.0, 0.0],
            DMatrix::from_diagonal(&dvector![-1.0, 1.0]),
            dmatrix![1.0; 1.0],
            dmatrix![1.0, 0.0],
        )
        .unwrap();
        let mode2 = ModeSystem::new(
            dmatrix![0.0, 1.0; 0.0, 0.0],
            DMatrix::identity(2, 2),
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0],
        )
        .unwrap();
        let sys = SwitchedDae::new(vec![mode1, mode2], &tols()).unwrap();
        let jos = build_jump_ode(&sys, &tols()).unwrap();
        let mats = gle_matrices(&jos, GleStacking::AllModes);
        let err = solve_gle(&mats, 1e-10).unwrap_err();
        assert!(
            matches!(err, Error::OperatorSingular(_) | Error::NotPsd { .. }),
            "unexpected error: {err}"
        );
    }

    #[test]
    fn duality_swaps_the_pair() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let n = 3;
            let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let a = g - DMatrix::identity(n, n) * 3.0;
            let f2 = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.2..0.2));
            let b = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
            let c = DMatrix::from_fn(1, n, |_, _| rng.random_range(-1.0..1.0));
            let mats = GleMatrices {
                a,
                f: vec![DMatrix::zeros(n, n), f2],
                b: vec![b.clone(), b],
                c: vec![c.clone(), c],
            };
            let gram = solve_gle(&mats, 1e-9).unwrap();
            let swapped = solve_gle(&mats.transposed(), 1e-9).unwrap();
            assert!(linalg::frob(&(&gram.p - &swapped.q)) < 1e-9);
            assert!(linalg::frob(&(&gram.q - &swapped.p)) < 1e-9);
        }
    }

    #[test]
    fn single_mode_reduces_to_the_classical_gramian() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let n = rng.random_range(2..6);
            let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let a = g - DMatrix::identity(n, n) * 2.5;
            let b = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
            let mats = GleMatrices {
                a: a.clone(),
                f: vec![DMatrix::zeros(n, n)],
                b: vec![b.clone()],
                c: vec![DMatrix::from_fn(1, n, |_, _| rng.random_range(-1.0..1.0))],
            };
            let gram = solve_gle(&mats, 1e-10).unwrap();
            let oracle = integral_gramian(&a, &b, 40.0, 4000);
            let rel = linalg::frob(&(&gram.p - &oracle)) / (1.0 + linalg::frob(&oracle));
            assert!(rel < 1e-8, "relative deviation {rel:.2e}");
        }
    }

    /// Quadrature oracle for the controllability Gramian of a stable LTI
    /// system: composite Gauss–Legendre on [0, t_max]. Deliberately a
    /// different route than the Kronecker solve it checks.
    fn integral_gramian(a: &DMatrix<f64>, b: &DMatrix<f64>, t_max: f64, panels: usize) -> DMatrix<f64> {
        let nodes = [
            -0.932469514203152,
            -0.661209386466265,
            -0.238619186083197,
            0.238619186083197,
            0.661209386466265,
            0.932469514203152,
        ];
        let weights = [
            0.171324492379170,
            0.360761573048139,
            0.467913934572691,
            0.467913934572691,
            0.360761573048139,
            0.171324492379170,
        ];
        let n = a.nrows();
        let h = t_max / panels as f64;
        let mut acc = DMatrix::<f64>::zeros(n, n);
        for k in 0..panels {
            let mid = (k as f64 + 0.5) * h;
            for (x, w) in nodes.iter().zip(weights) {
                let t = mid + x * h / 2.0;
                let e = crate::expm::expm(a, t).unwrap();
                let eb = &e * b;
                acc += &eb * eb.transpose() * (w * h / 2.0);
            }
        }
        acc
    }

    #[test]
    fn stacking_choice_leaves_the_image_unchanged() {
        let jos = scalar_modes(&[-1.0, -2.0]);
        let all = solve_gle(&gle_matrices(&jos, GleStacking::AllModes), 1e-10).unwrap();
        let no_self = solve_gle(&gle_matrices(&jos, GleStacking::ExcludeSelf), 1e-10).unwrap();
        let span_all = Subspace::image(&all.p).unwrap();
        let span_no_self = Subspace::image(&no_self.p).unwrap();
        assert!(span_all.equals(&span_no_self, 1e-9).unwrap().holds);
    }

    #[test]
    fn restriction_identity_for_ode_modes() {
        let jos = scalar_modes(&[-1.0, -2.0]);
        let restr = restrict_to_differential(&jos, GleStacking::AllModes).unwrap();
        assert_eq!(restr.mats.state_dim(), 1);
        let gram = solve_gle(&restr.mats, 1e-10).unwrap();
        assert!((gram.p[(0, 0)] - 2.0).abs() < 1e-10);
        let lifted = restr.lift_gramian(&gram.p);
        assert_eq!(lifted.nrows(), 1);
    }

    #[test]
    fn restriction_on_shared_differential_structure() {
        // Both modes have E = diag(1, 0) and the same projector image
        // span(e1); the restricted problem is 1x1.
        let m1 = ModeSystem::new(
            DMatrix::from_diagonal(&dvector![1.0, 0.0]),
            DMatrix::from_diagonal(&dvector![-1.0, 1.0]),
            dmatrix![1.0; 1.0],
            dmatrix![1.0, 0.0],
        )
        .unwrap();
        let m2 = ModeSystem::new(
            DMatrix::from_diagonal(&dvector![1.0, 0.0]),
            DMatrix::from_diagonal(&dvector![-2.0, 1.0]),
            dmatrix![1.0; 0.5],
            dmatrix![1.0, 0.0],
        )
        .unwrap();
        let sys = SwitchedDae::new(vec![m1, m2], &tols()).unwrap();
        let jos = build_jump_ode(&sys, &tols()).unwrap();
        let restr = restrict_to_differential(&jos, GleStacking::AllModes).unwrap();
        assert_eq!(restr.mats.state_dim(), 1);
        let gram = solve_gle(&restr.mats, 1e-10).unwrap();
        let lifted = restr.lift_gramian(&gram.p);
        // The lifted Gramian lives on the differential subspace span(e1).
        let span = Subspace::image(&lifted).unwrap();
        let e1 = Subspace::image(&dmatrix![1.0; 0.0]).unwrap();
        assert!(e1.contains(&span, 1e-9).unwrap().holds);
    }

    #[test]
    fn restriction_refuses_heterogeneous_subspaces() {
        let mode1 = ModeSystem::new(
            dmatrix![1.0, 0.0; 0.0, 0.0],
            DMatrix::from_diagonal(&dvector![-1.0, 1.0]),
            dmatrix![1.0; 1.0],
            dmatrix![1.0, 0.0],
        )
        .unwrap();
        let mode2 = ModeSystem::new(
            dmatrix![0.0, 1.0; 0.0, 0.0],
            DMatrix::identity(2, 2),
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0],
        )
        .unwrap();
        let sys = SwitchedDae::new(vec![mode1, mode2], &tols()).unwrap();
        let jos = build_jump_ode(&sys, &tols()).unwrap();
        assert!(matches!(
            restrict_to_differential(&jos, GleStacking::AllModes),
            Err(Error::HeterogeneousDifferentialSubspaces(_))
        ));
    }

    #[test]
    fn balance_scalar_case() {
        let gram = GramianPair {
            p: dmatrix![2.0],
            q: dmatrix![2.0],
            residual_p: 0.0,
            residual_q: 0.0,
            operator_spectrum_ok: true,
        };
        let bal = balance(&gram, 1).unwrap();
        assert!((bal.hankel[0] - 2.0).abs() < 1e-12);
        assert!((bal.v[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!((bal.w[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!(bal.bi_orthogonality_defect < 1e-12);
    }

    #[test]
    fn balance_selects_the_dominant_direction() {
        let gram = GramianPair {
            p: DMatrix::from_diagonal(&dvector![4.0, 1e-9]),
            q: DMatrix::from_diagonal(&dvector![4.0, 1e-9]),
            residual_p: 0.0,
            residual_q: 0.0,
            operator_spectrum_ok: true,
        };
        let bal = balance(&gram, 1).unwrap();
        assert!(bal.v[(0, 0)].abs() > 0.999);
        assert!(bal.v[(1, 0)].abs() < 1e-6);
    }

    #[test]
    fn balance_rejects_orders_past_the_rank() {
        let gram = GramianPair {
            p: DMatrix::from_diagonal(&dvector![1.0, 0.0]),
            q: DMatrix::from_diagonal(&dvector![1.0, 0.0]),
            residual_p: 0.0,
            residual_q: 0.0,
            operator_spectrum_ok: true,
        };
        match balance(&gram, 2) {
            Err(Error::RankTooLow { max_feasible, .. }) => assert_eq!(max_feasible, 1),
            other => panic!("expected RankTooLow, got {other:?}"),
        }
    }

    #[test]
    fn full_order_reduction_is_a_similarity() {
        use crate::reform::SwitchingSignal;
        let m1 = ModeSystem::new(
            DMatrix::identity(2, 2),
            dmatrix![-1.0, 0.3; 0.0, -2.0],
            dmatrix![1.0; 0.5],
            dmatrix![1.0, 1.0],
        )
        .unwrap();
        let m2 = ModeSystem::new(
            DMatrix::identity(2, 2),
            dmatrix![-1.2, 0.0; 0.4, -1.8],
            dmatrix![0.5; 1.0],
            dmatrix![1.0, -1.0],
        )
        .unwrap();
        let sys = SwitchedDae::new(vec![m1, m2], &tols()).unwrap();
        let jos = build_jump_ode(&sys, &tols()).unwrap();
        let gram = solve_gle(&gle_matrices(&jos, GleStacking::AllModes), 1e-9).unwrap();
        let q = SwitchingSignal::new(vec![(0.0, 0), (0.8, 1)], 1.6, 2).unwrap();
        let u = InputSignal::constant(&[1.0], 0.0);
        let (reduced, report) = reduce_and_compare(&jos, &gram, 2, &q, &u, 0.05).unwrap();
        assert_eq!(reduced.order(), 2);
        assert!(report.max_output_error < 1e-8, "error {}", report.max_output_error);
    }
}
