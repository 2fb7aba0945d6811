//! Matrix-pencil analysis for a single mode: regularity, the
//! quasi-Weierstrass form computed from Wong sequences, and the
//! projector/selector matrices that split the dynamics into a differential
//! part and a nilpotent impulsive part.
//!
//! For a regular pencil `(E, A)` there are nonsingular `S`, `T` with
//! `S E T = blkdiag(I, N)` and `S A T = blkdiag(J, I)`, `N` nilpotent of
//! index `nu`. From these we form the consistency projector and the
//! differential/impulse selectors
//!
//! ```text
//! Pi      = T blkdiag(I, 0) T^-1
//! Pi_diff = T blkdiag(I, 0) S
//! Pi_imp  = T blkdiag(0, I) S
//! ```
//!
//! and the derived matrices `A_diff = Pi_diff A`, `B_diff = Pi_diff B`,
//! `C_diff = C Pi`, `E_imp = Pi_imp E`, `B_imp = Pi_imp B`,
//! `C_imp = C (I - Pi)`, none of which depend on the particular choice of
//! `S`, `T`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::subspace::Subspace;
use crate::Tolerances;

/// One mode of a switched descriptor system: `E ẋ = A x + B u`, `y = C x`.
#[derive(Debug, Clone)]
pub struct ModeSystem {
    pub e: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl ModeSystem {
    pub fn new(
        e: DMatrix<f64>,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
    ) -> Result<Self> {
        let n = e.nrows();
        if e.ncols() != n || a.nrows() != n || a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "E is {}x{}, A is {}x{}; both must be square of the same size",
                e.nrows(),
                e.ncols(),
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows, expected {}",
                b.nrows(),
                n
            )));
        }
        if c.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "C has {} columns, expected {}",
                c.ncols(),
                n
            )));
        }
        for (m, what) in [(&e, "E"), (&a, "A"), (&b, "B"), (&c, "C")] {
            linalg::check_finite(m, what)?;
        }
        Ok(ModeSystem { e, a, b, c })
    }

    pub fn state_dim(&self) -> usize {
        self.e.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }
}

/// Outcome of the randomized regularity test, with the certificate shift
/// at which `s E - A` was found to have full rank.
#[derive(Debug, Clone)]
pub struct RegularityReport {
    pub regular: bool,
    pub certificate: Option<f64>,
    /// `(shift, sigma_min / sigma_max)` for every probe tried.
    pub probes: Vec<(f64, f64)>,
}

/// Decide regularity of the pencil `(E, A)`.
///
/// `det(sE - A)` has degree at most `n`, so a nonzero polynomial cannot
/// vanish at `n + 1` distinct shifts: the pencil is regular iff at least one
/// of `n + 1` random probes `s_i E - A` has full numerical rank. Probes are
/// drawn from `[-2 sigma, 2 sigma]` with `sigma = |E|_F + |A|_F`, seeded for
/// reproducibility.
pub fn is_regular(e: &DMatrix<f64>, a: &DMatrix<f64>, tols: &Tolerances) -> Result<RegularityReport> {
    let n = e.nrows();
    if e.ncols() != n || a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch(
            "regularity test needs square E and A of the same size".to_string(),
        ));
    }
    linalg::check_finite(e, "E")?;
    linalg::check_finite(a, "A")?;

    let sigma = linalg::frob(e) + linalg::frob(a);
    if sigma == 0.0 {
        // E = A = 0: det(sE - A) vanishes identically.
        return Ok(RegularityReport {
            regular: false,
            certificate: None,
            probes: vec![],
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tols.probe_seed);
    let mut probes = Vec::with_capacity(n + 1);
    let mut certificate = None;
    for _ in 0..=n {
        let shift = rng.random_range(-2.0 * sigma..2.0 * sigma);
        let pencil = e * shift - a;
        let rr = linalg::rank_revealing(&pencil, tols.rank_tol());
        let rank = rr.basis.ncols();
        let largest = rr.diag.first().copied().unwrap_or(0.0);
        let ratio = if largest > 0.0 {
            rr.diag.last().copied().unwrap_or(0.0) / largest
        } else {
            0.0
        };
        probes.push((shift, ratio));
        if rank == n && certificate.is_none() {
            certificate = Some(shift);
        }
    }
    Ok(RegularityReport {
        regular: certificate.is_some(),
        certificate,
        probes,
    })
}

/// Limits of the Wong sequences of a regular pencil:
///
/// ```text
/// V_0 = R^n,  V_{i+1} = A^-1 (E V_i)      (preimage)
/// W_0 = {0},  W_{i+1} = E^-1 (A W_i)
/// ```
///
/// Both stabilize after at most `n` steps; for a regular pencil the limits
/// are complementary: `dim V* + dim W* = n` and `V* ∩ W* = {0}`.
pub fn wong_sequences(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
    tols: &Tolerances,
) -> Result<(Subspace, Subspace)> {
    let report = is_regular(e, a, tols)?;
    if !report.regular {
        return Err(Error::NotRegular {
            mode: None,
            detail: "all regularity probes were rank-deficient".to_string(),
        });
    }
    let n = e.nrows();
    let rank_tol = tols.rank_tol();

    let mut v = Subspace::full(n);
    for _ in 0..n {
        let next = Subspace::preimage_with_tol(a, &v.map(e)?, rank_tol)?;
        if next.dim() == v.dim() {
            break;
        }
        v = next;
    }

    let mut w = Subspace::zero(n);
    for _ in 0..n {
        let next = Subspace::preimage_with_tol(e, &w.map(a)?, rank_tol)?;
        if next.dim() == w.dim() {
            break;
        }
        w = next;
    }

    if v.dim() + w.dim() != n {
        return Err(Error::Numerical(format!(
            "Wong sequence limits are not complementary: dim V* = {}, dim W* = {}, n = {}",
            v.dim(),
            w.dim(),
            n
        )));
    }
    if v.intersect(&w)?.dim() != 0 {
        return Err(Error::Numerical(
            "Wong sequence limits have a nontrivial intersection".to_string(),
        ));
    }
    Ok((v, w))
}

/// Quasi-Weierstrass data of a regular pencil.
#[derive(Debug, Clone)]
pub struct QwfData {
    pub s: DMatrix<f64>,
    pub t: DMatrix<f64>,
    /// Differential block of `S A T`.
    pub j: DMatrix<f64>,
    /// Nilpotent block of `S E T`.
    pub n: DMatrix<f64>,
    /// Nilpotency index of `n`; zero when the algebraic part is empty.
    pub nu: usize,
    pub n_j: usize,
    pub n_n: usize,
    /// `|S E T - blkdiag(I, N)|_F` and `|S A T - blkdiag(J, I)|_F`.
    pub residual_e: f64,
    pub residual_a: f64,
}

/// Quasi-Weierstrass form computed from the Wong sequence limits.
pub fn qwf(e: &DMatrix<f64>, a: &DMatrix<f64>, tols: &Tolerances) -> Result<QwfData> {
    let (v, w) = wong_sequences(e, a, tols)?;
    qwf_from_bases(e, a, v.basis(), w.basis(), tols)
}

/// Quasi-Weierstrass form from explicit (not necessarily orthonormal) bases
/// of the Wong limits: `T = [V W]`, `S = [E V, A W]^-1`.
pub fn qwf_from_bases(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
    v_basis: &DMatrix<f64>,
    w_basis: &DMatrix<f64>,
    tols: &Tolerances,
) -> Result<QwfData> {
    let n = e.nrows();
    let n_j = v_basis.ncols();
    let n_n = w_basis.ncols();
    if n_j + n_n != n {
        return Err(Error::DimensionMismatch(format!(
            "basis sizes {n_j} + {n_n} do not add up to n = {n}"
        )));
    }

    let t = linalg::hcat(&[v_basis.clone(), w_basis.clone()]);
    let cond_t = linalg::cond_est(&t);
    if !cond_t.is_finite() || cond_t > tols.cond_cap {
        return Err(Error::IllConditionedBasis {
            cond: cond_t,
            cap: tols.cond_cap,
        });
    }

    let s_inv = linalg::hcat(&[e * v_basis, a * w_basis]);
    let cond_s = linalg::cond_est(&s_inv);
    if !cond_s.is_finite() || cond_s > tols.cond_cap {
        return Err(Error::IllConditionedBasis {
            cond: cond_s,
            cap: tols.cond_cap,
        });
    }
    let s = s_inv
        .clone()
        .try_inverse()
        .ok_or(Error::IllConditionedBasis {
            cond: f64::INFINITY,
            cap: tols.cond_cap,
        })?;

    let set = &s * e * &t;
    let sat = &s * a * &t;
    let j = sat.view((0, 0), (n_j, n_j)).into_owned();
    let nil = set.view((n_j, n_j), (n_n, n_n)).into_owned();

    let mut target_e = DMatrix::zeros(n, n);
    target_e
        .view_mut((0, 0), (n_j, n_j))
        .copy_from(&DMatrix::identity(n_j, n_j));
    target_e.view_mut((n_j, n_j), (n_n, n_n)).copy_from(&nil);
    let mut target_a = DMatrix::zeros(n, n);
    target_a.view_mut((0, 0), (n_j, n_j)).copy_from(&j);
    target_a
        .view_mut((n_j, n_j), (n_n, n_n))
        .copy_from(&DMatrix::identity(n_n, n_n));

    let residual_e = linalg::frob(&(&set - &target_e));
    let residual_a = linalg::frob(&(&sat - &target_a));
    if residual_e > tols.qwf * (linalg::frob(e) + 1.0) {
        return Err(Error::Numerical(format!(
            "quasi-Weierstrass residual on E too large: {residual_e:.3e}"
        )));
    }
    if residual_a > tols.qwf * (linalg::frob(a) + 1.0) {
        return Err(Error::Numerical(format!(
            "quasi-Weierstrass residual on A too large: {residual_a:.3e}"
        )));
    }

    let nu = nilpotency_index(&nil, tols)?;

    Ok(QwfData {
        s,
        t,
        j,
        n: nil,
        nu,
        n_j,
        n_n,
        residual_e,
        residual_a,
    })
}

/// Smallest `k` with `N^k = 0` at tolerance; errors when no power up to
/// the block size vanishes (the pencil data was inconsistent).
fn nilpotency_index(nil: &DMatrix<f64>, tols: &Tolerances) -> Result<usize> {
    let n_n = nil.nrows();
    if n_n == 0 {
        return Ok(0);
    }
    let scale_base = 1.0f64.max(linalg::frob(nil));
    let mut power = nil.clone();
    for k in 1..=n_n {
        if linalg::is_zero_rel(&power, tols.zero, scale_base.powi(k as i32)) {
            return Ok(k);
        }
        power = &power * nil;
    }
    Err(Error::Numerical(format!(
        "algebraic block of size {n_n} is not nilpotent at tolerance"
    )))
}

/// A mode together with every projector/selector-derived matrix needed by
/// the jump-ODE reformulation.
#[derive(Debug, Clone)]
pub struct DecoupledMode {
    pub system: ModeSystem,
    pub qwf: QwfData,
    /// Consistency projector.
    pub pi: DMatrix<f64>,
    pub pi_diff: DMatrix<f64>,
    pub pi_imp: DMatrix<f64>,
    pub a_diff: DMatrix<f64>,
    pub b_diff: DMatrix<f64>,
    pub c_diff: DMatrix<f64>,
    pub e_imp: DMatrix<f64>,
    pub b_imp: DMatrix<f64>,
    pub c_imp: DMatrix<f64>,
    /// `[B_imp, E_imp B_imp, ..., E_imp^{nu-1} B_imp]`, an n x (m nu) matrix
    /// acting on the stacked input-derivative vector; empty when `nu = 0`.
    pub jump_b: DMatrix<f64>,
    /// Row blocks `-C_imp E_imp^i` for `i = 1..nu-1`, stacked vertically
    /// into a (p (nu-1)) x n matrix; empty when `nu <= 1`.
    pub imp_c: DMatrix<f64>,
    /// Smooth feedthrough `-C_imp [B_imp, ..., E_imp^{nu-1} B_imp]`,
    /// p x (m nu).
    pub feedthrough: DMatrix<f64>,
    pub nu: usize,
}

/// Decouple one mode of a regular pencil.
pub fn decouple(mode: &ModeSystem, tols: &Tolerances) -> Result<DecoupledMode> {
    let qwf_data = qwf(&mode.e, &mode.a, tols)?;
    decouple_from_qwf(mode.clone(), qwf_data)
}

/// Build all derived matrices from given quasi-Weierstrass data.
pub fn decouple_from_qwf(mode: ModeSystem, qwf: QwfData) -> Result<DecoupledMode> {
    let n = mode.state_dim();
    let m = mode.input_dim();
    let p = mode.output_dim();
    let n_j = qwf.n_j;
    let n_n = qwf.n_n;
    let nu = qwf.nu;

    let mut sel_diff = DMatrix::zeros(n, n);
    sel_diff
        .view_mut((0, 0), (n_j, n_j))
        .copy_from(&DMatrix::identity(n_j, n_j));
    let mut sel_imp = DMatrix::zeros(n, n);
    sel_imp
        .view_mut((n_j, n_j), (n_n, n_n))
        .copy_from(&DMatrix::identity(n_n, n_n));

    let t_inv = qwf.t.clone().try_inverse().ok_or(Error::IllConditionedBasis {
        cond: f64::INFINITY,
        cap: f64::INFINITY,
    })?;
    let pi = &qwf.t * &sel_diff * &t_inv;
    let pi_diff = &qwf.t * &sel_diff * &qwf.s;
    let pi_imp = &qwf.t * &sel_imp * &qwf.s;

    let a_diff = &pi_diff * &mode.a;
    let b_diff = &pi_diff * &mode.b;
    let c_diff = &mode.c * &pi;
    let e_imp = &pi_imp * &mode.e;
    let b_imp = &pi_imp * &mode.b;
    let c_imp = &mode.c * (DMatrix::identity(n, n) - &pi);

    // jump_b column blocks: E_imp^i B_imp, i = 0..nu-1.
    let mut jump_b = DMatrix::zeros(n, m * nu);
    let mut block = b_imp.clone();
    for i in 0..nu {
        jump_b.view_mut((0, i * m), (n, m)).copy_from(&block);
        if i + 1 < nu {
            block = &e_imp * block;
        }
    }

    let feedthrough = -(&c_imp * &jump_b);

    // imp_c row blocks: -C_imp E_imp^i, i = 1..nu-1.
    let imp_rows = if nu >= 2 { p * (nu - 1) } else { 0 };
    let mut imp_c = DMatrix::zeros(imp_rows, n);
    if nu >= 2 {
        let mut power = e_imp.clone();
        for i in 1..nu {
            let row_block = -(&c_imp * &power);
            imp_c
                .view_mut(((i - 1) * p, 0), (p, n))
                .copy_from(&row_block);
            if i + 1 < nu {
                power = &power * &e_imp;
            }
        }
    }

    Ok(DecoupledMode {
        system: mode,
        qwf,
        pi,
        pi_diff,
        pi_imp,
        a_diff,
        b_diff,
        c_diff,
        e_imp,
        b_imp,
        c_imp,
        jump_b,
        imp_c,
        feedthrough,
        nu,
    })
}

impl DecoupledMode {
    pub fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.system.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.system.output_dim()
    }

    /// Largest deviation from the projector identities, relative to the
    /// scale of the constituent matrices. Used by the verification suite.
    pub fn projector_residual(&self) -> f64 {
        let n = self.state_dim();
        let scale = |m: &DMatrix<f64>| 1.0f64.max(linalg::frob(m));
        let idem = linalg::frob(&(&self.pi * &self.pi - &self.pi)) / scale(&self.pi);
        let diff_e = linalg::frob(&(&self.pi_diff * &self.system.e - &self.pi))
            / scale(&self.pi);
        let pi_eimp = linalg::frob(&(&self.pi * &self.e_imp)) / scale(&self.e_imp);
        let a_pi = linalg::frob(&(&self.a_diff * &self.pi - &self.a_diff))
            / scale(&self.a_diff);
        let pi_a = linalg::frob(&(&self.pi * &self.a_diff - &self.a_diff))
            / scale(&self.a_diff);
        // (E_imp)^nu = 0; for nu = 0 the impulse matrix itself vanishes.
        let nilp = if self.nu == 0 {
            linalg::frob(&self.e_imp) / scale(&self.e_imp)
        } else {
            let mut eimp_pow = DMatrix::identity(n, n);
            for _ in 0..self.nu {
                eimp_pow = &eimp_pow * &self.e_imp;
            }
            linalg::frob(&eimp_pow) / scale(&self.e_imp).powi(self.nu as i32)
        };
        idem.max(diff_e).max(pi_eimp).max(a_pi).max(pi_a).max(nilp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    fn desk_mode1() -> ModeSystem {
        ModeSystem::new(
            dmatrix![1.0, 0.0; 0.0, 0.0],
            DMatrix::from_diagonal(&dvector![-1.0, 1.0]),
            dmatrix![1.0; 1.0],
            dmatrix![1.0, 0.0],
        )
        .unwrap()
    }

    fn desk_mode2() -> ModeSystem {
        ModeSystem::new(
            dmatrix![0.0, 1.0; 0.0, 0.0],
            DMatrix::identity(2, 2),
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn regularity_examples() {
        let t = tols();
        let id = DMatrix::identity(2, 2);
        let zero = DMatrix::zeros(2, 2);
        assert!(is_regular(&id, &zero, &t).unwrap().regular);

        let e = DMatrix::from_diagonal(&dvector![1.0, 0.0]);
        let rep = is_regular(&e, &id, &t).unwrap();
        assert!(rep.regular);
        assert!(rep.certificate.is_some());

        let singular = dmatrix![1.0, 0.0; 0.0, 0.0];
        let rep = is_regular(&singular, &singular, &t).unwrap();
        assert!(!rep.regular);
        assert!(rep.certificate.is_none());
    }

    #[test]
    fn wong_sequence_examples() {
        let t = tols();
        let id = DMatrix::identity(3, 3);
        let a = dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0; 1.0, 0.0, 0.0];
        let (v, w) = wong_sequences(&id, &a, &t).unwrap();
        assert_eq!(v.dim(), 3);
        assert_eq!(w.dim(), 0);

        let e = DMatrix::from_diagonal(&dvector![1.0, 0.0]);
        let (v, w) = wong_sequences(&e, &DMatrix::identity(2, 2), &t).unwrap();
        assert_eq!(v.dim(), 1);
        assert_eq!(w.dim(), 1);
        assert!(v.basis()[(0, 0)].abs() > 0.999);
        assert!(w.basis()[(1, 0)].abs() > 0.999);

        let nilp = dmatrix![0.0, 1.0; 0.0, 0.0];
        let (v, w) = wong_sequences(&nilp, &DMatrix::identity(2, 2), &t).unwrap();
        assert_eq!(v.dim(), 0);
        assert_eq!(w.dim(), 2);
    }

    #[test]
    fn qwf_examples() {
        let t = tols();

        let e = DMatrix::from_diagonal(&dvector![1.0, 0.0]);
        let a = DMatrix::from_diagonal(&dvector![-1.0, 1.0]);
        let q = qwf(&e, &a, &t).unwrap();
        assert_eq!((q.n_j, q.n_n, q.nu), (1, 1, 1));
        assert!((q.j[(0, 0)] + 1.0).abs() < 1e-12);
        assert!(q.n[(0, 0)].abs() < 1e-12);

        let a0 = dmatrix![0.5, -2.0; 1.0, 0.0];
        let q = qwf(&DMatrix::identity(2, 2), &a0, &t).unwrap();
        assert_eq!((q.n_j, q.n_n, q.nu), (2, 0, 0));
        assert!(linalg::frob(&(&q.j - &a0)) < 1e-10);

        let nilp = dmatrix![0.0, 1.0; 0.0, 0.0];
        let q = qwf(&nilp, &DMatrix::identity(2, 2), &t).unwrap();
        assert_eq!((q.n_j, q.n_n, q.nu), (0, 2, 2));
    }

    #[test]
    fn not_regular_is_rejected() {
        let t = tols();
        let singular = dmatrix![1.0, 0.0; 0.0, 0.0];
        assert!(matches!(
            qwf(&singular, &singular, &t),
            Err(Error::NotRegular { .. })
        ));
    }

    #[test]
    fn decouple_desk_mode1() {
        let d = decouple(&desk_mode1(), &tols()).unwrap();
        assert_eq!(d.nu, 1);
        let pi_expect = DMatrix::from_diagonal(&dvector![1.0, 0.0]);
        assert!(linalg::frob(&(&d.pi - &pi_expect)) < 1e-10);
        let a_diff_expect = DMatrix::from_diagonal(&dvector![-1.0, 0.0]);
        assert!(linalg::frob(&(&d.a_diff - &a_diff_expect)) < 1e-10);
        assert!(linalg::frob(&(&d.b_diff - &dmatrix![1.0; 0.0])) < 1e-10);
        assert!(linalg::frob(&(&d.b_imp - &dmatrix![0.0; 1.0])) < 1e-10);
        assert!(linalg::frob(&(&d.jump_b - &dmatrix![0.0; 1.0])) < 1e-10);
        assert!(linalg::frob(&d.c_imp) < 1e-10);
        assert!(linalg::frob(&d.feedthrough) < 1e-10);
        assert_eq!(d.imp_c.nrows(), 0);
    }

    #[test]
    fn decouple_desk_mode2() {
        let d = decouple(&desk_mode2(), &tols()).unwrap();
        assert_eq!(d.nu, 2);
        assert!(linalg::frob(&d.pi) < 1e-10);
        assert!(linalg::frob(&d.a_diff) < 1e-10);
        assert!(linalg::frob(&d.b_diff) < 1e-10);
        assert!(linalg::frob(&d.c_diff) < 1e-10);
        assert!(linalg::frob(&(&d.e_imp - &dmatrix![0.0, 1.0; 0.0, 0.0])) < 1e-10);
        assert!(linalg::frob(&(&d.jump_b - &dmatrix![0.0, 1.0; 1.0, 0.0])) < 1e-10);
        assert!(linalg::frob(&(&d.feedthrough - &dmatrix![0.0, -1.0])) < 1e-10);
        assert!(linalg::frob(&(&d.imp_c - &dmatrix![0.0, -1.0])) < 1e-10);
    }

    #[test]
    fn decouple_ode_mode() {
        let a0 = dmatrix![0.0, 1.0; -2.0, -3.0];
        let mode = ModeSystem::new(
            DMatrix::identity(2, 2),
            a0.clone(),
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0],
        )
        .unwrap();
        let d = decouple(&mode, &tols()).unwrap();
        assert_eq!(d.nu, 0);
        assert!(linalg::frob(&(&d.pi - &DMatrix::identity(2, 2))) < 1e-10);
        assert!(linalg::frob(&(&d.a_diff - &a0)) < 1e-10);
        assert!(linalg::frob(&d.e_imp) < 1e-10);
        assert_eq!(d.jump_b.ncols(), 0);
        assert_eq!(d.feedthrough.ncols(), 0);
    }

    #[test]
    fn projector_identities_on_random_pencils() {
        let mut sampler = crate::synth::ModelSampler::new(2024);
        for _ in 0..25 {
            let n = 2 + sampler.next_below(7);
            let (e, a) = sampler.regular_pencil(n);
            let b = sampler.matrix(n, 2);
            let c = sampler.matrix(1, n);
            let mode = ModeSystem::new(e, a, b, c).unwrap();
            let d = decouple(&mode, &tols()).unwrap();
            assert!(
                d.projector_residual() < 1e-9,
                "projector residual too large: {}",
                d.projector_residual()
            );
        }
    }

    #[test]
    fn qwf_choice_independence() {
        let mut sampler = crate::synth::ModelSampler::new(99);
        for _ in 0..10 {
            let n = 3 + sampler.next_below(4);
            let (e, a) = sampler.regular_pencil(n);
            let b = sampler.matrix(n, 2);
            let c = sampler.matrix(2, n);
            let mode = ModeSystem::new(e.clone(), a.clone(), b, c).unwrap();

            let (v, w) = wong_sequences(&e, &a, &tols()).unwrap();
            let d_ref = decouple_from_qwf(
                mode.clone(),
                qwf_from_bases(&e, &a, v.basis(), w.basis(), &tols()).unwrap(),
            )
            .unwrap();

            let gv = sampler.well_conditioned(v.dim());
            let gw = sampler.well_conditioned(w.dim());
            let q2 = qwf_from_bases(&e, &a, &(v.basis() * gv), &(w.basis() * gw), &tols()).unwrap();
            let d_alt = decouple_from_qwf(mode, q2).unwrap();

            for (x, y, what) in [
                (&d_ref.pi, &d_alt.pi, "pi"),
                (&d_ref.pi_diff, &d_alt.pi_diff, "pi_diff"),
                (&d_ref.pi_imp, &d_alt.pi_imp, "pi_imp"),
                (&d_ref.a_diff, &d_alt.a_diff, "a_diff"),
                (&d_ref.b_diff, &d_alt.b_diff, "b_diff"),
                (&d_ref.c_diff, &d_alt.c_diff, "c_diff"),
                (&d_ref.e_imp, &d_alt.e_imp, "e_imp"),
                (&d_ref.b_imp, &d_alt.b_imp, "b_imp"),
                (&d_ref.c_imp, &d_alt.c_imp, "c_imp"),
            ] {
                let rel = linalg::frob(&(x - y)) / (1.0 + linalg::frob(x));
                assert!(rel < 1e-8, "{what} differs between basis choices: {rel:.3e}");
            }
        }
    }
}
