//! Reachable and unobservable subspaces of the switched jump-ODE system
//! along a fixed switching signal, via forward/backward subspace recursions,
//! plus the numerical containment/equality checks relating the jump-ODE
//! system to its state-jump reformulations.
//!
//! Forward chain (reachability), `tau_k` the duration of interval `k`:
//!
//! ```text
//! M_0  = R_{q_0},            M_k  = R_{q_k}  + e^{A_{q_k} tau_k} Pi_{q_k} M~_{k-1}
//! M~_0 = R~_{q_0},           M~_k = R~_{q_k} + e^{A_{q_k} tau_k} Pi_{q_k} M~_{k-1}
//! ```
//!
//! with local sets `R_j = <A_diff_j | im B_diff_j>` and
//! `R~_j = R_j + im JB_j`. Backward chain (unobservability):
//!
//! ```text
//! N_K = U_{q_K},   N_k = U_{q_k} ∩ e^{-A_{q_k} tau_k} ((Pi_{q_{k+1}}^{-1} N_{k+1}) ∩ ker IC_{q_{k+1}})
//! ```
//!
//! with `U_j = <ker C_diff_j | A_diff_j>`.

use crate::error::Result;
use crate::expm::expm;
use crate::reform::{JumpOdeSystem, ModeDynamics, SwitchingSignal};
use crate::subspace::{Containment, Subspace};

/// Forward reachability chains along a signal.
#[derive(Debug, Clone)]
pub struct ReachResult {
    /// `M_k` for `k = 0..=K`; the last entry is the reachable subspace.
    pub m: Vec<Subspace>,
    /// `M~_k` for `k = 0..=K`.
    pub m_tilde: Vec<Subspace>,
    /// Whether `M_K` stays put when the final interval duration is doubled;
    /// recorded as a diagnostic, not assumed.
    pub final_duration_stable: Containment,
}

impl ReachResult {
    /// The reachable subspace via the signal, `M_K`.
    pub fn reachable(&self) -> &Subspace {
        self.m.last().expect("non-empty chain")
    }
}

/// Backward unobservability chain along a signal.
#[derive(Debug, Clone)]
pub struct ObsResult {
    /// `N_k` for `k = 0..=K` (index k of the vector).
    pub n: Vec<Subspace>,
}

impl ObsResult {
    /// The unobservable subspace via the signal, `N_0`.
    pub fn unobservable(&self) -> &Subspace {
        &self.n[0]
    }

    /// Its orthogonal complement, the observable subspace.
    pub fn observable(&self) -> Subspace {
        self.n[0].orth_complement()
    }
}

/// Local reachable subspace `R = <A_diff | im B_diff>` and its modified
/// version `R~ = R + im JB` carrying the input-derivative jump directions.
pub fn local_reachable(mode: &ModeDynamics) -> Result<(Subspace, Subspace)> {
    let r = Subspace::smallest_invariant(&mode.a_diff, &Subspace::image(&mode.b_diff)?)?;
    let r_tilde = r.sum(&Subspace::image(&mode.jump_b)?)?;
    Ok((r, r_tilde))
}

/// Local unobservable subspace `<ker C_diff | A_diff>`.
pub fn local_unobservable(mode: &ModeDynamics) -> Result<Subspace> {
    Subspace::largest_invariant_in(&Subspace::kernel(&mode.c_diff)?, &mode.a_diff)
}

/// Forward recursion for the reachable and modified reachable chains.
pub fn reach_recursion(jos: &JumpOdeSystem, q: &SwitchingSignal) -> Result<ReachResult> {
    let k_last = q.switch_count();
    let mut m = Vec::with_capacity(k_last + 1);
    let mut m_tilde = Vec::with_capacity(k_last + 1);

    let (r0, r0_tilde) = local_reachable(&jos.modes[q.mode_at(0)])?;
    m.push(r0);
    m_tilde.push(r0_tilde);

    for k in 1..=k_last {
        let mode = &jos.modes[q.mode_at(k)];
        let (r, r_tilde) = local_reachable(mode)?;
        let carried = carry(mode, q.duration(k), &m_tilde[k - 1])?;
        m.push(r.sum(&carried)?);
        m_tilde.push(r_tilde.sum(&carried)?);
    }

    // Diagnostic: recompute the last step with the final duration doubled.
    let final_duration_stable = if k_last == 0 {
        Containment {
            holds: true,
            max_angle: 0.0,
        }
    } else {
        let mode = &jos.modes[q.mode_at(k_last)];
        let (r, _) = local_reachable(mode)?;
        let carried2 = carry(mode, 2.0 * q.duration(k_last), &m_tilde[k_last - 1])?;
        let alt = r.sum(&carried2)?;
        m[k_last].equals(&alt, 1e-8)?
    };

    Ok(ReachResult {
        m,
        m_tilde,
        final_duration_stable,
    })
}

/// `e^{A tau} Pi S`, orthonormalized after each map.
fn carry(mode: &ModeDynamics, tau: f64, s: &Subspace) -> Result<Subspace> {
    let flow = expm(&mode.a_diff, tau)?;
    s.map(&mode.pi)?.map(&flow)
}

/// Backward recursion for the unobservable chain.
pub fn unobs_recursion(jos: &JumpOdeSystem, q: &SwitchingSignal) -> Result<ObsResult> {
    let k_last = q.switch_count();
    let mut chain = vec![Subspace::zero(jos.state_dim()); k_last + 1];
    chain[k_last] = local_unobservable(&jos.modes[q.mode_at(k_last)])?;

    for k in (0..k_last).rev() {
        let mode = &jos.modes[q.mode_at(k)];
        let succ = &jos.modes[q.mode_at(k + 1)];
        let pre = Subspace::preimage(&succ.pi, &chain[k + 1])?;
        let ker_ic = Subspace::kernel(&succ.imp_c)?;
        let inner = pre.intersect(&ker_ic)?;
        let back_flow = expm(&mode.a_diff, -q.duration(k))?;
        let mapped = inner.map(&back_flow)?;
        chain[k] = local_unobservable(mode)?.intersect(&mapped)?;
    }

    Ok(ObsResult { n: chain })
}

/// Reachable subspace of the state-jump system with augmented inputs
/// `[B_diff_j, Pi_j JB_prev]`. With `with_pi = false` the inter-mode jumps
/// are replaced by the identity (the "no jumps" comparison system); the
/// augmented input matrices themselves are unchanged.
pub fn aug_reach_chain(
    jos: &JumpOdeSystem,
    q: &SwitchingSignal,
    with_pi: bool,
) -> Result<Subspace> {
    let k_last = q.switch_count();
    let mode0 = q.mode_at(0);
    let mut current = Subspace::smallest_invariant(
        &jos.modes[mode0].a_diff,
        &Subspace::image(&jos.aug_b(mode0, None))?,
    )?;
    for k in 1..=k_last {
        let j = q.mode_at(k);
        let mode = &jos.modes[j];
        let local = Subspace::smallest_invariant(
            &mode.a_diff,
            &Subspace::image(&jos.aug_b(j, Some(q.mode_at(k - 1))))?,
        )?;
        let jumped = if with_pi { current.map(&mode.pi)? } else { current };
        let carried = jumped.map(&expm(&mode.a_diff, q.duration(k))?)?;
        current = local.sum(&carried)?;
    }
    Ok(current)
}

/// Unobservable subspace of the state-jump system with augmented outputs
/// `[C_diff_j; IC_succ]`. With `with_pi = false` the jump preimages are
/// dropped (the "no jumps" comparison system).
pub fn aug_unobs_chain(
    jos: &JumpOdeSystem,
    q: &SwitchingSignal,
    with_pi: bool,
) -> Result<Subspace> {
    let k_last = q.switch_count();
    let j_last = q.mode_at(k_last);
    let mut current = Subspace::largest_invariant_in(
        &Subspace::kernel(&jos.aug_c(j_last, None))?,
        &jos.modes[j_last].a_diff,
    )?;
    for k in (0..k_last).rev() {
        let j = q.mode_at(k);
        let succ = q.mode_at(k + 1);
        let local = Subspace::largest_invariant_in(
            &Subspace::kernel(&jos.aug_c(j, Some(succ)))?,
            &jos.modes[j].a_diff,
        )?;
        let pre = if with_pi {
            Subspace::preimage(&jos.modes[succ].pi, &current)?
        } else {
            current
        };
        let mapped = pre.map(&expm(&jos.modes[j].a_diff, -q.duration(k))?)?;
        current = local.intersect(&mapped)?;
    }
    Ok(current)
}

/// Outcome of one containment/equality verification.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub holds: bool,
    pub max_angle: f64,
}

impl CheckReport {
    fn from_containment(name: &'static str, c: Containment) -> Self {
        CheckReport {
            name,
            holds: c.holds,
            max_angle: c.max_angle,
        }
    }
}

/// The reachable set of the jump-ODE system is contained in the reachable
/// set of the state-jump system with augmented inputs.
pub fn verify_reach_inclusion(
    jos: &JumpOdeSystem,
    q: &SwitchingSignal,
    tol_angle: f64,
) -> Result<CheckReport> {
    let reach = reach_recursion(jos, q)?;
    let aug = aug_reach_chain(jos, q, true)?;
    let c = aug.contains(reach.reachable(), tol_angle)?;
    Ok(CheckReport::from_containment(
        "reachable-set inclusion in the augmented-input system",
        c,
    ))
}

/// The unobservable set of the jump-ODE system equals the unobservable set
/// of the state-jump system with augmented outputs.
pub fn verify_unobs_equality(
    jos: &JumpOdeSystem,
    q: &SwitchingSignal,
    tol_angle: f64,
) -> Result<CheckReport> {
    let obs = unobs_recursion(jos, q)?;
    let aug = aug_unobs_chain(jos, q, true)?;
    let c = obs.unobservable().equals(&aug, tol_angle)?;
    Ok(CheckReport::from_containment(
        "unobservable-set equality with the augmented-output system",
        c,
    ))
}

/// Containments of the jump system's sets in the sets of the same system
/// with all jumps removed (`Pi_j` replaced by the identity).
#[derive(Debug, Clone)]
pub struct NoJumpReport {
    /// Augmented-system reachable set with jumps ⊆ without jumps.
    pub reach_aug: CheckReport,
    /// Jump-ODE reachable chain ⊆ no-jump reachable set.
    pub reach_chain: CheckReport,
    /// No-jump unobservable set ⊆ augmented-system unobservable set
    /// (equivalently, observable ⊆ no-jump observable).
    pub obs_aug: CheckReport,
    /// No-jump unobservable set ⊆ jump-ODE unobservable chain.
    pub obs_chain: CheckReport,
}

impl NoJumpReport {
    pub fn all_hold(&self) -> bool {
        self.reach_aug.holds && self.reach_chain.holds && self.obs_aug.holds && self.obs_chain.holds
    }
}

pub fn verify_nojump_inclusion(
    jos: &JumpOdeSystem,
    q: &SwitchingSignal,
    tol_angle: f64,
) -> Result<NoJumpReport> {
    let reach_pi = aug_reach_chain(jos, q, true)?;
    let reach_free = aug_reach_chain(jos, q, false)?;
    let chain = reach_recursion(jos, q)?;
    let unobs_pi = aug_unobs_chain(jos, q, true)?;
    let unobs_free = aug_unobs_chain(jos, q, false)?;
    let n0 = unobs_recursion(jos, q)?;

    Ok(NoJumpReport {
        reach_aug: CheckReport::from_containment(
            "reachable set with jumps inside the no-jump reachable set",
            reach_free.contains(&reach_pi, tol_angle)?,
        ),
        reach_chain: CheckReport::from_containment(
            "jump-ODE reachable chain inside the no-jump reachable set",
            reach_free.contains(chain.reachable(), tol_angle)?,
        ),
        obs_aug: CheckReport::from_containment(
            "no-jump unobservable set inside the jump-system unobservable set",
            unobs_pi.contains(&unobs_free, tol_angle)?,
        ),
        obs_chain: CheckReport::from_containment(
            "no-jump unobservable set inside the jump-ODE unobservable chain",
            n0.unobservable().contains(&unobs_free, tol_angle)?,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pencil::ModeSystem;
    use crate::reform::{build_jump_ode, SwitchedDae};
    use crate::Tolerances;
    use nalgebra::{dmatrix, dvector, DMatrix};

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    fn desk_jos() -> JumpOdeSystem {
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
        build_jump_ode(&sys, &tols()).unwrap()
    }

    fn desk_signal() -> SwitchingSignal {
        SwitchingSignal::new(vec![(0.0, 0), (1.0, 1)], 1.5, 2).unwrap()
    }

    fn e1(n: usize) -> Subspace {
        let mut m = DMatrix::zeros(n, 1);
        m[(0, 0)] = 1.0;
        Subspace::image(&m).unwrap()
    }

    #[test]
    fn desk_local_reachable() {
        let jos = desk_jos();
        let (r1, r1t) = local_reachable(&jos.modes[0]).unwrap();
        assert!(r1.equals(&e1(2), 1e-10).unwrap().holds);
        assert_eq!(r1t.dim(), 2);

        let (r2, r2t) = local_reachable(&jos.modes[1]).unwrap();
        assert_eq!(r2.dim(), 0);
        assert_eq!(r2t.dim(), 2);
    }

    #[test]
    fn ode_mode_has_equal_plain_and_modified_sets() {
        let mode = ModeSystem::new(
            DMatrix::identity(2, 2),
            dmatrix![-1.0, 1.0; 0.0, -2.0],
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0],
        )
        .unwrap();
        let sys = SwitchedDae::new(vec![mode], &tols()).unwrap();
        let jos = build_jump_ode(&sys, &tols()).unwrap();
        let (r, rt) = local_reachable(&jos.modes[0]).unwrap();
        assert!(r.equals(&rt, 1e-10).unwrap().holds);
    }

    #[test]
    fn desk_reach_recursion() {
        let jos = desk_jos();
        let res = reach_recursion(&jos, &desk_signal()).unwrap();
        assert!(res.m[0].equals(&e1(2), 1e-10).unwrap().holds);
        assert_eq!(res.m_tilde[0].dim(), 2);
        assert_eq!(res.m[1].dim(), 0); // Pi_2 = 0 annihilates the carry
        assert_eq!(res.m_tilde[1].dim(), 2);
        assert!(res.final_duration_stable.holds);
        for k in 0..res.m.len() {
            assert!(res.m_tilde[k].contains(&res.m[k], 1e-9).unwrap().holds);
        }
    }

    #[test]
    fn single_interval_recursion_is_the_local_set() {
        let jos = desk_jos();
        let q = SwitchingSignal::new(vec![(0.0, 0)], 1.0, 2).unwrap();
        let res = reach_recursion(&jos, &q).unwrap();
        assert!(res.reachable().equals(&e1(2), 1e-10).unwrap().holds);
    }

    #[test]
    fn identical_lti_modes_keep_the_reachable_space() {
        let mode = ModeSystem::new(
            DMatrix::identity(2, 2),
            dmatrix![-1.0, 1.0; 0.0, -2.0],
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0],
        )
        .unwrap();
        let sys = SwitchedDae::new(vec![mode.clone(), mode], &tols()).unwrap();
        let jos = build_jump_ode(&sys, &tols()).unwrap();
        let q = SwitchingSignal::new(vec![(0.0, 0), (0.5, 1), (1.0, 0)], 1.5, 2).unwrap();
        let res = reach_recursion(&jos, &q).unwrap();
        let (r, _) = local_reachable(&jos.modes[0]).unwrap();
        assert!(res.reachable().equals(&r, 1e-9).unwrap().holds);
    }

    #[test]
    fn desk_local_unobservable() {
        let jos = desk_jos();
        let u1 = local_unobservable(&jos.modes[0]).unwrap();
        assert_eq!(u1.dim(), 1);
        assert!(u1.basis()[(1, 0)].abs() > 0.999);
        let u2 = local_unobservable(&jos.modes[1]).unwrap();
        assert_eq!(u2.dim(), 2);
    }

    #[test]
    fn full_column_rank_output_has_trivial_unobservable_set() {
        let mode = ModeSystem::new(
            DMatrix::identity(2, 2),
            dmatrix![-1.0, 1.0; 0.0, -2.0],
            dmatrix![0.0; 1.0],
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let sys = SwitchedDae::new(vec![mode], &tols()).unwrap();
        let jos = build_jump_ode(&sys, &tols()).unwrap();
        assert_eq!(local_unobservable(&jos.modes[0]).unwrap().dim(), 0);
    }

    #[test]
    fn desk_unobs_recursion() {
        let jos = desk_jos();
        let res = unobs_recursion(&jos, &desk_signal()).unwrap();
        assert_eq!(res.n[1].dim(), 2);
        assert_eq!(res.n[0].dim(), 0);
        assert_eq!(res.observable().dim(), 2);
        // N_k lies inside the local unobservable set of the active mode.
        let q = desk_signal();
        for k in 0..res.n.len() {
            let u = local_unobservable(&jos.modes[q.mode_at(k)]).unwrap();
            assert!(u.contains(&res.n[k], 1e-9).unwrap().holds);
        }
    }

    #[test]
    fn zero_output_makes_everything_unobservable() {
        let mode = ModeSystem::new(
            DMatrix::identity(2, 2),
            dmatrix![-1.0, 1.0; 0.0, -2.0],
            dmatrix![0.0; 1.0],
            DMatrix::zeros(1, 2),
        )
        .unwrap();
        let sys = SwitchedDae::new(vec![mode.clone(), mode], &tols()).unwrap();
        let jos = build_jump_ode(&sys, &tols()).unwrap();
        let q = SwitchingSignal::new(vec![(0.0, 0), (1.0, 1)], 2.0, 2).unwrap();
        let res = unobs_recursion(&jos, &q).unwrap();
        assert_eq!(res.unobservable().dim(), 2);
    }

    #[test]
    fn desk_reformulation_checks() {
        let jos = desk_jos();
        let q = desk_signal();
        let t1 = verify_reach_inclusion(&jos, &q, 1e-8).unwrap();
        assert!(t1.holds, "angle {}", t1.max_angle);
        let t2 = verify_unobs_equality(&jos, &q, 1e-8).unwrap();
        assert!(t2.holds, "angle {}", t2.max_angle);
        let nj = verify_nojump_inclusion(&jos, &q, 1e-8).unwrap();
        assert!(nj.all_hold());
    }

    #[test]
    fn ode_modes_make_the_reach_inclusion_an_equality() {
        let m1 = ModeSystem::new(
            DMatrix::identity(2, 2),
            dmatrix![-1.0, 1.0; 0.0, -2.0],
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0],
        )
        .unwrap();
        let m2 = ModeSystem::new(
            DMatrix::identity(2, 2),
            dmatrix![-3.0, 0.0; 1.0, -1.0],
            dmatrix![1.0; 0.0],
            dmatrix![0.0, 1.0],
        )
        .unwrap();
        let sys = SwitchedDae::new(vec![m1, m2], &tols()).unwrap();
        let jos = build_jump_ode(&sys, &tols()).unwrap();
        let q = SwitchingSignal::new(vec![(0.0, 0), (0.6, 1)], 1.2, 2).unwrap();

        let chain = reach_recursion(&jos, &q).unwrap();
        let aug = aug_reach_chain(&jos, &q, true).unwrap();
        assert!(aug.equals(chain.reachable(), 1e-9).unwrap().holds);

        // With identity projectors the no-jump comparison is an equality too.
        let nj = verify_nojump_inclusion(&jos, &q, 1e-8).unwrap();
        assert!(nj.all_hold());
        let free = aug_reach_chain(&jos, &q, false).unwrap();
        assert!(free.equals(&aug, 1e-9).unwrap().holds);
    }

    #[test]
    fn unobs_equality_is_duration_independent_on_desk() {
        let jos = desk_jos();
        for factor in [1.0, 2.0] {
            let q = desk_signal().with_scaled_durations(factor);
            let rep = verify_unobs_equality(&jos, &q, 1e-8).unwrap();
            assert!(rep.holds, "factor {factor}: angle {}", rep.max_angle);
        }
    }
}
