//! Switched differential-algebraic systems toolkit.
//!
//! Decouples each mode of a switched descriptor system `E_q ẋ = A_q x + B_q u`
//! into its differential and impulsive parts via the quasi-Weierstrass form,
//! reformulates the switched system as an ODE with state jumps and Dirac
//! output impulses, computes reachable and unobservable subspaces along a
//! switching signal, solves the coupled generalized Lyapunov equations whose
//! solutions bound those sets, and performs balanced-truncation model
//! reduction.
//!
//! Modules, bottom-up:
//!
//! * [`linalg`], [`expm`] — dense helpers, numerical rank, matrix exponential.
//! * [`subspace`] — subspace algebra (images, sums, intersections, preimages,
//!   invariant closures, principal-angle containment).
//! * [`pencil`] — regularity, quasi-Weierstrass decomposition via Wong
//!   sequences, projectors/selectors, impulse matrices.
//! * [`reform`] — switched model assembly, the jump-ODE reformulation,
//!   augmented input/output matrices, Lyapunov-equation data.
//! * [`sim`] — exact per-interval simulation with jump and impulse records.
//! * [`sets`] — reachability/observability recursions and the containment
//!   and equality checks between the different system reformulations.
//! * [`gramian`] — generalized Lyapunov solves, Gramian containment reports,
//!   balancing and reduction.
//! * [`synth`] — seeded random model generation for verification suites.
//! * [`fileio`] — JSON model/signal/input formats and CSV export.

pub mod error;
pub mod expm;
pub mod fileio;
pub mod gramian;
pub mod linalg;
pub mod pencil;
pub mod reform;
pub mod sets;
pub mod sim;
pub mod subspace;
pub mod synth;

pub use error::{Error, Result};
pub use expm::expm;
pub use subspace::{Containment, Subspace};

// The public API speaks nalgebra types; re-export the crate so downstream
// users build against the same version.
pub use nalgebra;

use linalg::RankTol;

/// Numerical tolerances shared across the pipeline.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Absolute override for the singular-value rank threshold; `None`
    /// selects the adaptive `max(dims) * eps * sigma_max` rule.
    pub rank: Option<f64>,
    /// Relative Frobenius threshold for "this matrix is zero" tests.
    pub zero: f64,
    /// Gate on the quasi-Weierstrass block residuals, relative to
    /// `norm(E) + 1` resp. `norm(A) + 1`.
    pub qwf: f64,
    /// Condition-number cap on decomposition bases.
    pub cond_cap: f64,
    /// Principal-angle tolerance for verification checks.
    pub check: f64,
    /// Seed for the randomized regularity probes.
    pub probe_seed: u64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank: None,
            zero: 1e-10,
            qwf: 1e-8,
            cond_cap: 1e12,
            check: 1e-8,
            probe_seed: 42,
        }
    }
}

impl Tolerances {
    /// Rank policy implied by the optional absolute override.
    pub fn rank_tol(&self) -> RankTol {
        match self.rank {
            Some(t) => RankTol::Absolute(t),
            None => RankTol::Adaptive,
        }
    }
}
