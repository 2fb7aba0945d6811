//! Seeded random generation of regular pencils, switched models, switching
//! signals and smooth inputs, plus the simulation-based oracles used by the
//! verification suites.
//!
//! Random pencils are built from prescribed quasi-Weierstrass data with
//! well-conditioned coordinate changes, which guarantees regularity and
//! keeps every downstream rank decision comfortably away from its
//! threshold.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::pencil::ModeSystem;
use crate::reform::{JumpOdeSystem, SwitchedDae, SwitchingSignal};
use crate::sim::{self, InputPiece, InputSignal, PolyExpTerm};
use crate::subspace::Subspace;
use crate::Tolerances;

pub struct ModelSampler {
    rng: ChaCha8Rng,
}

impl ModelSampler {
    pub fn new(seed: u64) -> Self {
        ModelSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_below(&mut self, k: usize) -> usize {
        self.rng.random_range(0..k)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    /// Standard normal sample (Box–Muller).
    fn gauss(&mut self) -> f64 {
        let u1: f64 = self.rng.random_range(f64::EPSILON..1.0);
        let u2: f64 = self.rng.random_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| self.gauss())
    }

    /// Random orthogonal matrix from the QR factorization of a Gaussian.
    pub fn orthogonal(&mut self, n: usize) -> DMatrix<f64> {
        if n == 0 {
            return DMatrix::zeros(0, 0);
        }
        let qr = self.matrix(n, n).qr();
        qr.q()
    }

    /// Random invertible matrix with singular values in [0.5, 2].
    pub fn well_conditioned(&mut self, n: usize) -> DMatrix<f64> {
        if n == 0 {
            return DMatrix::zeros(0, 0);
        }
        let q1 = self.orthogonal(n);
        let q2 = self.orthogonal(n);
        let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| self.uniform(0.5, 2.0)));
        q1 * d * q2
    }

    /// Random matrix with all eigenvalue real parts at most `-margin`.
    pub fn stable_matrix(&mut self, n: usize, margin: f64) -> DMatrix<f64> {
        let g = self.matrix(n, n) * (1.0 / (n as f64).sqrt());
        let max_re = g
            .complex_eigenvalues()
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max);
        g - DMatrix::identity(n, n) * (max_re + margin)
    }

    /// Random regular pencil of size `n` with a random algebraic part.
    pub fn regular_pencil(&mut self, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let n_n = self.next_below(n / 2 + 1);
        self.regular_pencil_with(n, n_n)
    }

    /// Random regular pencil with a prescribed algebraic block size,
    /// assembled as `E = S^-1 blkdiag(I, N) T^-1`,
    /// `A = S^-1 blkdiag(J, I) T^-1` for well-conditioned `S^-1`, `T^-1`,
    /// stable `J` and a nilpotent `N` with randomized index.
    pub fn regular_pencil_with(&mut self, n: usize, n_n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        assert!(n_n <= n, "algebraic block larger than the pencil");
        let n_j = n - n_n;
        let j = self.stable_matrix(n_j, 0.2);
        let mut nil = DMatrix::zeros(n_n, n_n);
        for i in 0..n_n.saturating_sub(1) {
            if self.uniform(0.0, 1.0) < 0.6 {
                nil[(i, i + 1)] = 1.0;
            }
        }
        let mut e_canon = DMatrix::zeros(n, n);
        e_canon
            .view_mut((0, 0), (n_j, n_j))
            .copy_from(&DMatrix::identity(n_j, n_j));
        e_canon.view_mut((n_j, n_j), (n_n, n_n)).copy_from(&nil);
        let mut a_canon = DMatrix::zeros(n, n);
        a_canon.view_mut((0, 0), (n_j, n_j)).copy_from(&j);
        a_canon
            .view_mut((n_j, n_j), (n_n, n_n))
            .copy_from(&DMatrix::identity(n_n, n_n));

        let s_inv = self.well_conditioned(n);
        let t_inv = self.well_conditioned(n);
        (&s_inv * &e_canon * &t_inv, &s_inv * &a_canon * &t_inv)
    }

    /// Random regular mode with Gaussian input and output matrices.
    pub fn mode_system(&mut self, n: usize, m: usize, p: usize) -> ModeSystem {
        let (e, a) = self.regular_pencil(n);
        ModeSystem::new(e, a, self.matrix(n, m), self.matrix(p, n)).expect("consistent by construction")
    }

    /// Random switched descriptor system.
    pub fn switched_dae(
        &mut self,
        n: usize,
        m: usize,
        p: usize,
        mode_count: usize,
        tols: &Tolerances,
    ) -> Result<SwitchedDae> {
        let modes = (0..mode_count).map(|_| self.mode_system(n, m, p)).collect();
        SwitchedDae::new(modes, tols)
    }

    /// Random switched system with identity `E` in every mode and stable
    /// drifts clustered around a common one, so the coupled Lyapunov
    /// operator stays invertible.
    pub fn ode_switched_dae(
        &mut self,
        n: usize,
        m: usize,
        p: usize,
        mode_count: usize,
        tols: &Tolerances,
    ) -> Result<SwitchedDae> {
        let base = self.stable_matrix(n, 0.7);
        let modes = (0..mode_count)
            .map(|j| {
                let a = if j == 0 {
                    base.clone()
                } else {
                    &base + self.matrix(n, n) * 0.15
                };
                ModeSystem::new(
                    DMatrix::identity(n, n),
                    a,
                    self.matrix(n, m),
                    self.matrix(p, n),
                )
                .expect("consistent by construction")
            })
            .collect();
        SwitchedDae::new(modes, tols)
    }

    /// Random switching signal with `switches` instants after the start and
    /// interval durations in [0.3, 0.8].
    pub fn signal(&mut self, mode_count: usize, switches: usize, t0: f64) -> SwitchingSignal {
        let mut entries = Vec::with_capacity(switches + 1);
        let mut t = t0;
        for _ in 0..=switches {
            entries.push((t, self.next_below(mode_count)));
            t += self.uniform(0.3, 0.8);
        }
        SwitchingSignal::new(entries, t, mode_count).expect("consistent by construction")
    }

    /// Smooth random input: per channel a cubic polynomial plus two
    /// exponential terms with random rates, so derivative stacks of any
    /// order are generic.
    pub fn input(&mut self, m: usize, start: f64) -> InputSignal {
        let channels = (0..m)
            .map(|_| {
                let mut terms = vec![PolyExpTerm {
                    coeffs: (0..4).map(|_| self.gauss() * 0.7).collect(),
                    rate: 0.0,
                }];
                for _ in 0..2 {
                    terms.push(PolyExpTerm {
                        coeffs: vec![self.gauss() * 0.7, self.gauss() * 0.5],
                        rate: self.uniform(-1.5, 0.6),
                    });
                }
                terms
            })
            .collect();
        InputSignal::new(vec![InputPiece { start, channels }]).expect("consistent by construction")
    }
}

/// Span of the terminal states `z(t_end-)` reached from zero initial state
/// under `count` independent random inputs: the simulation-side view of the
/// reachable subspace via the signal.
pub fn simulated_reachable_span(
    jos: &JumpOdeSystem,
    q: &SwitchingSignal,
    sampler: &mut ModelSampler,
    count: usize,
    dt: f64,
) -> Result<Subspace> {
    let n = jos.state_dim();
    let mut finals = DMatrix::zeros(n, count);
    for trial in 0..count {
        let u = sampler.input(jos.input_dim(), q.t0());
        let traj = sim::simulate(jos, q, &u, dt)?;
        finals.set_column(trial, traj.final_state());
    }
    Subspace::image(&finals)
}

/// Largest magnitude seen anywhere in the zero-input response from the
/// initial state `z(t0+) = z0`: smooth output samples and Dirac impulse
/// coefficients alike.
pub fn zero_input_response(
    jos: &JumpOdeSystem,
    q: &SwitchingSignal,
    z0: &DVector<f64>,
    dt: f64,
) -> Result<f64> {
    let u = InputSignal::zero(jos.input_dim(), q.t0());
    let traj = sim::simulate_from(jos, q, &u, dt, z0)?;
    Ok(traj.max_output_abs().max(traj.max_impulse_abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pencil;

    #[test]
    fn sampled_pencils_are_regular() {
        let tols = Tolerances::default();
        let mut sampler = ModelSampler::new(5);
        for _ in 0..20 {
            let n = 2 + sampler.next_below(6);
            let (e, a) = sampler.regular_pencil(n);
            assert!(pencil::is_regular(&e, &a, &tols).unwrap().regular);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let a = ModelSampler::new(123).matrix(3, 3);
        let b = ModelSampler::new(123).matrix(3, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn stable_matrices_are_stable() {
        let mut sampler = ModelSampler::new(9);
        for n in 2..6 {
            let m = sampler.stable_matrix(n, 0.5);
            let max_re = m
                .complex_eigenvalues()
                .iter()
                .map(|l| l.re)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(max_re <= -0.5 + 1e-9);
        }
    }
}
