//! Switched-model assembly and the jump-ODE reformulation.
//!
//! A switched descriptor system is a family of regular modes sharing state,
//! input and output dimensions, activated by an external right-continuous
//! switching signal with finitely many switching instants. Decoupling every
//! mode turns the system into a switched ODE with state jumps
//!
//! ```text
//! ż(t)     = A_diff_{q_k} z(t) + B_diff_{q_k} u(t)          on (t_k, t_{k+1})
//! z(t_k+)  = Pi_{q_k} z(t_k-) + Pi_{q_k} JB_{q_{k-1}} U_{q_{k-1}}(t_k-)
//! y(t)     = C_diff_{q_k} z(t) + D_{q_k} U_{q_k}(t)
//! ```
//!
//! plus Dirac output impulses at the switching instants, where `U_q(t)`
//! stacks `u` and its first `nu_q - 1` derivatives and `JB` is the
//! input-derivative jump matrix of the leaving mode.
//!
//! This module also builds the augmented input matrices
//! `[B_diff_j, Pi_j JB_i]` (current mode j, predecessor i), the augmented
//! output matrices `[C_diff_j; IC_i]` (successor i), and the data of the
//! coupled generalized Lyapunov equations.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::pencil::{self, DecoupledMode, ModeSystem};
use crate::Tolerances;

/// A switched descriptor system: modes validated regular, dimensions shared.
#[derive(Debug, Clone)]
pub struct SwitchedDae {
    modes: Vec<ModeSystem>,
    n: usize,
    m: usize,
    p: usize,
}

impl SwitchedDae {
    /// Validates dimension consistency and per-mode regularity.
    pub fn new(modes: Vec<ModeSystem>, tols: &Tolerances) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::DimensionMismatch(
                "a switched system needs at least one mode".to_string(),
            ));
        }
        let n = modes[0].state_dim();
        let m = modes[0].input_dim();
        let p = modes[0].output_dim();
        for (j, mode) in modes.iter().enumerate() {
            if mode.state_dim() != n || mode.input_dim() != m || mode.output_dim() != p {
                return Err(Error::DimensionMismatch(format!(
                    "mode {} has dimensions (n={}, m={}, p={}), expected (n={n}, m={m}, p={p})",
                    j + 1,
                    mode.state_dim(),
                    mode.input_dim(),
                    mode.output_dim()
                )));
            }
            let report = pencil::is_regular(&mode.e, &mode.a, tols)?;
            if !report.regular {
                return Err(Error::NotRegular {
                    mode: Some(j + 1),
                    detail: "pencil rank-deficient at all probe shifts".to_string(),
                });
            }
        }
        Ok(SwitchedDae { modes, n, m, p })
    }

    pub fn modes(&self) -> &[ModeSystem] {
        &self.modes
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn output_dim(&self) -> usize {
        self.p
    }
}

/// An external switching signal: `entries[k] = (t_k, mode_k)` with strictly
/// increasing times, `entries[0].0 = t0`, and a horizon end past the last
/// switching instant. Mode indices are zero-based here; the on-disk format
/// uses one-based indices.
#[derive(Debug, Clone)]
pub struct SwitchingSignal {
    pub t_end: f64,
    entries: Vec<(f64, usize)>,
}

impl SwitchingSignal {
    pub fn new(entries: Vec<(f64, usize)>, t_end: f64, mode_count: usize) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidSignal("no entries".to_string()));
        }
        for window in entries.windows(2) {
            if window[1].0 <= window[0].0 {
                return Err(Error::InvalidSignal(format!(
                    "switching times must increase strictly: {} then {}",
                    window[0].0, window[1].0
                )));
            }
        }
        for &(t, mode) in &entries {
            if !t.is_finite() {
                return Err(Error::InvalidSignal("non-finite switching time".to_string()));
            }
            if mode >= mode_count {
                return Err(Error::InvalidSignal(format!(
                    "mode index {} out of range (have {} modes)",
                    mode + 1,
                    mode_count
                )));
            }
        }
        let last = entries.last().unwrap().0;
        if !t_end.is_finite() || t_end <= last {
            return Err(Error::InvalidSignal(format!(
                "horizon end {t_end} must lie past the last switching time {last}"
            )));
        }
        Ok(SwitchingSignal { t_end, entries })
    }

    pub fn t0(&self) -> f64 {
        self.entries[0].0
    }

    /// Number of switching instants after the start, i.e. `K`.
    pub fn switch_count(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn entries(&self) -> &[(f64, usize)] {
        &self.entries
    }

    /// Active mode on `[t_k, t_{k+1})`.
    pub fn mode_at(&self, k: usize) -> usize {
        self.entries[k].1
    }

    /// Duration `t_{k+1} - t_k`, with `t_{K+1} := t_end`.
    pub fn duration(&self, k: usize) -> f64 {
        let start = self.entries[k].0;
        let end = if k + 1 < self.entries.len() {
            self.entries[k + 1].0
        } else {
            self.t_end
        };
        end - start
    }

    /// Whether any mode is followed by itself. Such entries are legal and
    /// treated as genuine switching instants (the jump rule still applies);
    /// callers that want to reject them can use this query.
    pub fn has_consecutive_repeats(&self) -> bool {
        self.entries.windows(2).any(|w| w[0].1 == w[1].1)
    }

    /// Copy of the signal with every interval duration scaled by `factor`.
    pub fn with_scaled_durations(&self, factor: f64) -> SwitchingSignal {
        let t0 = self.t0();
        let mut entries = Vec::with_capacity(self.entries.len());
        for &(t, mode) in &self.entries {
            entries.push((t0 + (t - t0) * factor, mode));
        }
        let t_end = t0 + (self.t_end - t0) * factor;
        SwitchingSignal { t_end, entries }
    }
}

/// Per-mode data of the jump-ODE reformulation; the lean interface consumed
/// by the simulator and the subspace recursions. Reduced-order models reuse
/// this struct with a smaller state dimension.
#[derive(Debug, Clone)]
pub struct ModeDynamics {
    pub a_diff: DMatrix<f64>,
    pub b_diff: DMatrix<f64>,
    pub c_diff: DMatrix<f64>,
    pub pi: DMatrix<f64>,
    /// Input-derivative jump matrix (n x (m nu)).
    pub jump_b: DMatrix<f64>,
    /// Smooth feedthrough (p x (m nu)).
    pub feedthrough: DMatrix<f64>,
    /// Stacked impulse output blocks ((p (nu-1)) x n).
    pub imp_c: DMatrix<f64>,
    pub nu: usize,
}

impl ModeDynamics {
    pub fn from_decoupled(d: &DecoupledMode) -> Self {
        ModeDynamics {
            a_diff: d.a_diff.clone(),
            b_diff: d.b_diff.clone(),
            c_diff: d.c_diff.clone(),
            pi: d.pi.clone(),
            jump_b: d.jump_b.clone(),
            feedthrough: d.feedthrough.clone(),
            imp_c: d.imp_c.clone(),
            nu: d.nu,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a_diff.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b_diff.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c_diff.nrows()
    }

    /// Impulse output block `-C_imp E_imp^order` (order in `1..nu`).
    pub fn imp_c_block(&self, order: usize) -> DMatrix<f64> {
        let p = self.output_dim();
        self.imp_c
            .view(((order - 1) * p, 0), (p, self.state_dim()))
            .into_owned()
    }
}

/// The switched jump-ODE system: one `ModeDynamics` per mode, sharing
/// dimensions, plus (when built from a descriptor model) the full
/// decoupling data.
#[derive(Debug, Clone)]
pub struct JumpOdeSystem {
    pub modes: Vec<ModeDynamics>,
    pub decoupled: Option<Vec<DecoupledMode>>,
    n: usize,
    m: usize,
    p: usize,
}

impl JumpOdeSystem {
    pub fn from_modes(modes: Vec<ModeDynamics>) -> Self {
        let n = modes[0].state_dim();
        let m = modes[0].input_dim();
        let p = modes[0].output_dim();
        JumpOdeSystem {
            modes,
            decoupled: None,
            n,
            m,
            p,
        }
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn output_dim(&self) -> usize {
        self.p
    }

    /// Augmented input matrix `[B_diff_j, Pi_j JB_i]` for current mode `j`
    /// and predecessor `i`; just `B_diff_j` when there is no predecessor.
    pub fn aug_b(&self, j: usize, pred: Option<usize>) -> DMatrix<f64> {
        let mode = &self.modes[j];
        match pred {
            None => mode.b_diff.clone(),
            Some(i) => linalg::hcat(&[mode.b_diff.clone(), &mode.pi * &self.modes[i].jump_b]),
        }
    }

    /// Augmented output matrix `[C_diff_j; IC_i]` for current mode `j` and
    /// successor `i`; just `C_diff_j` when there is no successor.
    pub fn aug_c(&self, j: usize, succ: Option<usize>) -> DMatrix<f64> {
        let mode = &self.modes[j];
        match succ {
            None => mode.c_diff.clone(),
            Some(i) => linalg::vcat(&[mode.c_diff.clone(), self.modes[i].imp_c.clone()]),
        }
    }
}

/// Decouple every mode and assemble the jump-ODE system.
pub fn build_jump_ode(sys: &SwitchedDae, tols: &Tolerances) -> Result<JumpOdeSystem> {
    let mut decoupled = Vec::with_capacity(sys.mode_count());
    for (j, mode) in sys.modes().iter().enumerate() {
        let d = pencil::decouple(mode, tols).map_err(|e| match e {
            Error::NotRegular { detail, .. } => Error::NotRegular {
                mode: Some(j + 1),
                detail,
            },
            other => other,
        })?;
        decoupled.push(d);
    }
    let modes = decoupled.iter().map(ModeDynamics::from_decoupled).collect();
    Ok(JumpOdeSystem {
        modes,
        decoupled: Some(decoupled),
        n: sys.state_dim(),
        m: sys.input_dim(),
        p: sys.output_dim(),
    })
}

/// Which predecessor jump matrices enter the stacked Lyapunov input blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GleStacking {
    /// `B~_j = [B_diff_j, Pi_j JB_1, ..., Pi_j JB_M]` (self included; the
    /// self block vanishes identically since `Pi_j JB_j = 0`).
    AllModes,
    /// Skip the structurally zero self block.
    ExcludeSelf,
}

/// Data of the coupled generalized Lyapunov equations
///
/// ```text
/// A P + P A^T + sum_j (F_j P F_j^T + B~_j B~_j^T) = 0
/// A^T Q + Q A + sum_j (F_j^T Q F_j + C~_j^T C~_j) = 0
/// ```
///
/// with `A = A_diff_1` and `F_j = A_diff_j - A_diff_1`.
#[derive(Debug, Clone)]
pub struct GleMatrices {
    pub a: DMatrix<f64>,
    pub f: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub c: Vec<DMatrix<f64>>,
}

impl GleMatrices {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Dual data: transposing the drift terms and swapping the input and
    /// output blocks exchanges the two equations.
    pub fn transposed(&self) -> GleMatrices {
        GleMatrices {
            a: self.a.transpose(),
            f: self.f.iter().map(|f| f.transpose()).collect(),
            b: self.c.iter().map(|c| c.transpose()).collect(),
            c: self.b.iter().map(|b| b.transpose()).collect(),
        }
    }
}

/// Assemble the generalized Lyapunov data from a jump-ODE system.
///
/// The input blocks stack the jump contributions of every potential
/// predecessor mode and the output blocks stack the impulse rows of every
/// potential successor, so the resulting Gramians are valid for every
/// switching signal rather than one fixed sequence.
pub fn gle_matrices(jos: &JumpOdeSystem, stacking: GleStacking) -> GleMatrices {
    let m_count = jos.mode_count();
    let a = jos.modes[0].a_diff.clone();
    let mut f = Vec::with_capacity(m_count);
    let mut b = Vec::with_capacity(m_count);
    let mut c = Vec::with_capacity(m_count);
    for j in 0..m_count {
        f.push(&jos.modes[j].a_diff - &a);

        let mut b_parts = vec![jos.modes[j].b_diff.clone()];
        for i in 0..m_count {
            if stacking == GleStacking::ExcludeSelf && i == j {
                continue;
            }
            b_parts.push(&jos.modes[j].pi * &jos.modes[i].jump_b);
        }
        b.push(linalg::hcat(&b_parts));

        let mut c_parts = vec![jos.modes[j].c_diff.clone()];
        for i in 0..m_count {
            if stacking == GleStacking::ExcludeSelf && i == j {
                continue;
            }
            c_parts.push(jos.modes[i].imp_c.clone());
        }
        c.push(linalg::vcat(&c_parts));
    }
    GleMatrices { a, f, b, c }
}

/// Parse and validate a switched model from its JSON description.
pub fn load_switched_dae(text: &str, tols: &Tolerances) -> Result<SwitchedDae> {
    let file = crate::fileio::ModelFile::parse(text)?;
    file.into_switched_dae(tols)
}
