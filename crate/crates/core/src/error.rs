//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entries in {0}")]
    NonFinite(String),

    #[error("matrix pencil is not regular{}", mode_suffix(.mode))]
    NotRegular { mode: Option<usize>, detail: String },

    #[error("ill-conditioned decomposition basis: cond = {cond:.3e} exceeds cap {cap:.3e}")]
    IllConditionedBasis { cond: f64, cap: f64 },

    #[error("ambient dimension mismatch: {left} vs {right}")]
    AmbientMismatch { left: usize, right: usize },

    #[error("time {t} outside the covered horizon [{start}, {end}]")]
    OutOfHorizon { t: f64, start: f64, end: f64 },

    #[error("parse error in {context}: {msg}")]
    Parse { context: String, msg: String },

    #[error("invalid switching signal: {0}")]
    InvalidSignal(String),

    #[error("invalid input signal: {0}")]
    InvalidInput(String),

    #[error("Lyapunov-type operator is singular: {0}")]
    OperatorSingular(String),

    #[error("{which} is not positive semidefinite: most negative eigenvalue {min_eig:.6e}")]
    NotPsd { which: &'static str, min_eig: f64 },

    #[error("requested order {requested} exceeds the numerical rank {max_feasible}")]
    RankTooLow { requested: usize, max_feasible: usize },

    #[error("modes do not share a common differential subspace: {0}")]
    HeterogeneousDifferentialSubspaces(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

fn mode_suffix(mode: &Option<usize>) -> String {
    match mode {
        Some(j) => format!(" (mode {j})"),
        None => String::new(),
    }
}

impl Error {
    /// Groups errors the way the command-line tool maps them to exit codes:
    /// `true` for numerical failures (singular operators, indefinite
    /// solutions), `false` for validation and parse problems.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::OperatorSingular(_)
                | Error::NotPsd { .. }
                | Error::IllConditionedBasis { .. }
                | Error::Numerical(_)
        )
    }
}
