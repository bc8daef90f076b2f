//! Steering equilibrium selection in evolutionary games with a state-feedback
//! controller designed by pole assignment.
//!
//! The library covers the full workflow for one-population symmetric games
//! under replicator dynamics:
//!
//! 1. [`game`] — payoff matrices (exact rational entries), Nash equilibria by
//!    support enumeration.
//! 2. [`dynamics`] — the replicator vector field, the controlled field with a
//!    budget-balancing tax, their Jacobians, and a simplex-preserving RK4
//!    integrator.
//! 3. [`eigen`] — dense eigendecomposition for small real matrices and
//!    eigencycle values from complex eigenvectors.
//! 4. [`control`] — pole-shift targets, constrained single-input placement
//!    (eigenstructure solve and Ackermann), controller assembly with the
//!    equilibrium-conservation constraint `K·x* = 0`.
//! 5. [`abm`] — a finite-population agent-based counterpart (imitative
//!    pairwise-difference revision with mutation, complete matching).
//! 6. [`metrics`] — long-run distribution, distances, half-convergence time,
//!    angular momentum per 2-D subspace, cycle strength.
//! 7. [`cli`] — the command-line workflow gluing everything together and
//!    emitting CSV/JSON artifacts.
//!
//! The crate's `examples/` directory demonstrates each capability end to end;
//! `src/bin/evoctrl.rs` is a thin wrapper over [`cli`].

pub mod abm;
pub mod cli;
pub mod control;
pub mod dynamics;
pub mod eigen;
pub mod game;
pub mod metrics;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("uncontrollable channel: {0}")]
    UncontrollableChannel(String),

    #[error("pole placement infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate pole target: {0}")]
    DegenerateTarget(String),

    #[error(
        "equilibrium-conservation constraint violated: |K·x*| = {residual:.3e} exceeds {tol:.1e}"
    )]
    ConstraintViolation { residual: f64, tol: f64 },

    #[error("integration instability at t = {t}: {detail}; try a smaller step size")]
    Instability { t: f64, detail: String },

    #[error("eigensolver failed to converge: {0}")]
    Numerical(String),

    #[error("no equilibrium found")]
    NoEquilibrium,

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for input/configuration problems,
    /// 1 otherwise (evaluation mismatches are raised separately by the CLI).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_)
            | Error::Config(_)
            | Error::Parse(_)
            | Error::Csv(_)
            | Error::Io(_)
            | Error::NoEquilibrium
            | Error::UncontrollableChannel(_)
            | Error::Infeasible(_)
            | Error::DegenerateTarget(_)
            | Error::ConstraintViolation { .. } => 2,
            _ => 1,
        }
    }
}

/// Checks the simplex-state invariants: components ≥ −1e-12, sum within
/// 1e-9 of 1.
pub fn check_simplex(x: &[f64]) -> Result<()> {
    if x.iter().any(|v| *v < -1e-12 || !v.is_finite()) {
        return Err(Error::Config(format!("not a simplex state: {x:?}")));
    }
    let s: f64 = x.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "simplex components sum to {s}, expected 1"
        )));
    }
    Ok(())
}
