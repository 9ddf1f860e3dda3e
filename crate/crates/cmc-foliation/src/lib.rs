//! Constant-mean-curvature sphere foliations of asymptotically flat 3-metrics.
//!
//! The crate locates closed surfaces of prescribed constant mean curvature
//! H ≡ −2/σ in analytic Riemannian 3-metrics, traces the resulting foliation
//! outward in the mean-curvature radius σ, and evaluates the geometric
//! invariants that characterize asymptotic flatness: Hawking and ADM masses,
//! ADM and CMC linear momenta, foliation-property residuals, and an
//! asymptotically flat coordinate chart built from leaf eigenfunctions.
//! A small conformal-uniformization toolbox (Gauss-curvature map, Möbius
//! balancing, bubble factors) rounds out the analysis of near-round sphere
//! metrics.
//!
//! Sign convention throughout: the Euclidean round sphere of radius r has
//! mean curvature H = −2/r with respect to the outward normal, so σ := −2/H
//! is positive on all surfaces of interest.

pub mod ambient;
pub mod cli;
pub mod cmc_solver;
pub mod coordinate_builder;
pub mod invariants;
pub mod sphere_spectral;
pub mod surface_geometry;
pub mod uniformization;

/// Error category, mapped to process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Configuration / input validation problems (exit code 2).
    Config,
    /// Nonlinear solver failures (exit code 3).
    Solver,
    /// Analysis / post-processing failures (exit code 4).
    Analysis,
}

/// Structured error carried by every fallible operation in the crate.
#[derive(Debug, Clone, thiserror::Error, serde::Serialize)]
#[error("{module}.{operation}: {message}")]
pub struct Error {
    pub module: &'static str,
    pub operation: &'static str,
    pub message: String,
    pub kind: ErrorKind,
}

impl Error {
    pub fn config(module: &'static str, operation: &'static str, message: impl Into<String>) -> Self {
        Error { module, operation, message: message.into(), kind: ErrorKind::Config }
    }

    pub fn solver(module: &'static str, operation: &'static str, message: impl Into<String>) -> Self {
        Error { module, operation, message: message.into(), kind: ErrorKind::Solver }
    }

    pub fn analysis(module: &'static str, operation: &'static str, message: impl Into<String>) -> Self {
        Error { module, operation, message: message.into(), kind: ErrorKind::Analysis }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
