use thiserror::Error;

/// Errors shared across the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("total Brownian time {total:.6e} exceeds cap {cap:.6e}")]
    CapExceeded { total: f64, cap: f64 },

    #[error("quadrature failed to converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("eigensolver did not reach residual {target:.3e} within {iters} iterations (best {best:.3e})")]
    NoConvergence { target: f64, iters: usize, best: f64 },

    #[error("point {x} outside solver domain [-{l}, {l}]")]
    OutOfDomain { x: f64, l: f64 },

    #[error("wavevector must be nonzero")]
    ZeroWavevector,

    #[error("kernel table audit failed: max scaled error {err:.3e} exceeds budget {budget:.3e}")]
    AuditFailed { err: f64, budget: f64 },

    #[error("query ({tau:.4}, {r:.4}) outside table coverage ({tau_max:.4}, {r_max:.4})")]
    TableCoverageExceeded { tau: f64, r: f64, tau_max: f64, r_max: f64 },

    #[error("fourth-moment battery requires m > 0")]
    RejectedMZero,

    #[error("split point {s} is not on the dyadic slab grid of [0, {t}]")]
    NonDyadicSplit { s: f64, t: f64 },

    #[error("beta {beta} out of range: requires beta < 1/(2 q) = {limit}")]
    BetaOutOfRange { beta: f64, limit: f64 },

    #[error("effective sample size {ess:.1} too small (need >= {min})")]
    DegenerateEss { ess: f64, min: f64 },

    #[error("test-function support overlaps the cutoff support")]
    SupportOverlap,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
