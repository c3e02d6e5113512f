use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("n too small: got {n}, need at least {min}")]
    GridTooSmall { n: usize, min: usize },

    #[error("kernel quadrature node {node} is not a multiple of the grid spacing {h}")]
    KernelMisaligned { node: f64, h: f64 },

    #[error("kernel stencil is reducible on {n} nodes (offset gcd {gcd})")]
    ReducibleStencil { n: usize, gcd: usize },

    #[error("power iteration did not converge after {iterations} iterations (last residual {residual:.3e})")]
    EigenNoConvergence { iterations: usize, residual: f64 },

    #[error("power iteration produced a non-positive iterate at step {iteration}")]
    NonPositiveIterate { iteration: usize },

    #[error("eigen-solve failed at mu = {mu}: {source}")]
    AtTilt {
        mu: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("dense spectrum oracle failed: {0}")]
    OracleFailure(String),

    #[error("no interior minimum of lambda0(mu)/mu on [{lo}, {hi}]; widen the search interval")]
    NoInteriorMinimum { lo: f64, hi: f64 },

    #[error("no subcritical decay rate; waves below c* do not exist (c = {c}, c* = {c_star})")]
    NoSubcriticalDecayRate { c: f64, c_star: f64 },

    #[error("decay-rate bisection failed: {0}")]
    DecayRateNotFound(String),

    #[error("b too large; decrease b_factor ({0})")]
    BandNotFound(String),

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("time step {dt} exceeds the explicit stability bound {bound}")]
    UnstableStep { dt: f64, bound: f64 },

    #[error("non-finite state at t = {t}")]
    BlowUp { t: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("front not found")]
    FrontNotFound,

    #[error("domain too short: {0}")]
    DomainTooShort(String),

    #[error("tail window too short: {0}")]
    WindowTooShort(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("configuration error:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Hypothesis(_) => 2,
            Error::EigenNoConvergence { .. }
            | Error::OracleFailure(_)
            | Error::NoInteriorMinimum { .. }
            | Error::NoSubcriticalDecayRate { .. }
            | Error::DecayRateNotFound(_)
            | Error::BandNotFound(_)
            | Error::BlowUp { .. }
            | Error::NoConvergence(_)
            | Error::FrontNotFound
            | Error::DomainTooShort(_)
            | Error::WindowTooShort(_) => 3,
            Error::AtTilt { source, .. } => source.exit_code(),
            Error::NonPositiveIterate { .. } | Error::Invariant(_) => 4,
            _ => 1,
        }
    }

    pub(crate) fn at_tilt(mu: f64, source: Error) -> Error {
        Error::AtTilt {
            mu,
            source: Box::new(source),
        }
    }
}
