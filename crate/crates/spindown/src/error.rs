use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across the coordinate charts and the flows
/// built on them. Degeneracies of a chart are reported as typed errors, not
/// panics, so callers can switch charts or abort cleanly.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mass system: {0}")]
    InvalidMasses(String),

    #[error("bodies {i} and {j} are separated by {sep:.3e}, below the floor {floor:.3e}")]
    SingularConfiguration {
        i: usize,
        j: usize,
        sep: f64,
        floor: f64,
    },

    #[error("moving frame degenerate: |x_n x x_(n-1)| = {cross:.3e} is below the floor {floor:.3e}")]
    FrameDegenerate { cross: f64, floor: f64 },

    #[error("nutation angle too close to 0 or pi: sin(theta) = {sin_theta:.3e} below floor {floor:.3e}")]
    GimbalDegenerate { sin_theta: f64, floor: f64 },

    #[error("{quantity} = {value:.3e} lies inside the floor {floor:.3e}")]
    DivisionDegenerate {
        quantity: &'static str,
        value: f64,
        floor: f64,
    },

    #[error("nutation angle at the chart seam theta = pi/2 (u^2 + v^2 = {s_sq:.6})")]
    ChartSeam { s_sq: f64 },

    #[error("(u, v) at the chart origin; spherical angles are undefined there")]
    ChartOrigin,

    #[error("square root of negative quantity: {what} = {value:.3e}")]
    SquareRootDomain { what: &'static str, value: f64 },

    #[error("integrator failed at t = {t:.6}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("no convergence after {iters} iterations, residual {residual:.3e}")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("mode {index} is not a strictly stable direction (Re lambda = {re:.3e})")]
    NoStableMode { index: usize, re: f64 },

    #[error("matrix asymmetry {asym:.3e} exceeds the certification limit {limit:.3e}")]
    Asymmetry { asym: f64, limit: f64 },

    #[error("trajectory tail too short for the requested fit: have {have} usable samples, need {need}")]
    InsufficientTail { have: usize, need: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Coarse classification used by callers that map failures onto process
    /// exit codes: domain errors mean the input state sits outside the chart
    /// or the physics is degenerate; convergence errors mean an iteration or
    /// integration gave up.
    pub fn is_convergence(&self) -> bool {
        matches!(
            self,
            Error::StepFailure { .. }
                | Error::NoConvergence { .. }
                | Error::InsufficientTail { .. }
        )
    }
}
