use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("point (r={r}, theta={theta}, z={z}) lies outside the cylinder")]
    OutOfDomain { r: f64, theta: f64, z: f64 },

    #[error("invalid boundary specification: {0}")]
    InvalidBoundary(String),

    #[error("linear solve failed: {0}")]
    SolverFailure(String),

    #[error("incompatible data: {0}")]
    IncompatibleData(String),

    /// Axial speed fell below half the base-flow minimum; the positive-speed
    /// hypothesis on the perturbed flow is violated.
    #[error(
        "stagnation detected at (r={r:.4}, theta={theta:.4}, z={z:.4}): axial speed {speed:.3e} < {threshold:.3e} \
         (hypothesis: perturbed flow keeps a positive lower speed bound)"
    )]
    StagnationDetected {
        r: f64,
        theta: f64,
        z: f64,
        speed: f64,
        threshold: f64,
    },

    /// Integral curve longer than the configured cap; hints at closed or
    /// stagnating streamlines.
    #[error(
        "streamline length exceeded {limit:.3e} (hypothesis: integral curves have finite length and are not closed)"
    )]
    LengthExceeded { limit: f64 },

    /// The flux does not enter through the whole inflow cap and leave
    /// through the whole outflow cap.
    #[error(
        "flux sign violated: max inflow flux {inflow_max:.3e} must be < 0 and min outflow flux {outflow_min:.3e} > 0"
    )]
    FluxSign { inflow_max: f64, outflow_min: f64 },

    #[error("degenerate inflow: |v.n| = {normal_speed:.3e} < {threshold:.3e} on the inflow cap")]
    DegenerateInflow { normal_speed: f64, threshold: f64 },

    #[error("div-curl input rejected: {0}")]
    ValidationFailure(String),

    #[error(
        "perturbation norm {norm:.3e} exceeds the ball radius {radius:.3e} (hypothesis: iterate stays in the small ball)"
    )]
    OutsideBall { norm: f64, radius: f64 },

    #[error(
        "fixed-point iteration did not converge in {iterations} iterations (last ratio {last_ratio:.3}); \
         boundary data probably exceed the smallness bound"
    )]
    NoConvergence { iterations: usize, last_ratio: f64 },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

impl Error {
    /// True for errors that signal a violated hypothesis of the existence
    /// theory rather than a programming or input error.
    pub fn is_hypothesis_violation(&self) -> bool {
        matches!(
            self,
            Error::StagnationDetected { .. }
                | Error::LengthExceeded { .. }
                | Error::DegenerateInflow { .. }
                | Error::FluxSign { .. }
                | Error::ValidationFailure(_)
                | Error::OutsideBall { .. }
        )
    }
}
