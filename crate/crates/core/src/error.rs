use thiserror::Error;

/// Every failure names the hypothesis of the filling argument it violates.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid size {0} is not a power of two >= 16")]
    BadGridSize(usize),

    #[error("boundary function is not holomorphic: negative-frequency energy {residual:.3e} exceeds {tolerance:.1e}")]
    NotHolomorphic { residual: f64, tolerance: f64 },

    #[error("curve passes through zero at sample {index} (winding number undefined)")]
    CurveThroughZero { index: usize },

    #[error("curve undersampled: phase increment {increment:.3} rad at sample {index} exceeds {limit:.3}")]
    Undersampled {
        index: usize,
        increment: f64,
        limit: f64,
    },

    #[error("nonzero winding number {winding} about 0 (zero-winding hypothesis for the logarithm failed)")]
    NonzeroWinding { winding: i64 },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("defining function undefined on the zero section w = 0")]
    ZeroSection,

    #[error("degenerate gradient |F_w| = {magnitude:.3e} (standing hypothesis F_w != 0 violated)")]
    DegenerateGradient { magnitude: f64 },

    #[error("torus family rejected (graphical-torus monotonicity/positivity hypotheses): {0}")]
    InvalidFamily(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("leaf vanishes inside the disk: min |g| = {min_modulus:.3e} (nonvanishing hypothesis g != 0)")]
    LeafHitZero { min_modulus: f64 },

    #[error("continuation stuck below minimum step; last good level t = {last_t}")]
    ContinuationStuck { last_t: f64 },

    #[error("leaf {leaf} failed: {source}")]
    LeafFailed { leaf: usize, source: Box<Error> },

    #[error("foliation degenerate: {0}")]
    FoliationDegenerate(String),

    #[error("point {re},{im} is not enclosed by the leaves swept up to t_max")]
    PointNotEnclosed { re: f64, im: f64 },

    #[error("leaf search missed the target: |leaf(0) - w0| = {error:.3e} > {tolerance:.1e}")]
    TargetToleranceMissed { error: f64, tolerance: f64 },

    #[error("motion points collide (injectivity violated): distance {distance:.3e} at lambda = {lambda_re},{lambda_im}")]
    PointsCollide {
        distance: f64,
        lambda_re: f64,
        lambda_im: f64,
    },

    #[error("ODE integration failed: {0}")]
    IntegrationFailure(String),

    #[error("points {first} and {second} share a modulus within tolerance (they would sit on one initial curve)")]
    ModuliCollision { first: usize, second: usize },

    #[error("pushed curve is not a radial graph at lambda angle {lambda_angle:.4}, t = {level:.4}")]
    StarShapeViolation { lambda_angle: f64, level: f64 },

    #[error("extended motion does not reproduce the given trajectories: {0}")]
    CoincidenceCheckFailed(String),
}

impl Error {
    /// Errors caused by malformed input rather than a failed mathematical certificate.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::BadGridSize(_)
                | Error::OutOfRange(_)
                | Error::PointsCollide { .. }
                | Error::ModuliCollision { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
