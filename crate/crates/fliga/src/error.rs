use thiserror::Error;

/// Errors produced by the discretization and solver layers.
#[derive(Error, Debug)]
pub enum FligaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("scalar inverse map failed to converge for row {row} at xi = {xi} (residual {residual:e})")]
    NonConvergence { row: usize, xi: f64, residual: f64 },

    #[error("singular physical map: |det J| = {det:e} at quadrature point (g = {g}, l = {l})")]
    SingularMap { det: f64, g: usize, l: usize },

    #[error("floating regulation failed: {0}")]
    RegulationFailure(String),

    #[error("refinement would exceed the provisioned quadrature density: {0}")]
    DensityExceeded(String),

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("Newton solve diverged: {0}")]
    NewtonDivergence(String),

    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<FligaError>,
    },
}

impl FligaError {
    /// Attach a time-step index to an error bubbling out of the time loop.
    pub fn at_step(self, step: usize) -> Self {
        FligaError::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, FligaError>;
