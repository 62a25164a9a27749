use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what}: argument {value} outside the admissible domain")]
    Domain { what: &'static str, value: f64 },

    #[error("{stage}: parameter {name} = {value} exceeds the smallness bound {bound}")]
    RejectedParameter {
        stage: &'static str,
        name: &'static str,
        value: f64,
        bound: f64,
    },

    #[error("{stage}: Picard iteration is not contracting (update ratio {ratio:.3e})")]
    DivergedIteration { stage: &'static str, ratio: f64 },

    #[error("{stage}: no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence {
        stage: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{stage}: singular Jacobian (determinant {det:.3e})")]
    SingularJacobian { stage: &'static str, det: f64 },

    #[error("supercone: bootstrap bound violated (sup |Q1|/((a-1) log(a-1))^2 = {observed:.3e} > {allowed:.3e})")]
    BootstrapViolation { observed: f64, allowed: f64 },

    #[error("farfield: truncation error estimate {estimate:.3e} exceeds tolerance {tol:.3e}")]
    Truncation { estimate: f64, tol: f64 },

    #[error("{stage}: {message}")]
    Invalid { stage: &'static str, message: String },

    #[error("evaluation point {a} outside segment [{lo}, {hi}]")]
    OutOfInterval { a: f64, lo: f64, hi: f64 },

    #[error("{stage}: ill-conditioned least-squares fit (condition number {cond:.3e})")]
    IllConditioned { stage: &'static str, cond: f64 },

    #[error("{stage}: root bracketing failed")]
    RootBracket { stage: &'static str },

    #[error("{stage}: finite-difference step {step} too large for cutoff width {width}")]
    StepTooLarge {
        stage: &'static str,
        step: f64,
        width: f64,
    },

    #[error("{stage}: aliasing, k_max h = {k_max} * {h} exceeds π")]
    Aliasing { stage: &'static str, k_max: f64, h: f64 },

    #[error("time step {dt} violates the CFL bound {limit}")]
    Cfl { dt: f64, limit: f64 },
}

impl Error {
    pub(crate) fn invalid(stage: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            stage,
            message: message.into(),
        }
    }

    /// Name of the pipeline stage that raised the error, if any.
    pub fn stage(&self) -> &'static str {
        match self {
            Error::Domain { what, .. } => what,
            Error::RejectedParameter { stage, .. }
            | Error::DivergedIteration { stage, .. }
            | Error::NonConvergence { stage, .. }
            | Error::SingularJacobian { stage, .. }
            | Error::Invalid { stage, .. }
            | Error::IllConditioned { stage, .. }
            | Error::RootBracket { stage }
            | Error::StepTooLarge { stage, .. }
            | Error::Aliasing { stage, .. } => stage,
            Error::BootstrapViolation { .. } => "supercone",
            Error::Truncation { .. } => "farfield",
            Error::OutOfInterval { .. } => "evaluate",
            Error::Cfl { .. } => "evolve",
        }
    }
}
