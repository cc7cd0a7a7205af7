use crate::tableau::FamilyId;
use thiserror::Error;

/// Phase of a constrained step in which a nonlinear solve runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolvePhase {
    /// Coupled solve for the internal stages `(Q_2..Q_s, P_1..P_s,
    /// Lambda_1..Lambda_{s-1})`.
    Stage,
    /// End-of-step solve for `(p_1, Lambda_s)` enforcing the hidden
    /// constraint.
    Projection,
    /// Momentum projection of an initial state onto the hidden constraint.
    InitialProjection,
}

impl std::fmt::Display for SolvePhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolvePhase::Stage => "stage",
            SolvePhase::Projection => "projection",
            SolvePhase::InitialProjection => "initial-projection",
        };
        f.write_str(s)
    }
}

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A tableau parameter lies outside its admissible range.
    #[error("parameter out of domain: {0}")]
    ParameterOutOfDomain(String),

    /// A weight needed as a divisor is numerically zero.
    #[error("degenerate weight b[{index}] = {value:.3e}")]
    DegenerateWeights { index: usize, value: f64 },

    /// Family cannot run through the constraint-preserving step.
    #[error("family {family} is not constraint-preserving (first stage does not collocate the base point)")]
    NotConstraintPreserving { family: FamilyId },

    /// Family has no free parameter to search over.
    #[error("family {family} is not parametrized; the energy search needs a free alpha")]
    NotParametrized { family: FamilyId },

    /// Step size violates `0 < h <= h_cap`.
    #[error("invalid step size h = {h:.3e} (require 0 < h <= {cap:.3e})")]
    InvalidStep { h: f64, cap: f64 },

    /// Vector dimensions do not match the problem.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A state violates the constraint manifold beyond tolerance.
    #[error("state off the constraint manifold: |g|_inf = {g_inf:.3e}, |G H_p|_inf = {hidden_inf:.3e} (tolerance {tol:.3e})")]
    InconsistentState { g_inf: f64, hidden_inf: f64, tol: f64 },

    /// Newton ran out of iterations.
    #[error("newton did not converge in {phase} solve: residual {residual_norm:.3e} after {iterations} iterations")]
    NewtonMaxIterations {
        phase: SolvePhase,
        residual_norm: f64,
        iterations: usize,
    },

    /// Newton hit a singular or non-finite Jacobian.
    #[error("singular jacobian in {phase} solve at iteration {iteration}")]
    SingularJacobian { phase: SolvePhase, iteration: usize },

    /// The energy residual never changed sign inside the alpha domain.
    #[error("no bracket for the energy residual in [{lo:.3}, {hi:.3}]; best |mu| = {best_mu:.3e} at alpha = {best_alpha:.3e}")]
    NoBracket {
        lo: f64,
        hi: f64,
        best_alpha: f64,
        best_mu: f64,
    },

    /// A bracketed root refinement collapsed without meeting the tolerance.
    #[error("energy root refinement stalled at alpha = {alpha:.6e} with |mu| = {mu:.3e} (tolerance {tol:.3e})")]
    RootRefinementStalled { alpha: f64, mu: f64, tol: f64 },

    /// Two reference resolutions disagree beyond the self-consistency bound.
    #[error("reference solution failed self-consistency: resolutions differ by {disagreement:.3e} (tolerance {tol:.3e})")]
    ReferenceInconsistent { disagreement: f64, tol: f64 },

    /// A run-level configuration value is unusable.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A trajectory step failed; wraps the underlying error with position.
    #[error("step {step} (t = {t:.6}) failed: {source}")]
    StepFailed {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for errors caused by unusable inputs or configuration, as
    /// opposed to failures that arise while a valid run is executing.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::ParameterOutOfDomain(_)
                | Error::DegenerateWeights { .. }
                | Error::NotConstraintPreserving { .. }
                | Error::NotParametrized { .. }
                | Error::InvalidStep { .. }
                | Error::DimensionMismatch(_)
                | Error::InconsistentState { .. }
                | Error::InvalidConfig(_)
        )
    }

    /// Short stable identifier for machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ParameterOutOfDomain(_) => "parameter-out-of-domain",
            Error::DegenerateWeights { .. } => "degenerate-weights",
            Error::NotConstraintPreserving { .. } => "not-constraint-preserving",
            Error::NotParametrized { .. } => "not-parametrized",
            Error::InvalidStep { .. } => "invalid-step",
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::InconsistentState { .. } => "inconsistent-state",
            Error::NewtonMaxIterations { .. } => "newton-max-iterations",
            Error::SingularJacobian { .. } => "singular-jacobian",
            Error::NoBracket { .. } => "no-bracket",
            Error::RootRefinementStalled { .. } => "root-refinement-stalled",
            Error::ReferenceInconsistent { .. } => "reference-inconsistent",
            Error::InvalidConfig(_) => "invalid-config",
            Error::StepFailed { .. } => "step-failed",
        }
    }
}
