use thiserror::Error;

/// Errors raised across the model, integrator and analysis layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input violated a precondition (non-finite value, bad length, negative history).
    #[error("domain error: {0}")]
    Domain(String),

    /// The integrator produced a non-finite state.
    #[error("integration diverged after t = {last_valid_time}")]
    IntegrationDiverged { last_valid_time: f64 },

    /// Not enough oscillation in the window to decide anything.
    #[error("inconclusive measurement: {0}")]
    Inconclusive(String),

    /// An operation was requested on a value in the wrong state.
    #[error("invalid state: {0}")]
    State(String),

    /// The parameter set lies outside the regime where the quantity exists.
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    /// A closed form left its mathematical domain by more than roundoff.
    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    /// A denominator or coefficient degenerated (zero or non-finite).
    #[error("numeric degeneracy: {0}")]
    NumericDegeneracy(String),

    /// An iterative search failed to converge.
    #[error("not found: {0}")]
    NotFound(String),

    /// A proven inequality was violated; indicates a bug, not bad input.
    #[error("internal contradiction: {0}")]
    InternalContradiction(String),

    /// Parameters sit exactly on a degenerate boundary.
    #[error("degenerate regime: {0}")]
    DegenerateRegime(String),
}

pub type Result<T> = std::result::Result<T, Error>;
