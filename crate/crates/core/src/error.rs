use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} outside its domain {domain}")]
    ParamDomain { name: &'static str, value: f64, domain: &'static str },
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("value {value} outside the support {support} of family `{family}`")]
    Support { family: &'static str, value: f64, support: &'static str },
    #[error("probability {0} not in the open interval (0, 1)")]
    Probability(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate covariate: {0}")]
    DegenerateCovariate(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unknown family `{0}`; valid ids: gaussian, gaussian_fixed_var, gamma, gamma_fixed_scale, exponential, pareto, beta")]
    UnknownFamily(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
}

impl Error {
    /// True for errors caused by bad input (as opposed to numerical breakdown).
    pub fn is_precondition(&self) -> bool {
        !matches!(self, Error::Numerical(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
