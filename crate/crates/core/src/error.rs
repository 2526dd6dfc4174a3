use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// The point lies outside the domain where the model's forms are defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Integration could not reach the requested time.
    #[error("flow diverged after t = {last_good_time}: {reason}")]
    FlowDivergence { last_good_time: f64, reason: String },

    /// Newton failed or the splitting became singular: the transported
    /// foliation no longer fibers over the real locus (left the interval E).
    #[error("foliation degeneracy / left interval E (residual {residual:e}): {reason}")]
    Degeneracy { residual: f64, reason: String },

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    /// Last time at which the computation was known to be good, when the
    /// failure carries one.
    pub fn last_good_time(&self) -> Option<f64> {
        match self {
            Error::FlowDivergence { last_good_time, .. } => Some(*last_good_time),
            _ => None,
        }
    }

    pub fn is_degeneracy(&self) -> bool {
        matches!(
            self,
            Error::Degeneracy { .. } | Error::FlowDivergence { .. } | Error::Domain(_)
        )
    }
}
