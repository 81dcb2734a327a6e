use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point outside the potential's domain: {0}")]
    Domain(String),

    /// The ray `center + rho * v` left the domain; `last_feasible` is the
    /// largest radius probed that was still inside.
    #[error("ray left the domain (largest feasible radius probed: {last_feasible})")]
    DomainExit { last_feasible: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("all ensemble weights are zero")]
    ZeroWeights,

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("root solve failed to bracket g(rho) = {target} after {expansions} expansions")]
    RootBracket { target: f64, expansions: usize },

    #[error("{non_finite} of {total} candidates produced non-finite cost")]
    TooManyNonFinite { non_finite: usize, total: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("worker {id}: {source}")]
    Worker {
        id: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, got })
        }
    }

    pub(crate) fn for_worker(self, id: usize) -> Error {
        Error::Worker {
            id,
            source: Box::new(self),
        }
    }
}
