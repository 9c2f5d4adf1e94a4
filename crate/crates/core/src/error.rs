use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("Følner prefix exhausted at index {index} ({available} members available)")]
    PrefixExhausted { index: usize, available: usize },
    #[error("no basis member {stage} reaches the required invariance within the prefix")]
    NeedsLargerPrefix { stage: usize },
    #[error("strict mode violation: {0}")]
    Strict(String),
    #[error("core of translate (stage {stage}, center #{center}) keeps {kept} of {size} elements")]
    CoreTooSmall { stage: usize, center: usize, kept: usize, size: usize },
    #[error("ε-disjointness of the parts is undecided; cores are unavailable")]
    CoresUnavailable,
    #[error("empty index set: {0}")]
    EmptyIndexSet(String),
    #[error("matrix dimension {dim} exceeds the cap {cap}; use inertia_count")]
    DimensionCap { dim: usize, cap: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{0}")]
    Unsupported(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
