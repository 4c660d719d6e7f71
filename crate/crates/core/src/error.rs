use thiserror::Error;

/// Errors raised by the library. Negative mathematical outcomes (a loss that is
/// not additive, a missing standard loss) are return values, not errors.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("bad dimensions: {0}")]
    BadDimensions(String),

    #[error("missing entry: stratum `{stratum}`, d={d}, y={y:?}")]
    MissingEntry {
        stratum: String,
        d: usize,
        y: Vec<usize>,
    },

    #[error("duplicate entry: stratum `{stratum}`, d={d}, y={y:?}")]
    DuplicateEntry {
        stratum: String,
        d: usize,
        y: Vec<usize>,
    },

    #[error("index out of range: {0}")]
    BadIndex(String),

    #[error("malformed rational `{0}`")]
    MalformedRational(String),

    #[error("malformed document: {0}")]
    MalformedDocument(String),

    #[error("missing parameter `{0}`")]
    MissingParam(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("unknown example `{0}`")]
    UnknownExample(String),

    #[error("constraint violated: {0}")]
    ConstraintViolated(String),

    #[error("loss violates the cross-decision principal-strata restriction: {0}")]
    RestrictionViolated(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("overlap violated in stratum `{stratum}`: Pr(D={decision}) = {value} not in ({eta}, 1-{eta})")]
    OverlapViolated {
        stratum: String,
        decision: usize,
        value: String,
        eta: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("nonzero intercept requires the extended observable view")]
    NeedExtendedView,

    #[error("outcome is not binary (M = {0})")]
    OutcomeNotBinary(usize),

    #[error("decision is not binary (K = {0})")]
    DecisionNotBinary(usize),

    #[error("decision is binary; use the two-decision reduction instead")]
    DecisionBinary,

    #[error("search space too large: {0}")]
    SearchSpaceTooLarge(String),

    #[error("problem too large for exact enumeration: {0}")]
    TooLarge(String),

    #[error("marginals are infeasible: no joint law in the simplex reproduces them")]
    InfeasibleMarginals,

    #[error("no records with D={decision} in stratum {stratum}")]
    EmptyPropensityCell { stratum: usize, decision: usize },

    #[error("level requested for a loss with nonzero intercept; only differences are identified")]
    NeedExactLoss,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not additive: {0}")]
    NotAdditive(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
