use thiserror::Error;

/// Errors raised by the factorization toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimension condition violated: {0}")]
    Dimension(String),

    #[error("target outside certified radius: distance {distance:.6e} > radius {radius:.6e}")]
    Admissibility { distance: f64, radius: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("unknown map `{0}`")]
    UnknownMap(String),

    #[error("unknown certificate case `{0}`")]
    UnknownCase(String),

    #[error("unsupported loss: {0}")]
    UnsupportedLoss(String),

    #[error("dataset fails qualification: {0} violating sample pair(s)")]
    Qualification(usize),

    #[error("degenerate sampling: {rejected} of {attempted} draws hit a kink")]
    DegenerateSampling { rejected: usize, attempted: usize },

    #[error("not applicable: {0}")]
    Inapplicable(String),

    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Dimension(_) => "dimension",
            Error::Admissibility { .. } => "admissibility",
            Error::Invariant(_) => "invariant",
            Error::NonFinite(_) => "non_finite",
            Error::UnknownMap(_) => "unknown_map",
            Error::UnknownCase(_) => "unknown_case",
            Error::UnsupportedLoss(_) => "unsupported_loss",
            Error::Qualification(_) => "qualification",
            Error::DegenerateSampling { .. } => "degenerate_sampling",
            Error::Inapplicable(_) => "inapplicable",
            Error::Schema { .. } => "schema",
        }
    }

    pub fn schema(line: usize, msg: impl Into<String>) -> Self {
        Error::Schema {
            line,
            message: msg.into(),
        }
    }
}
