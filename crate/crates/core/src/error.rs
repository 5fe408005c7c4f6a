use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("unknown language `{0}`")]
    Lookup(String),

    #[error("languages `{0}` and `{1}` share no task")]
    EmptyComparison(String, String),

    #[error("cannot pair samples of length {0} and {1}")]
    Pairing(usize, usize),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("likelihood is zero wherever the prior has mass")]
    NoPosterior,

    #[error("sampler initialization failed: {0}")]
    Init(String),

    #[error("chain {chain} accepted no proposal after warmup")]
    Mixing { chain: usize },

    #[error("convergence check failed for `{parameter}` (rhat {rhat:.4}, ess {ess:.1})")]
    Diagnostics {
        parameter: String,
        rhat: f64,
        ess: f64,
    },

    #[error("design matrix is rank deficient (column `{0}`)")]
    SingularDesign(String),

    #[error("prior needs benchmark data: {0}")]
    PriorData(String),

    #[error("degenerate prior: {0}")]
    DegeneratePrior(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("relation is not a partial order, cycle: {}", .0.join(" -> "))]
    Inconsistency(Vec<String>),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
