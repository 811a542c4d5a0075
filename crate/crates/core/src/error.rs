use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("empty class: no feature vectors supplied")]
    EmptyClass,

    #[error("insufficient samples for class {class_id}: have {count}, need at least {required}")]
    InsufficientSamples {
        class_id: u32,
        count: usize,
        required: usize,
    },

    #[error("class {0} is referenced but not present")]
    MissingClass(u32),

    #[error("skewness undefined: {0}")]
    UndefinedSkewness(String),

    #[error("similarity undefined: zero-norm vector")]
    UndefinedSimilarity,

    #[error("matrix not factorizable even with diagonal jitter {max_jitter:e}")]
    NotFactorizable { max_jitter: f64 },

    #[error("sampling failed for class {class}, distribution {distribution}: {source}")]
    Sampling {
        class: usize,
        distribution: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("episode specification unsatisfiable: {0}")]
    Unsatisfiable(String),

    #[error("episode {index}: {source}")]
    Episode {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short stable tag for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Format(_) => "format",
            Error::Dimension { .. } => "dimension",
            Error::Data(_) => "data",
            Error::Domain(_) => "domain",
            Error::InvalidParams(_) => "params",
            Error::EmptyClass => "empty-class",
            Error::InsufficientSamples { .. } => "insufficient-samples",
            Error::MissingClass(_) => "missing-class",
            Error::UndefinedSkewness(_) => "undefined-skewness",
            Error::UndefinedSimilarity => "undefined-similarity",
            Error::NotFactorizable { .. } => "not-factorizable",
            Error::Sampling { source, .. } | Error::Episode { source, .. } => source.kind(),
            Error::Divergence { .. } => "divergence",
            Error::Unsatisfiable(_) => "unsatisfiable",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn in_episode(self, index: u64) -> Error {
        Error::Episode {
            index,
            source: Box::new(self),
        }
    }
}
