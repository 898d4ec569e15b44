use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("unit {unit}: {n} observations, need at least {min}")]
    TooFewObservations { unit: String, n: usize, min: usize },

    #[error("unit {unit}: number of observations {n} not supported by this construction")]
    UnsupportedSize { unit: String, n: usize },

    #[error("unit {unit}: non-finite observation")]
    NonFinite { unit: String },

    #[error("unit {unit}: zero scale estimate")]
    DegenerateScale { unit: String },

    #[error("degenerate sample: {0}")]
    DegenerateSample(&'static str),

    #[error("bias correction singular at x = {x} (radicand {radicand})")]
    Singular { x: f64, radicand: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short stable category, for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } | Error::Csv(_) => "parse",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::TooFewObservations { .. }
            | Error::UnsupportedSize { .. }
            | Error::NonFinite { .. }
            | Error::DegenerateScale { .. }
            | Error::DegenerateSample(_)
            | Error::ShapeMismatch(_) => "data",
            Error::Domain { .. } | Error::Singular { .. } => "numeric",
        }
    }
}
