use crate::gaussian::ModeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    /// A quadrature form references a noise mode the registry does not hold.
    #[error("noise mode {0:?} is not present in the registry")]
    UnknownMode(ModeId),

    /// The meter has (numerically) zero variance, so conditioning is 0/0.
    #[error("degenerate measurement: meter variance {variance:e} is below {threshold:e}")]
    DegenerateMeasurement { variance: f64, threshold: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("invalid second moments: {0}")]
    InvalidMoments(String),

    #[error("unstable integration: {0}")]
    Unstable(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("unknown observable `{name}`; valid observables: {valid}")]
    UnknownObservable { name: String, valid: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
