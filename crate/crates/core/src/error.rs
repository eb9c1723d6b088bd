use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value handed to an operation lies outside its admissible domain.
    #[error("rejected input: {0}")]
    InvalidInput(String),

    /// A configuration value is malformed or inconsistent. `key` is the
    /// dotted path of the offending entry, e.g. `experiment.epsilon_grid`.
    #[error("invalid configuration at `{key}`: {message}")]
    Config { key: String, message: String },

    /// The geometric-mean bias constant is only finite when
    /// `sigma_N_sq * ln(a) < alpha_geo * K * M`.
    #[error(
        "geometric-mean bias constant undefined: condition sigma_N_sq * ln(a) < alpha_geo * K * M \
         violated ({lhs} >= {rhs})"
    )]
    LambdaExistence { lhs: f64, rhs: f64 },

    #[error("all {0} nodes were excluded from the frame by the peak power constraint")]
    AllNodesExcluded(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn input(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    /// True for errors that stem from the experiment description rather than
    /// from something going wrong while running it.
    pub fn is_configuration(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::LambdaExistence { .. })
    }
}
