use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on shapes, sizes or configuration was violated.
    #[error("{module}: {message}")]
    Contract {
        module: &'static str,
        message: String,
    },
    /// NaN or infinity reached an operator that requires finite input.
    #[error("{module}: non-finite value in {what}")]
    NonFinite { module: &'static str, what: String },
    #[error("metric: {reason} (max pairwise distance {max_distance:.3} m)")]
    Mining { reason: String, max_distance: f64 },
    #[error("metric: non-finite loss at step {step} (parameter `{path}`)")]
    Diverged { step: usize, path: String },
    #[error("{module}: format error: {message}")]
    Format {
        module: &'static str,
        message: String,
    },
    #[error("{module}: i/o error on {path}: {source}")]
    Io {
        module: &'static str,
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn contract(module: &'static str, message: impl Into<String>) -> Self {
        Error::Contract {
            module,
            message: message.into(),
        }
    }

    pub fn format(module: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            module,
            message: message.into(),
        }
    }

    pub fn io(module: &'static str, path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            module,
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

macro_rules! ensure {
    ($cond:expr, $module:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::contract($module, format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
