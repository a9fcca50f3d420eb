use thiserror::Error;

/// Library error type. Variants map one-to-one onto CLI exit codes
/// (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{label} violated ({name}): {detail}")]
    Assumption {
        label: &'static str,
        name: &'static str,
        detail: String,
    },

    #[error("outside convergence domain: {0}")]
    Domain(String),

    #[error("unsupported regime: {0}")]
    Unsupported(String),

    #[error("resource cap exceeded: {0}")]
    Resource(String),

    #[error("undecidable from simulated data: {0}")]
    Undecidable(String),

    #[error("capability missing: {0}")]
    Capability(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn assumption(label: &'static str, name: &'static str, detail: impl Into<String>) -> Self {
        Error::Assumption { label, name, detail: detail.into() }
    }

    /// Process exit code for this error: 1 usage, 2 assumption violation,
    /// 3 unsupported regime, 4 resource cap. Everything else is reported as 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Assumption { .. } => 2,
            Error::Unsupported(_) | Error::Capability(_) => 3,
            Error::Resource(_) => 4,
            _ => 1,
        }
    }
}

// Dotted labels follow the printed enumeration of the standing assumptions.
pub(crate) const A_ATOM: (&str, &str) = ("A.1", "A1");
pub(crate) const A_SUPERCRITICAL: (&str, &str) = ("A.2", "A3");
pub(crate) const A_MALTHUS: (&str, &str) = ("A.3", "A4");
pub(crate) const A_SECOND_MOMENT: (&str, &str) = ("A.4", "A7");
pub(crate) const A_FINITE_ROOTS: (&str, &str) = ("A.5", "A8");
