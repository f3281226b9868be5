use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("subdomain not aligned with grid panels: {0}")]
    Alignment(String),
    #[error("domain mismatch: {0}")]
    Domain(String),
    #[error("singular value gap error: {0}")]
    Gap(String),
    #[error("depth error: {0}")]
    Depth(String),
    #[error("unstable time step: {0}")]
    Stability(String),
    #[error("coefficient is not hyperbolic: {0}")]
    Hyperbolicity(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("query budget exceeded: {spent} spent, cap {cap}")]
    Budget { spent: u64, cap: u64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Budget { .. } => 3,
            Error::Numerical(_) | Error::Gap(_) => 4,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Alignment(_) => "alignment",
            Error::Domain(_) => "domain",
            Error::Gap(_) => "gap",
            Error::Depth(_) => "depth",
            Error::Stability(_) => "stability",
            Error::Hyperbolicity(_) => "hyperbolicity",
            Error::Numerical(_) => "numerical",
            Error::Budget { .. } => "budget",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
