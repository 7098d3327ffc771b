use thiserror::Error;

/// Errors shared by the simulation and measurement modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("lattice needs {required} bytes but the budget is {budget} bytes")]
    Sizing { required: u64, budget: u64 },

    #[error("level {level} overflows index arithmetic for {dims} dimensions")]
    LevelRange { level: u32, dims: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("rank {rank} out of range for projections of R^{dims}")]
    Rank { rank: usize, dims: usize },

    #[error("degenerate basis: {0}")]
    DegenerateBasis(String),

    #[error("chart error: {0}")]
    Chart(String),

    #[error("requested level {requested} exceeds field resolution {available}")]
    Resolution { requested: u32, available: u32 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("regime violation: {0}")]
    Regime(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("line does not intersect the analysis window")]
    EmptyTrace,

    #[error("fiber does not intersect the analysis window")]
    EmptyFiber,

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
