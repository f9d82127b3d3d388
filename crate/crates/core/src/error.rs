use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not a proper rotation (max deviation {0:.3e})")]
    NotARotation(f64),

    #[error("empty input")]
    EmptyInput,

    #[error("need at least 2 ensemble members, got {0}")]
    TooFewMembers(usize),

    #[error("rotation mean is not unique (singular values {0:?})")]
    DegenerateMean([f64; 3]),

    #[error("variance trace has no entry for step {0}")]
    MissingStep(usize),

    #[error("invalid variance trace: {0}")]
    InvalidTrace(String),

    #[error("{0} is undefined: denominator is zero")]
    UndefinedRate(&'static str),

    #[error("distribution has zero variance")]
    DegenerateDistribution,

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("requested {requested} points from a cloud of {available}")]
    BadCount { requested: usize, available: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("normal equations are singular")]
    RankDeficient,

    #[error("grasp node {0} lies on the anchored edge")]
    GraspOnAnchor(usize),

    #[error("action translation {0:.4} m exceeds the per-step workspace limit")]
    ActionOutOfRange(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for this error class: 2 config, 3 data, 4 numeric degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::TooFewMembers(_) => 2,
            Error::NotARotation(_)
            | Error::DegenerateMean(_)
            | Error::UndefinedRate(_)
            | Error::DegenerateDistribution
            | Error::RankDeficient => 4,
            _ => 3,
        }
    }
}
