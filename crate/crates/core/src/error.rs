use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("invalid period [{start}, {end})")]
    EmptyPeriod { start: i64, end: i64 },

    #[error("bin width of {0} hours does not divide a day")]
    BinWidth(u32),

    #[error("occurrence vector is empty")]
    EmptyVector,

    #[error("term is not recurrent (min occurrence is 0)")]
    NotRecurrent,

    #[error("time of day {0} is outside [0, 24)")]
    TimeOfDay(f64),

    #[error("training set contains a single class")]
    SingleClass,

    #[error("non-finite feature in row {0}")]
    NonFinite(usize),

    #[error("need at least {needed} instances, got {got}")]
    TooFewInstances { needed: usize, got: usize },

    #[error("delay scale is unidentifiable: every receiver has activity 1")]
    UnidentifiableDelay,

    #[error("no diffusion instances to calibrate on")]
    NoDiffusion,

    #[error("seed user {0:?} is not in the graph")]
    UnknownSeed(String),

    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("series too short: need {needed} points, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("reference series has zero norm")]
    ZeroReference,

    #[error("baseline error is zero")]
    ZeroBaseline,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
