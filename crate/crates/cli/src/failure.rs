//! Errors that end a command, split by exit status.

use std::fmt;

use tbasic_core::Error as CoreError;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_STAGE: u8 = 3;

#[derive(Debug)]
pub enum Failure {
    /// A missing or malformed input file, or a bad flag or config value.
    Input(anyhow::Error),
    /// A stage ran on valid inputs and could not produce its output.
    Stage {
        stage: String,
        source: anyhow::Error,
    },
}

pub type Outcome<T> = Result<T, Failure>;

impl Failure {
    pub fn input(msg: impl fmt::Display) -> Self {
        Failure::Input(anyhow::anyhow!("{msg}"))
    }

    pub fn stage(stage: &str, msg: impl fmt::Display) -> Self {
        Failure::Stage {
            stage: stage.to_owned(),
            source: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => EXIT_INPUT,
            Failure::Stage { .. } => EXIT_STAGE,
        }
    }

    /// Sorts a core error raised while running `stage`.
    pub fn from_core(stage: &str, e: CoreError) -> Self {
        match e {
            CoreError::Io { .. }
            | CoreError::Malformed { .. }
            | CoreError::Json(_)
            | CoreError::Config(_)
            | CoreError::EmptyPeriod { .. }
            | CoreError::BinWidth(_)
            | CoreError::UnknownSeed(_) => {
                Failure::Input(anyhow::Error::new(e).context(format!("stage {stage}")))
            }
            other => Failure::Stage {
                stage: stage.to_owned(),
                source: other.into(),
            },
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(e) => write!(f, "input error: {e:#}"),
            Failure::Stage { stage, source } => write!(f, "stage {stage} failed: {source:#}"),
        }
    }
}

impl std::error::Error for Failure {}

pub trait InStage<T> {
    fn in_stage(self, stage: &str) -> Outcome<T>;
}

impl<T> InStage<T> for Result<T, CoreError> {
    fn in_stage(self, stage: &str) -> Outcome<T> {
        self.map_err(|e| Failure::from_core(stage, e))
    }
}

/// Fails with an input error naming `path` unless it exists.
pub fn require(path: &std::path::Path) -> Outcome<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::input(format!("{} does not exist", path.display())))
    }
}
