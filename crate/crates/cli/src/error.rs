use std::path::PathBuf;

use texcal_core::{Error, ErrorFamily};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    /// An input produced by an earlier command is absent.
    #[error("{what} not found at {}; run `{hint}` first", path.display())]
    Missing {
        what: &'static str,
        path: PathBuf,
        hint: String,
    },
    #[error("{} already exists; pass --force to overwrite it", .0.display())]
    Refused(PathBuf),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<CliError>,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// Process exit status; distinct per error family. Usage errors (exit 2)
    /// are reported by the argument parser.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.family() {
                ErrorFamily::Config => 3,
                ErrorFamily::Io => 4,
                ErrorFamily::Numeric => 5,
                ErrorFamily::Input => 6,
            },
            CliError::Missing { .. } => 7,
            CliError::Refused(_) => 8,
            CliError::Stage { source, .. } => source.exit_code(),
        }
    }

    pub(crate) fn in_stage(self, stage: impl Into<String>) -> Self {
        CliError::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
