use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),

    #[error("{} already exists; pass --force to overwrite", .0.display())]
    Exists(PathBuf),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Core(#[from] csbm_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn parse(file: &std::path::Path, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            file: file.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    /// Process exit status: 1 usage, 3 numerical failure, 2 anything else
    /// about the data or configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}
