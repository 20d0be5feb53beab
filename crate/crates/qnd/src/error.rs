use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] qnd_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}: checksum mismatch")]
    Checksum(PathBuf),

    #[error("{path}: {msg}")]
    CacheFormat { path: PathBuf, msg: String },

    #[error("no decomposition cached for N={n} at {path} (pass --build-cache or run `qnd cache build`)")]
    MissingCache { n: usize, path: PathBuf },

    #[error("unknown figure {0}; available: 2, 3, 5, 6, 7, 8, 9, 10")]
    InvalidFigure(u32),

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
