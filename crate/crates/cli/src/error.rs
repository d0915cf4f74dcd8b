use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),

    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] utraj_core::Error),

    #[error(transparent)]
    Model(#[from] utraj_model::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// 2 for usage, configuration and input problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        use utraj_core::Error as C;
        let numeric_core = |e: &C| matches!(e, C::NotPositiveDefinite { .. } | C::SingularInnovationCovariance { .. } | C::AgentsCoincident { .. });
        match self {
            Error::Model(utraj_model::Error::NonFiniteLoss { .. }) => 3,
            Error::Model(utraj_model::Error::Core(e)) | Error::Core(e) if numeric_core(e) => 3,
            _ => 2,
        }
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
