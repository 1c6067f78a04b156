use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}{}: {source}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Json {
        path: PathBuf,
        line: Option<usize>,
        source: serde_json::Error,
    },
    #[error("{}: {message}", path.display())]
    InFile { path: PathBuf, message: String },
    #[error("input not found: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{0}")]
    Format(String),
    #[error("config: {0}")]
    Config(String),
    #[error("fraction {0} is outside (0, 1]")]
    FractionOutOfRange(f64),
    #[error(transparent)]
    Metrics(#[from] rex_forge_core::metrics::MetricsError),
    #[error(transparent)]
    Decoder(#[from] rex_forge_core::decoder::DecoderError),
}

impl ForgeError {
    /// Attaches the file a format error came from.
    pub fn in_file(self, path: &Path) -> Self {
        match self {
            ForgeError::Format(message) => ForgeError::InFile {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        }
    }
}
