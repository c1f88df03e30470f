use std::path::PathBuf;

use serde::Serialize;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] misalign_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{what}, line {line}: {message}")]
    Parse { what: &'static str, line: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("table is missing cells: {}", .0.join(", "))]
    MissingCells(Vec<String>),
    #[error("{0}")]
    Usage(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn parse(what: &'static str, line: usize, message: impl Into<String>) -> Self {
        Self::Parse { what, line, message: message.into() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Core(e) => e.kind(),
            Self::Io { .. } => "io",
            Self::Config { .. } => "config",
            Self::Parse { .. } => "parse",
            Self::Csv(_) => "csv",
            Self::Json(_) => "json",
            Self::MissingCells(_) => "missing_cells",
            Self::Usage(_) => "usage",
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Payload<'a> {
            error: &'a str,
            message: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            seed: Option<u64>,
            #[serde(skip_serializing_if = "Option::is_none")]
            missing: Option<&'a [String]>,
        }
        let seed = match self {
            Self::Core(misalign_core::Error::Run { seed, .. }) => Some(*seed),
            _ => None,
        };
        let missing = match self {
            Self::MissingCells(cells) => Some(cells.as_slice()),
            _ => None,
        };
        serde_json::to_string(&Payload { error: self.kind(), message: self.to_string(), seed, missing })
            .expect("plain struct serializes")
    }
}
