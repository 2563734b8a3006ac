//! Error types shared across the toolkit.

use std::path::PathBuf;

/// Errors produced by parsing, validation, evaluation and the experiment
/// harness. The CLI maps these onto process exit codes (see
/// [`Error::exit_code`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A line (or GeoJSON feature) that does not satisfy the format contract.
    /// `line` is 1-based; `path` is filled in when the record came from a file.
    #[error("{}line {line}: {msg}", path.as_deref().map(|p| format!("{p}: ")).unwrap_or_default())]
    MalformedRecord {
        path: Option<String>,
        line: usize,
        msg: String,
    },

    /// No requested category has any ground-truth instance.
    #[error("no ground-truth instances in any requested category")]
    NoGroundTruth,

    /// Two datasets that must cover the same images do not.
    #[error("datasets do not cover the same images: {0}")]
    DatasetMismatch(String),

    #[error("missing label file: {0}")]
    MissingLabelFile(PathBuf),

    #[error("duplicate image id: {0}")]
    DuplicateImageId(String),

    #[error("unknown category id {id} (dataset declares {known} categories)")]
    UnknownCategory { id: u32, known: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid configuration: {0}")]
    BadConfig(String),

    /// Relative delta against a zero baseline.
    #[error("relative delta is undefined for a zero baseline")]
    UndefinedDelta,

    /// An aggregate was requested over an empty delta selection.
    #[error("empty delta selection")]
    EmptySelection,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach a source path to a record-level error, if it has none yet.
    pub fn with_path(self, p: &std::path::Path) -> Self {
        match self {
            Error::MalformedRecord {
                path: None,
                line,
                msg,
            } => Error::MalformedRecord {
                path: Some(p.display().to_string()),
                line,
                msg,
            },
            other => other,
        }
    }

    /// Process exit code for the CLI: 2 for malformed input, 3 for
    /// configuration errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MalformedRecord { .. }
            | Error::DatasetMismatch(_)
            | Error::MissingLabelFile(_)
            | Error::DuplicateImageId(_)
            | Error::UnknownCategory { .. }
            | Error::NoGroundTruth
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::BadConfig(_)
            | Error::EmptyInput
            | Error::UndefinedDelta
            | Error::EmptySelection => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malformed_record_display_carries_locator() {
        let e = Error::MalformedRecord {
            path: None,
            line: 3,
            msg: "w out of range".into(),
        };
        assert_eq!(e.to_string(), "line 3: w out of range");

        let e = e.with_path(std::path::Path::new("labels/a.txt"));
        assert_eq!(e.to_string(), "labels/a.txt: line 3: w out of range");
    }

    #[test]
    fn exit_codes_split_input_vs_config() {
        assert_eq!(
            Error::MalformedRecord {
                path: None,
                line: 1,
                msg: String::new()
            }
            .exit_code(),
            2
        );
        assert_eq!(Error::BadConfig("x".into()).exit_code(), 3);
        assert_eq!(Error::EmptySelection.exit_code(), 3);
        assert_eq!(Error::DuplicateImageId("a".into()).exit_code(), 2);
    }
}
