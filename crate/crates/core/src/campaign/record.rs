use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One line of `run.jsonl`.
///
/// Skipped iterations (scorer failure) have `score` and `reward` null,
/// `bypass` false and the failure text in `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub i: u64,
    pub prompt: String,
    pub score: Option<f64>,
    pub reward: Option<f64>,
    pub bypass: bool,
    pub ts: String,
    pub scorer_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl IterationRecord {
    pub fn scored(
        i: u64,
        prompt: String,
        score: f64,
        reward: f64,
        bypass: bool,
        ts: String,
        scorer_id: String,
    ) -> Self {
        IterationRecord {
            i,
            prompt,
            score: Some(score),
            reward: Some(reward),
            bypass,
            ts,
            scorer_id,
            error: None,
        }
    }

    pub fn skipped(i: u64, prompt: String, error: String, ts: String, scorer_id: String) -> Self {
        IterationRecord {
            i,
            prompt,
            score: None,
            reward: None,
            bypass: false,
            ts,
            scorer_id,
            error: Some(error),
        }
    }

    pub fn is_skipped(&self) -> bool {
        self.score.is_none()
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Source of the `ts` field.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timestamps {
    /// UTC wall clock, RFC 3339 with milliseconds.
    #[default]
    Wall,
    /// Constant epoch timestamp so logs of identical runs are byte-identical.
    Frozen,
}

impl Timestamps {
    pub fn now(&self) -> String {
        match self {
            Timestamps::Wall => chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            Timestamps::Frozen => "1970-01-01T00:00:00.000Z".to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LogError + '_ {
    move |source| LogError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses JSONL records; blank lines are ignored, anything else malformed
/// is an error carrying its 1-based line number.
pub fn parse_log(text: &str, path: &Path) -> Result<Vec<IterationRecord>, LogError> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(n, line)| {
            serde_json::from_str(line).map_err(|e| LogError::Malformed {
                path: path.display().to_string(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_log(path: &Path) -> Result<Vec<IterationRecord>, LogError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_log(&text, path)
}

/// Append-only writer; each record is flushed as it is written.
pub struct LogWriter {
    file: File,
}

impl LogWriter {
    pub fn append(path: &Path) -> Result<Self, LogError> {
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
        Ok(LogWriter { file })
    }

    pub fn write(&mut self, record: &IterationRecord) -> io::Result<()> {
        writeln!(self.file, "{}", record.to_line())?;
        self.file.flush()
    }
}

/// Loads a log for resuming. A final line without its newline is the
/// remnant of an interrupted write and is cut off; every complete line is
/// kept.
pub(crate) fn load_for_resume(path: &Path) -> Result<Vec<IterationRecord>, LogError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    if !text.is_empty() && !text.ends_with('\n') {
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        log::warn!("{}: dropping incomplete trailing record", path.display());
        let file = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        file.set_len(keep as u64).map_err(io_err(path))?;
        return parse_log(&text[..keep], path);
    }
    parse_log(&text, path)
}
