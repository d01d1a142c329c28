// SPDX-License-Identifier: Apache-2.0

//! Append-only JSONL record of a run, flushed per record.
//!
//! Each invocation of `run` appends under a new epoch. The log alone is
//! enough to rebuild every report file.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use hdlrepair_core::engine::{AttemptOutcome, CandidateRun, DesignResult};
use hdlrepair_core::metrics::RunManifest;
use serde::{Deserialize, Serialize};

pub const LOG_FILE: &str = "outcomes.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Start {
        epoch: u32,
        manifest: RunManifest,
    },
    Attempt {
        epoch: u32,
        outcome: AttemptOutcome,
    },
    Candidate {
        epoch: u32,
        design: String,
        run: CandidateRun,
    },
    Design {
        epoch: u32,
        result: DesignResult,
    },
    Finish {
        epoch: u32,
        manifest: RunManifest,
    },
}

impl LogRecord {
    pub fn epoch(&self) -> u32 {
        match self {
            LogRecord::Start { epoch, .. }
            | LogRecord::Attempt { epoch, .. }
            | LogRecord::Candidate { epoch, .. }
            | LogRecord::Design { epoch, .. }
            | LogRecord::Finish { epoch, .. } => *epoch,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("outcome log {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("outcome log {} line {line}: {message}", .path.display())]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Everything a log says about a run.
#[derive(Debug, Default)]
pub struct LogState {
    pub last_epoch: Option<u32>,
    /// Latest manifest from a `Finish` record, else from a `Start` record.
    pub manifest: Option<RunManifest>,
    pub finished: bool,
    /// Latest result per design.
    pub designs: BTreeMap<String, DesignResult>,
    /// Latest finished candidate per (design, index).
    pub candidates: BTreeMap<String, BTreeMap<u32, CandidateRun>>,
}

impl LogState {
    fn apply(&mut self, rec: LogRecord) {
        self.last_epoch = Some(self.last_epoch.map_or(rec.epoch(), |e| e.max(rec.epoch())));
        match rec {
            LogRecord::Start { manifest, .. } => {
                self.manifest = Some(manifest);
                self.finished = false;
            }
            LogRecord::Attempt { .. } => {}
            LogRecord::Candidate { design, run, .. } => {
                self.candidates.entry(design).or_default().insert(run.candidate, run);
            }
            LogRecord::Design { result, .. } => {
                self.designs.insert(result.design.clone(), result);
            }
            LogRecord::Finish { manifest, .. } => {
                self.manifest = Some(manifest);
                self.finished = true;
            }
        }
    }
}

/// Parse a log strictly: every line must be a complete record.
pub fn read_log(path: &Path) -> Result<LogState, LogError> {
    let text = fs::read_to_string(path).map_err(|source| LogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(path, &text, false).map(|(state, _)| state)
}

/// Parse leniently for resumption: a torn final line (no newline) is
/// dropped. Returns the state and the byte length of the intact prefix.
pub fn read_log_for_resume(path: &Path) -> Result<(LogState, usize), LogError> {
    let text = fs::read_to_string(path).map_err(|source| LogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(path, &text, true)
}

fn parse(path: &Path, text: &str, tolerate_tail: bool) -> Result<(LogState, usize), LogError> {
    let corrupt = |line: usize, message: String| LogError::Corrupt {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut state = LogState::default();
    let mut intact = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        if !line.ends_with('\n') {
            if tolerate_tail {
                break;
            }
            return Err(corrupt(i + 1, "truncated record".into()));
        }
        if line.trim().is_empty() {
            intact += line.len();
            continue;
        }
        let rec: LogRecord = serde_json::from_str(line).map_err(|e| corrupt(i + 1, e.to_string()))?;
        state.apply(rec);
        intact += line.len();
    }
    Ok((state, intact))
}

/// Appends records, one flushed line each.
pub struct LogWriter {
    path: PathBuf,
    file: Mutex<File>,
}

impl LogWriter {
    /// Open for appending, cutting the file back to `keep` bytes first.
    pub fn open(path: &Path, keep: Option<usize>) -> Result<Self, LogError> {
        let io = |source| LogError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        if let Some(len) = keep {
            file.set_len(len as u64).map_err(io)?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn append(&self, rec: &LogRecord) -> Result<(), LogError> {
        let mut line = serde_json::to_string(rec).expect("log record serializes");
        line.push('\n');
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(line.as_bytes())
            .and_then(|()| f.flush())
            .map_err(|source| LogError::Io {
                path: self.path.clone(),
                source,
            })
    }
}
