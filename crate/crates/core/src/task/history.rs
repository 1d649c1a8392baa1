use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Direction, MetricSpec, Solution};
use crate::search::Budget;

pub const HISTORY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Evaluated,
    /// Stopped before completing its budget; carries no score.
    Pruned,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRecord {
    pub solution: Solution,
    #[serde(default)]
    pub score: Option<f64>,
    /// Budget consumed by the evaluation.
    pub budget: Budget,
    pub wall_time: f64,
    pub status: RecordStatus,
}

impl OptimizationRecord {
    /// Score present iff status is `evaluated`, and the score is finite.
    pub fn is_consistent(&self) -> bool {
        match (self.status, self.score) {
            (RecordStatus::Evaluated, Some(s)) => s.is_finite(),
            (RecordStatus::Evaluated, None) => false,
            (_, Some(_)) => false,
            (_, None) => true,
        }
    }
}

/// Run-level facts every history file carries in its first line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryHeader {
    pub metric: MetricSpec,
    pub strategy: String,
    pub seed: u64,
    #[serde(default)]
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationHistory {
    pub header: HistoryHeader,
    pub records: Vec<OptimizationRecord>,
}

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("history i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("record violates score/status invariant")]
    Inconsistent,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Line {
    Header {
        schema_version: u32,
        #[serde(flatten)]
        header: HistoryHeader,
    },
    Record {
        schema_version: u32,
        #[serde(flatten)]
        record: OptimizationRecord,
    },
}

fn header_line(header: &HistoryHeader) -> String {
    serde_json::to_string(&Line::Header {
        schema_version: HISTORY_SCHEMA_VERSION,
        header: header.clone(),
    })
    .expect("header serializes")
}

fn record_line(record: &OptimizationRecord) -> String {
    serde_json::to_string(&Line::Record {
        schema_version: HISTORY_SCHEMA_VERSION,
        record: record.clone(),
    })
    .expect("record serializes")
}

impl OptimizationHistory {
    pub fn new(header: HistoryHeader) -> Self {
        Self {
            header,
            records: Vec::new(),
        }
    }

    pub fn direction(&self) -> Direction {
        self.header.metric.direction
    }

    pub fn push(&mut self, record: OptimizationRecord) -> Result<(), HistoryError> {
        if !record.is_consistent() {
            return Err(HistoryError::Inconsistent);
        }
        self.records.push(record);
        Ok(())
    }

    /// Line-delimited form: one header line, then one line per record.
    pub fn to_jsonl(&self) -> String {
        let mut out = header_line(&self.header);
        out.push('\n');
        for record in &self.records {
            out.push_str(&record_line(record));
            out.push('\n');
        }
        out
    }

    pub fn persist(&self, path: &Path) -> Result<(), HistoryError> {
        std::fs::write(path, self.to_jsonl()).map_err(|source| HistoryError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, HistoryError> {
        let corrupt = |line: usize, message: String| HistoryError::Corrupt {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut header = None;
        let mut records = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let line: Line =
                serde_json::from_str(raw).map_err(|e| corrupt(lineno, e.to_string()))?;
            match line {
                Line::Header {
                    schema_version,
                    header: h,
                } => {
                    if schema_version != HISTORY_SCHEMA_VERSION {
                        return Err(corrupt(
                            lineno,
                            format!("unsupported schema_version {schema_version}"),
                        ));
                    }
                    if header.is_some() || !records.is_empty() {
                        return Err(corrupt(lineno, "header must be the first line".into()));
                    }
                    header = Some(h);
                }
                Line::Record {
                    schema_version,
                    record,
                } => {
                    if schema_version != HISTORY_SCHEMA_VERSION {
                        return Err(corrupt(
                            lineno,
                            format!("unsupported schema_version {schema_version}"),
                        ));
                    }
                    if header.is_none() {
                        return Err(corrupt(lineno, "record before header".into()));
                    }
                    if !record.is_consistent() {
                        return Err(corrupt(
                            lineno,
                            "score must be present iff status is evaluated".into(),
                        ));
                    }
                    records.push(record);
                }
            }
        }
        let header = header.ok_or_else(|| corrupt(1, "missing header line".into()))?;
        Ok(Self { header, records })
    }

    pub fn load(path: &Path) -> Result<Self, HistoryError> {
        let text = std::fs::read_to_string(path).map_err(|source| HistoryError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }
}

/// Append-only history backed by a file. Appends are serialized behind a
/// lock and flushed per line, so a crash leaves a readable prefix.
pub struct HistoryWriter {
    path: PathBuf,
    inner: Mutex<(BufWriter<File>, OptimizationHistory)>,
}

impl HistoryWriter {
    pub fn create(path: &Path, header: HistoryHeader) -> Result<Self, HistoryError> {
        let io = |source| HistoryError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(io)?;
        let mut writer = BufWriter::new(file);
        writeln!(writer, "{}", header_line(&header)).map_err(io)?;
        writer.flush().map_err(io)?;
        Ok(Self {
            path: path.to_path_buf(),
            inner: Mutex::new((writer, OptimizationHistory::new(header))),
        })
    }

    pub fn append(&self, record: OptimizationRecord) -> Result<(), HistoryError> {
        let mut guard = self.inner.lock().expect("history lock");
        let (writer, history) = &mut *guard;
        if !record.is_consistent() {
            return Err(HistoryError::Inconsistent);
        }
        let io = |source| HistoryError::Io {
            path: self.path.clone(),
            source,
        };
        writeln!(writer, "{}", record_line(&record)).map_err(io)?;
        writer.flush().map_err(io)?;
        history.records.push(record);
        Ok(())
    }

    /// Consistent copy of everything appended so far.
    pub fn snapshot(&self) -> OptimizationHistory {
        self.inner.lock().expect("history lock").1.clone()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
