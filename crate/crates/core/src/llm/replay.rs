use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{check_request, request_digest, BackendState, LlmBackend, LlmError, Message};

pub const TRANSCRIPT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub schema_version: u32,
    pub index: usize,
    pub digest: String,
    pub response: String,
}

/// Ordered `(request digest, response)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let bad = |message: String| LlmError::Transcript {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry =
                serde_json::from_str(line).map_err(|e| bad(format!("line {}: {e}", i + 1)))?;
            if entry.schema_version != TRANSCRIPT_SCHEMA_VERSION {
                return Err(bad(format!(
                    "line {}: unsupported schema_version {}",
                    i + 1,
                    entry.schema_version
                )));
            }
            if entry.index != entries.len() {
                return Err(bad(format!(
                    "line {}: expected index {}, found {}",
                    i + 1,
                    entries.len(),
                    entry.index
                )));
            }
            entries.push(entry);
        }
        Ok(Self { entries })
    }
}

/// Forwards to an inner backend and appends each exchange to a transcript.
pub struct RecordingBackend<B> {
    inner: B,
    path: PathBuf,
    sink: Mutex<(BufWriter<File>, usize)>,
}

impl<B: LlmBackend> RecordingBackend<B> {
    pub fn create(inner: B, path: &Path) -> Result<Self, LlmError> {
        let file = File::create(path).map_err(|e| LlmError::Transcript {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(Self {
            inner,
            path: path.to_path_buf(),
            sink: Mutex::new((BufWriter::new(file), 0)),
        })
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn complete(&self, messages: &[Message], state: &BackendState) -> Result<String, LlmError> {
        check_request(messages)?;
        // Held across the inner call so transcript order equals request order.
        let mut sink = self.sink.lock().expect("transcript lock");
        let response = self.inner.complete(messages, state)?;
        let entry = TranscriptEntry {
            schema_version: TRANSCRIPT_SCHEMA_VERSION,
            index: sink.1,
            digest: request_digest(messages, state),
            response: response.clone(),
        };
        let line = serde_json::to_string(&entry).expect("entry serializes");
        let io = |e: std::io::Error| LlmError::Transcript {
            path: self.path.clone(),
            message: e.to_string(),
        };
        writeln!(sink.0, "{line}").map_err(io)?;
        sink.0.flush().map_err(io)?;
        sink.1 += 1;
        Ok(response)
    }
}

/// Serves responses from a transcript, checking each request digest in
/// order. A mismatch is fatal and names the request index.
pub struct ReplayBackend {
    transcript: Transcript,
    cursor: Mutex<usize>,
}

impl ReplayBackend {
    pub fn new(transcript: Transcript) -> Self {
        Self {
            transcript,
            cursor: Mutex::new(0),
        }
    }

    pub fn open(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::new(Transcript::load(path)?))
    }

    pub fn served(&self) -> usize {
        *self.cursor.lock().expect("cursor lock")
    }

    pub fn is_finished(&self) -> bool {
        self.served() == self.transcript.entries.len()
    }
}

impl LlmBackend for ReplayBackend {
    fn complete(&self, messages: &[Message], state: &BackendState) -> Result<String, LlmError> {
        check_request(messages)?;
        let mut cursor = self.cursor.lock().expect("cursor lock");
        let index = *cursor;
        let entry = self
            .transcript
            .entries
            .get(index)
            .ok_or(LlmError::TranscriptExhausted { index })?;
        let actual = request_digest(messages, state);
        if actual != entry.digest {
            return Err(LlmError::ReplayDivergence {
                index,
                recorded: entry.digest.clone(),
                actual,
            });
        }
        *cursor += 1;
        Ok(entry.response.clone())
    }
}
