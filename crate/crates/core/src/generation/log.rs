use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GenerationAttempt;
use crate::task::ModuleKind;

const ATTEMPT_LOG_SCHEMA_VERSION: u32 = 1;

/// One line of an attempt log: a generation attempt plus where it belongs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptLogLine {
    pub schema_version: u32,
    /// Program (repetition) this attempt contributed to, when several
    /// programs share a log.
    #[serde(default)]
    pub program: usize,
    /// Position of the module within its program and the program's size.
    pub stage: usize,
    pub stages: usize,
    pub kind: ModuleKind,
    pub candidate_id: String,
    #[serde(flatten)]
    pub attempt: GenerationAttempt,
}

/// Appends `attempts` to the JSONL log at `path`, creating it if needed.
pub fn write_attempt_log(
    path: &Path,
    program: usize,
    stage: usize,
    stages: usize,
    kind: ModuleKind,
    candidate_id: &str,
    attempts: &[GenerationAttempt],
) -> std::io::Result<()> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut out = BufWriter::new(file);
    for attempt in attempts {
        let line = AttemptLogLine {
            schema_version: ATTEMPT_LOG_SCHEMA_VERSION,
            program,
            stage,
            stages,
            kind,
            candidate_id: candidate_id.to_string(),
            attempt: attempt.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_attempt_log(path: &Path) -> Result<Vec<AttemptLogLine>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::{EvaluationFeedback, FeedbackPhase};

    #[test]
    fn round_trip_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let attempt = GenerationAttempt {
            index: 1,
            instruction: "do it".into(),
            output: "```python\nx\n```".into(),
            feedback: EvaluationFeedback::fail(FeedbackPhase::Syntax, "bad"),
            reflection: Some("think".into()),
            reset_after: false,
            started_ms: 5,
            elapsed_ms: 2,
        };
        write_attempt_log(&path, 0, 0, 3, ModuleKind::Modeling, "m:a", std::slice::from_ref(&attempt)).unwrap();
        write_attempt_log(&path, 1, 2, 3, ModuleKind::PostProcessing, "pp:b", std::slice::from_ref(&attempt)).unwrap();
        let lines = read_attempt_log(&path).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].program, 1);
        assert_eq!(lines[1].attempt, attempt);
    }
}
