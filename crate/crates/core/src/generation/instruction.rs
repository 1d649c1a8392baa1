use super::{GenerationAttempt, ModuleSpec};
use crate::templates;

/// Diagnostic attached to a reply that carried no code block.
pub const NO_CODE_DIAGNOSTIC: &str = "the reply contained no ```python fenced code block";

/// Longest diagnostics excerpt fed back to the backend. Tracebacks put the
/// useful part at the end, so the tail is kept.
const FEEDBACK_CHARS: usize = 6000;

/// Code from the first ```python (or ```py) fenced block, falling back to
/// the first untagged fence. `None` when the reply has no such block.
pub fn extract_code(reply: &str) -> Option<String> {
    let mut untagged = None;
    let mut rest = reply;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let Some(eol) = after.find('\n') else { break };
        let tag = after[..eol].trim().to_ascii_lowercase();
        let body = &after[eol + 1..];
        let Some(close) = body.find("```") else { break };
        let code = body[..close].trim_end().to_string();
        match tag.as_str() {
            "python" | "python3" | "py" => return Some(code),
            "" if untagged.is_none() => untagged = Some(code),
            _ => {}
        }
        rest = &body[close + 3..];
    }
    untagged
}

fn tail(text: &str, limit: usize) -> &str {
    if text.len() <= limit {
        return text;
    }
    let mut start = text.len() - limit;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    &text[start..]
}

/// Instruction for the next attempt. `history` is the retained memory only:
/// empty on the first attempt and right after a memory reset, in which case
/// the initial instruction is built from the choice specification and plan.
/// Otherwise the retry carries the choice specification, the previous code,
/// the unit-test feedback, the reflection and the modification request.
pub fn construct_instruction(spec: &ModuleSpec, history: &[GenerationAttempt], reflection: &str) -> String {
    let Some(last) = history.last() else {
        return templates::render(
            templates::MODULE_INITIAL,
            &[
                ("task", &spec.task_text),
                ("kind", spec.kind.as_str()),
                ("candidate", &spec.candidate.id),
                ("choice", &spec.choice_text()),
                ("hyperparameters", &spec.hyperparameters),
                ("plan", &spec.plan),
                ("interface", templates::interface(spec.kind)),
            ],
        );
    };
    let previous = extract_code(&last.output).unwrap_or_else(|| "# (no code block in the previous reply)".into());
    let feedback = format!(
        "[{}] {}",
        last.feedback.phase.as_str(),
        tail(&last.feedback.diagnostics, FEEDBACK_CHARS)
    );
    let reflection = if reflection.trim().is_empty() {
        "(none)"
    } else {
        reflection
    };
    templates::render(
        templates::MODULE_RETRY,
        &[
            ("choice", &spec.choice_text()),
            ("previous_code", &previous),
            ("feedback", &feedback),
            ("reflection", reflection),
        ],
    )
}
