use std::collections::HashSet;

use serde::Deserialize;
use thiserror::Error;

use super::space::{finetune_hyperparameters, validate_search_space};
use super::{
    CandidateMethod, HyperparameterSpec, ModuleKind, ModuleStage, SearchSpace,
    TaskClassification, TaskDescription,
};
use crate::llm::{BackendState, LlmBackend, LlmError, Session};
use crate::templates;
use crate::util::{json_block, slugify};

/// Re-prompts allowed after an unparseable or invalid search-space reply.
pub const SPACE_REPAIR_PROMPTS: usize = 2;

#[derive(Debug, Error)]
pub enum SearchSpaceError {
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("search space reply unusable after {repairs} repair prompt(s): {message}")]
    Parse {
        repairs: usize,
        message: String,
        raw: String,
    },
}

#[derive(Deserialize)]
struct SpaceReply {
    classification: TaskClassification,
    stages: Vec<StageReply>,
    #[serde(default)]
    hyperparameters: Vec<HyperparameterSpec>,
}

#[derive(Deserialize)]
struct StageReply {
    kind: ModuleKind,
    suggestions: Vec<Suggestion>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Suggestion {
    Text(String),
    Detailed {
        description: String,
        #[serde(default)]
        models: Vec<String>,
    },
}

fn unique_id(kind: ModuleKind, name: &str, taken: &mut HashSet<String>) -> String {
    let mut slug = slugify(name);
    slug.truncate(48);
    let base = format!("{}:{}", kind.id_prefix(), slug.trim_end_matches('-'));
    let mut id = base.clone();
    let mut n = 2;
    while !taken.insert(id.clone()) {
        id = format!("{base}-{n}");
        n += 1;
    }
    id
}

fn build_space(reply: SpaceReply, task: &TaskDescription) -> Result<SearchSpace, String> {
    let mut classification = reply.classification;
    if let Some(hint) = task.modality_hint {
        classification.modality = hint;
    }
    let mut taken = HashSet::new();
    let stages = reply
        .stages
        .into_iter()
        .map(|stage| {
            let mut candidates = Vec::new();
            for suggestion in stage.suggestions {
                match suggestion {
                    Suggestion::Text(description) => candidates.push(CandidateMethod {
                        id: unique_id(stage.kind, &description, &mut taken),
                        kind: stage.kind,
                        description,
                    }),
                    Suggestion::Detailed {
                        description,
                        models,
                    } if models.is_empty() => candidates.push(CandidateMethod {
                        id: unique_id(stage.kind, &description, &mut taken),
                        kind: stage.kind,
                        description,
                    }),
                    Suggestion::Detailed {
                        description,
                        models,
                    } => {
                        // Each named model gets its own node in the network.
                        for model in models {
                            candidates.push(CandidateMethod {
                                id: unique_id(stage.kind, &model, &mut taken),
                                kind: stage.kind,
                                description: format!("{model} ({description})"),
                            });
                        }
                    }
                }
            }
            ModuleStage {
                kind: stage.kind,
                candidates,
            }
        })
        .collect();
    let hyperparameters = if classification.modality.is_deep_learning() {
        finetune_hyperparameters()
    } else {
        reply.hyperparameters
    };
    let space = SearchSpace {
        classification,
        stages,
        hyperparameters,
    };
    let violations = validate_search_space(&space);
    if violations.is_empty() {
        Ok(space)
    } else {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        Err(format!("invalid search space: {}", list.join("; ")))
    }
}

fn parse_reply(raw: &str, task: &TaskDescription) -> Result<SearchSpace, String> {
    let reply: SpaceReply = serde_json::from_str(json_block(raw)).map_err(|e| e.to_string())?;
    build_space(reply, task)
}

/// Asks the backend to classify the task and suggest candidates per stage.
/// Deep-learning tasks always get the fine-tuning hyperparameter block;
/// tabular tasks keep the ranges the backend suggested.
pub fn generate_search_space(
    task: &TaskDescription,
    backend: &dyn LlmBackend,
    state: &BackendState,
) -> Result<SearchSpace, SearchSpaceError> {
    let workspace = task.workspace.display().to_string();
    let hint = task
        .modality_hint
        .map(|m| format!("The task modality is {m}.\n"))
        .unwrap_or_default();
    let prompt = templates::render(
        templates::SEARCH_SPACE,
        &[
            ("task", &templates::substitute_workspace(&task.text, &workspace)),
            ("workspace", &workspace),
            ("modality_hint", &hint),
        ],
    );
    let mut session = Session::new(state.clone(), Some(templates::SYSTEM.to_string()));
    let mut raw = session.ask(backend, &prompt)?;
    let mut repairs = 0;
    loop {
        match parse_reply(&raw, task) {
            Ok(space) => return Ok(space),
            Err(message) if repairs == SPACE_REPAIR_PROMPTS => {
                return Err(SearchSpaceError::Parse {
                    repairs,
                    message,
                    raw,
                })
            }
            Err(message) => {
                repairs += 1;
                let repair = templates::render(templates::REPAIR, &[("error", &message)]);
                raw = session.ask(backend, &repair)?;
            }
        }
    }
}
