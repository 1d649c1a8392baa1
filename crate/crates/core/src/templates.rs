//! Instruction templates shipped as data files.
//!
//! Placeholders are written `{{name}}`; [`render`] substitutes them and
//! panics in debug builds if one is left unfilled.

use crate::task::ModuleKind;

pub const SYSTEM: &str = include_str!("../templates/system.txt");
pub const SEARCH_SPACE: &str = include_str!("../templates/search_space.txt");
pub const REPAIR: &str = include_str!("../templates/repair.txt");
pub const PLAN: &str = include_str!("../templates/plan.txt");
pub const PLAN_VIOLATIONS: &str = include_str!("../templates/plan_violations.txt");
pub const SYNTHETIC: &str = include_str!("../templates/synthetic.txt");
pub const MODULE_INITIAL: &str = include_str!("../templates/module_initial.txt");
pub const MODULE_RETRY: &str = include_str!("../templates/module_retry.txt");
pub const REFLECTION: &str = include_str!("../templates/reflection.txt");

const INTERFACE_DATA_PREPARATION: &str =
    include_str!("../templates/interface_data_preparation.txt");
const INTERFACE_MODELING: &str = include_str!("../templates/interface_modeling.txt");
const INTERFACE_POST_PROCESSING: &str = include_str!("../templates/interface_post_processing.txt");

pub fn interface(kind: ModuleKind) -> &'static str {
    match kind {
        ModuleKind::DataPreparation => INTERFACE_DATA_PREPARATION,
        ModuleKind::Modeling => INTERFACE_MODELING,
        ModuleKind::PostProcessing => INTERFACE_POST_PROCESSING,
    }
}

/// Substitutes every `{{key}}` with its value. Values are inserted
/// verbatim and never re-scanned.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let key = &after[..end];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        debug_assert!(false, "unfilled placeholder {{{{{key}}}}}");
                        out.push_str(&rest[start..start + 2 + end + 2]);
                    }
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Substitutes the `{workspace}` placeholder in a task description.
pub fn substitute_workspace(text: &str, workspace: &str) -> String {
    text.replace("{workspace}", workspace)
}
