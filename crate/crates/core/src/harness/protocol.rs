use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::task::Modality;

const CV: &str = include_str!("../../protocols/cv.json");
const NLP: &str = include_str!("../../protocols/nlp.json");
const TABULAR: &str = include_str!("../../protocols/tabular.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Detail {
    /// Dimension meanings, sizes, ranges and isomorphic groups.
    Full,
    /// Array dimensionality only.
    RankOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Inputs,
    Outputs,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Inputs => "inputs",
            Side::Outputs => "outputs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerSide<T> {
    pub inputs: T,
    pub outputs: T,
}

impl<T: Copy> PerSide<T> {
    pub fn get(&self, side: Side) -> T {
        match side {
            Side::Inputs => self.inputs,
            Side::Outputs => self.outputs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequiredAxis {
    pub side: Side,
    pub meaning: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

/// Domain-level rules every plan and dataset of a modality must satisfy.
/// Shipped as JSON rule files so new domains are data, not code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgenitorProtocol {
    pub domain: Modality,
    pub detail: Detail,
    #[serde(default)]
    pub note: String,
    /// Inclusive [min, max] number of tensor types per side.
    pub tensor_count: PerSide<[usize; 2]>,
    /// Inclusive [min, max] rank of every tensor per side.
    pub rank: PerSide<[usize; 2]>,
    /// Meaning of the first axis of every tensor.
    pub leading_axis: String,
    #[serde(default)]
    pub required_axes: Vec<RequiredAxis>,
    /// Canonical meaning -> accepted spellings.
    #[serde(default)]
    pub aliases: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("protocol file {path}: {message}")]
    Load { path: String, message: String },
}

/// Lowercase, trims, and folds `_`/`-` runs into single spaces.
fn normalize(meaning: &str) -> String {
    meaning
        .to_ascii_lowercase()
        .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

impl ProgenitorProtocol {
    pub fn builtin(domain: Modality) -> Self {
        let text = match domain {
            Modality::Cv => CV,
            Modality::Nlp => NLP,
            Modality::Tabular => TABULAR,
        };
        serde_json::from_str(text).expect("bundled protocol parses")
    }

    pub fn load(path: &Path) -> Result<Self, ProtocolError> {
        let err = |message: String| ProtocolError::Load {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }

    /// Canonical name of a dimension meaning, resolving aliases.
    pub fn canonical(&self, meaning: &str) -> String {
        let norm = normalize(meaning);
        for axis in &self.required_axes {
            if normalize(&axis.meaning) == norm || axis.aliases.iter().any(|a| normalize(a) == norm) {
                return normalize(&axis.meaning);
            }
        }
        for (name, aliases) in &self.aliases {
            if normalize(name) == norm || aliases.iter().any(|a| normalize(a) == norm) {
                return normalize(name);
            }
        }
        norm
    }

    /// Rule text shown to the backend when it devises a plan.
    pub fn describe(&self) -> String {
        let mut out = format!("Domain: {}\n", self.domain);
        if !self.note.is_empty() {
            out.push_str(&self.note);
            out.push('\n');
        }
        for side in [Side::Inputs, Side::Outputs] {
            let [lo, hi] = self.tensor_count.get(side);
            let [rlo, rhi] = self.rank.get(side);
            out.push_str(&format!(
                "- {}: {lo} to {hi} tensor type(s), each of rank {rlo} to {rhi}\n",
                side.as_str()
            ));
        }
        match self.detail {
            Detail::RankOnly => out.push_str(
                "- specify only the dimensionality (rank) of each array; leave dims and isomorphic empty\n",
            ),
            Detail::Full => {
                out.push_str(&format!(
                    "- the first dimension of every tensor has meaning \"{}\"\n",
                    self.leading_axis
                ));
                for axis in &self.required_axes {
                    out.push_str(&format!(
                        "- at least one {} tensor has a dimension with meaning \"{}\"\n",
                        axis.side.as_str(),
                        axis.meaning
                    ));
                }
                out.push_str("- dimension meanings are unique within a tensor\n");
                out.push_str("- isomorphic groups name existing tensors and dimension meanings\n");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_protocols_load() {
        for m in [Modality::Cv, Modality::Nlp, Modality::Tabular] {
            assert_eq!(ProgenitorProtocol::builtin(m).domain, m);
        }
        assert_eq!(ProgenitorProtocol::builtin(Modality::Tabular).detail, Detail::RankOnly);
    }

    #[test]
    fn aliases_resolve() {
        let cv = ProgenitorProtocol::builtin(Modality::Cv);
        assert_eq!(cv.canonical("Image_Height"), "height");
        assert_eq!(cv.canonical("channels"), "channel");
        assert_eq!(cv.canonical("Batch Size"), "batch");
        assert_eq!(cv.canonical("depth"), "depth");
    }

    #[test]
    fn description_names_required_axes() {
        let text = ProgenitorProtocol::builtin(Modality::Cv).describe();
        assert!(text.contains("\"height\"") && text.contains("\"width\""));
    }
}
