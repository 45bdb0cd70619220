//! The fixed cue vocabulary every strategy draws from.
//!
//! Ten cues in three categories: four linguistic, three contextual, three
//! emotional. Definitions live in a bundled JSON resource so prompt wording
//! can be tweaked without recompiling; an alternative pool can be loaded
//! from a file for experimentation.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The three cue categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CueCategory {
    Linguistic,
    Contextual,
    Emotional,
}

impl CueCategory {
    pub const ALL: [CueCategory; 3] = [
        CueCategory::Linguistic,
        CueCategory::Contextual,
        CueCategory::Emotional,
    ];

    /// Lowercase adjective used inside prompts ("linguistic", ...).
    pub fn prompt_name(&self) -> &'static str {
        match self {
            CueCategory::Linguistic => "linguistic",
            CueCategory::Contextual => "contextual",
            CueCategory::Emotional => "emotional",
        }
    }
}

impl fmt::Display for CueCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prompt_name())
    }
}

impl std::str::FromStr for CueCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linguistic" | "lin" => Ok(CueCategory::Linguistic),
            "contextual" | "con" => Ok(CueCategory::Contextual),
            "emotional" | "emo" => Ok(CueCategory::Emotional),
            other => Err(format!("unknown cue category: {other}")),
        }
    }
}

/// A single named cue. The description is inserted verbatim into prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cue {
    pub id: String,
    pub category: CueCategory,
    pub display_name: String,
    pub description: String,
}

/// An ordered pool of cues with unique ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuePool {
    cues: Vec<Cue>,
}

#[derive(Debug, Error)]
pub enum CuePoolError {
    #[error("duplicate cue id: {0}")]
    DuplicateId(String),
    #[error("cue pool file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cue pool parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Deserialize)]
struct CueFile {
    #[allow(dead_code)]
    version: u32,
    cues: Vec<Cue>,
}

const BUNDLED_CUES: &str = include_str!("../resources/cues.json");

impl CuePool {
    /// The standard 10-cue pool (4 linguistic + 3 contextual + 3 emotional).
    pub fn standard() -> CuePool {
        Self::from_json(BUNDLED_CUES).expect("bundled cue resource is valid")
    }

    pub fn from_json(json: &str) -> Result<CuePool, CuePoolError> {
        let file: CueFile = serde_json::from_str(json)?;
        Self::new(file.cues)
    }

    pub fn from_path(path: &Path) -> Result<CuePool, CuePoolError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn new(cues: Vec<Cue>) -> Result<CuePool, CuePoolError> {
        let mut seen = std::collections::HashSet::new();
        for cue in &cues {
            if !seen.insert(cue.id.clone()) {
                return Err(CuePoolError::DuplicateId(cue.id.clone()));
            }
        }
        Ok(CuePool { cues })
    }

    /// Pool with every cue of `removed` dropped; order of the rest preserved.
    pub fn ablate(&self, removed: CueCategory) -> CuePool {
        CuePool {
            cues: self
                .cues
                .iter()
                .filter(|c| c.category != removed)
                .cloned()
                .collect(),
        }
    }

    pub fn cues(&self) -> &[Cue] {
        &self.cues
    }

    pub fn len(&self) -> usize {
        self.cues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cues.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Cue> {
        self.cues.iter().find(|c| c.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.cues.iter().map(|c| c.id.as_str())
    }

    pub fn of_category(&self, category: CueCategory) -> Vec<&Cue> {
        self.cues.iter().filter(|c| c.category == category).collect()
    }

    /// Display names of one category joined as "a, b and c" for prompt text.
    pub fn category_name_list(&self, category: CueCategory) -> String {
        let names: Vec<&str> = self
            .of_category(category)
            .iter()
            .map(|c| c.display_name.as_str())
            .collect();
        join_natural(&names)
    }
}

/// Joins items as "a, b and c".
pub(crate) fn join_natural(items: &[&str]) -> String {
    match items.len() {
        0 => String::new(),
        1 => items[0].to_string(),
        n => format!("{} and {}", items[..n - 1].join(", "), items[n - 1]),
    }
}
