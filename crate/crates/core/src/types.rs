//! Shared domain types: the binary sarcasm label and the strategy identifiers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Binary sarcasm label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Sarcastic,
    NotSarcastic,
}

impl Label {
    /// Canonical surface form, as used in prompts and label parsing.
    pub fn as_text(&self) -> &'static str {
        match self {
            Label::Sarcastic => "Sarcastic",
            Label::NotSarcastic => "Not Sarcastic",
        }
    }

    pub fn is_sarcastic(&self) -> bool {
        matches!(self, Label::Sarcastic)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_text())
    }
}

/// The prediction strategies exposed by the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    /// Direct input-output prompting.
    Io,
    /// Generic two-turn chain of thought.
    Cot,
    /// Chain of contradiction: surface sentiment, true intention, consistency verdict.
    Coc,
    /// Graph of cues: confidence-gated iterative cue selection.
    Goc,
    /// Bagging of cues: majority vote over random cue subsets.
    Boc,
    /// Tensor of cues: fused cue embeddings classified by a trained head.
    Toc,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Io,
        StrategyKind::Cot,
        StrategyKind::Coc,
        StrategyKind::Goc,
        StrategyKind::Boc,
        StrategyKind::Toc,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Io => "io",
            StrategyKind::Cot => "cot",
            StrategyKind::Coc => "coc",
            StrategyKind::Goc => "goc",
            StrategyKind::Boc => "boc",
            StrategyKind::Toc => "toc",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "io" => Ok(StrategyKind::Io),
            "cot" => Ok(StrategyKind::Cot),
            "coc" => Ok(StrategyKind::Coc),
            "goc" => Ok(StrategyKind::Goc),
            "boc" => Ok(StrategyKind::Boc),
            "toc" => Ok(StrategyKind::Toc),
            other => Err(format!("unknown strategy: {other}")),
        }
    }
}
