//! The prompting strategies: IO, CoT, CoC, GoC and BoC.
//!
//! Each run is a pure orchestration over the backend and returns the final
//! [`Prediction`] together with a complete [`StrategyTrace`] of every prompt,
//! response and intermediate artifact. ToC lives in [`crate::toc`]; it shares
//! the same trace type.

mod baselines;
mod boc;
mod coc;
mod goc;
mod voting;

pub use baselines::{run_cot, run_io};
pub use boc::{run_boc, BocOptions};
pub use coc::run_coc;
pub use goc::{run_goc, GocOptions};
pub use voting::{majority_vote, parse_confidence, sample_subsets};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    parse_label, BackendError, ChatBackend, ChatMessage, ChatRequest, ChatResponse,
};
use crate::cues::CueCategory;
use crate::prompts::{PromptError, PromptSet};
use crate::types::{Label, StrategyKind};

/// Unparseable label responses are re-queried this many times before the
/// prediction falls back to NotSarcastic.
pub const MAX_LABEL_REQUERIES: usize = 2;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("sample text is empty")]
    EmptySampleText,
    #[error("cue pool is empty")]
    EmptyPool,
    #[error("invalid subset arity q={q} for pool of {pool} cues")]
    InvalidArity { q: usize, pool: usize },
    #[error("subset count T must be at least 1")]
    InvalidSubsetCount,
    #[error("start cue {0:?} is not in the pool")]
    UnknownStartCue(String),
    #[error("majority vote over empty label list")]
    EmptyVote,
}

/// Final label for one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub strategy: StrategyKind,
    pub label: Label,
    /// True when the label is the documented NotSarcastic fallback after
    /// exhausted re-queries rather than a parsed answer.
    pub unparseable_fallback: bool,
}

/// One prompt/response exchange inside a strategy run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub prompt: String,
    pub response: String,
    /// What the step produced, e.g. `c1`, `label=Sarcastic`,
    /// `confidence=0.72 vote=topic`.
    pub artifact: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetPrediction {
    pub cues: Vec<String>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    /// Cue id named by the backend, when one could be resolved.
    pub voted: Option<String>,
    /// Cue actually selected (equals `voted` unless remapped).
    pub resolved: String,
    pub remapped: bool,
}

/// Per-category cue texts extracted for ToC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueTexts {
    pub lin: String,
    pub con: String,
    pub emo: String,
}

impl CueTexts {
    pub fn get(&self, category: CueCategory) -> &str {
        match category {
            CueCategory::Linguistic => &self.lin,
            CueCategory::Contextual => &self.con,
            CueCategory::Emotional => &self.emo,
        }
    }
}

/// Full record of one prediction: prompts, responses, cues, votes, flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyTrace {
    pub strategy: StrategyKind,
    pub sample_id: String,
    pub steps: Vec<TraceStep>,
    pub selected_cues: Vec<String>,
    pub subset_predictions: Option<Vec<SubsetPrediction>>,
    pub votes: Option<Vec<VoteRecord>>,
    pub confidence_readings: Vec<f64>,
    pub cue_texts: Option<CueTexts>,
    pub unparseable: bool,
    pub tie: bool,
    pub vote_remapped: bool,
}

impl StrategyTrace {
    pub fn new(strategy: StrategyKind, sample_id: impl Into<String>) -> Self {
        StrategyTrace {
            strategy,
            sample_id: sample_id.into(),
            steps: Vec::new(),
            selected_cues: Vec::new(),
            subset_predictions: None,
            votes: None,
            confidence_readings: Vec::new(),
            cue_texts: None,
            unparseable: false,
            tie: false,
            vote_remapped: false,
        }
    }

    /// Number of completions issued (re-queries included).
    pub fn completions(&self) -> usize {
        self.steps.len()
    }
}

/// Backend plus prompt set shared by all strategy runs.
#[derive(Clone, Copy)]
pub struct StrategyContext<'a> {
    pub backend: &'a dyn ChatBackend,
    pub prompts: &'a PromptSet,
}

impl<'a> StrategyContext<'a> {
    pub fn new(backend: &'a dyn ChatBackend, prompts: &'a PromptSet) -> Self {
        StrategyContext { backend, prompts }
    }

    pub(crate) fn complete_user(&self, prompt: &str) -> Result<ChatResponse, StrategyError> {
        let request = ChatRequest::new(
            self.backend.model_id(),
            vec![
                ChatMessage::system(self.prompts.system.clone()),
                ChatMessage::user(prompt),
            ],
        );
        Ok(self.backend.complete(&request)?)
    }

    /// Completes a label-asking prompt, re-querying with the one-word
    /// instruction up to [`MAX_LABEL_REQUERIES`] times. Falls back to
    /// NotSarcastic when nothing parses; the bool reports the fallback.
    pub(crate) fn complete_label(
        &self,
        base_prompt: &str,
        steps: &mut Vec<TraceStep>,
    ) -> Result<(Label, bool), StrategyError> {
        let requery = self.prompts.render("requery", &[])?;
        let mut prompt = base_prompt.to_string();
        for attempt in 0..=MAX_LABEL_REQUERIES {
            let response = self.complete_user(&prompt)?;
            match parse_label(&response.text).label() {
                Some(label) => {
                    steps.push(TraceStep {
                        prompt,
                        response: response.text,
                        artifact: format!("label={label}"),
                    });
                    return Ok((label, false));
                }
                None => {
                    steps.push(TraceStep {
                        prompt: prompt.clone(),
                        response: response.text,
                        artifact: "label=unparseable".to_string(),
                    });
                    if attempt < MAX_LABEL_REQUERIES {
                        // each re-query appends the instruction again, so
                        // every attempt is a distinct request
                        prompt = format!("{prompt}\n{requery}");
                    }
                }
            }
        }
        Ok((Label::NotSarcastic, true))
    }
}

pub(crate) fn require_text(text: &str) -> Result<(), StrategyError> {
    if text.trim().is_empty() {
        Err(StrategyError::EmptySampleText)
    } else {
        Ok(())
    }
}

/// Appends the prompt-away sentence when a category is ablated.
pub(crate) fn with_prompt_away(
    prompt: String,
    prompts: &PromptSet,
    removed: Option<CueCategory>,
) -> Result<String, StrategyError> {
    match removed {
        Some(category) => {
            let sentence = prompts.render_prompt_away(category)?;
            Ok(format!("{prompt}\n{sentence}"))
        }
        None => Ok(prompt),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::fixture::FixtureBackend;

    #[test]
    fn unparseable_fallback_after_three_attempts() {
        let backend = FixtureBackend::new("m");
        backend.push_script(["maybe", "hmm", "unclear"]);
        let prompts = PromptSet::bundled();
        let ctx = StrategyContext::new(&backend, &prompts);
        let mut steps = Vec::new();
        let (label, fallback) = ctx.complete_label("base prompt", &mut steps).unwrap();
        assert_eq!(label, Label::NotSarcastic);
        assert!(fallback);
        assert_eq!(steps.len(), 3);
        assert_eq!(backend.chat_calls(), 3);
        // second attempt appends the one-word instruction once, third twice
        assert_eq!(steps[1].prompt.matches("exactly one word").count(), 1);
        assert_eq!(steps[2].prompt.matches("exactly one word").count(), 2);
    }

    #[test]
    fn first_parseable_answer_wins() {
        let backend = FixtureBackend::new("m");
        backend.push_script(["hard to say", "it is Sarcastic"]);
        let prompts = PromptSet::bundled();
        let ctx = StrategyContext::new(&backend, &prompts);
        let mut steps = Vec::new();
        let (label, fallback) = ctx.complete_label("p", &mut steps).unwrap();
        assert_eq!(label, Label::Sarcastic);
        assert!(!fallback);
        assert_eq!(steps.len(), 2);
    }
}
