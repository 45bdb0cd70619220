//! Cue-based sarcasm detection over pluggable LLM backends.
//!
//! Four cue-driven strategies — chain of contradiction (CoC), graph of cues
//! (GoC), bagging of cues (BoC) and tensor of cues (ToC) — plus IO and
//! chain-of-thought baselines, a deterministic fixture backend for offline
//! runs, and an evaluation harness with repeated runs, significance testing,
//! error analysis and the prompt-away ablation protocol.

pub mod backend;
pub mod cues;
pub mod data;
pub mod eval;
pub mod metrics;
pub mod parallel;
pub mod prompts;
pub mod strategies;
pub mod toc;
pub mod types;

pub use backend::{ChatBackend, ChatRequest, ChatResponse};
pub use cues::{Cue, CueCategory, CuePool};
pub use data::{Dataset, Sample, Split};
pub use eval::{evaluate, run_ablation, EvalConfig, MetricsReport};
pub use prompts::PromptSet;
pub use strategies::{Prediction, StrategyContext, StrategyTrace};
pub use types::{Label, StrategyKind};
