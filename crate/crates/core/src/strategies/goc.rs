//! Graph of cues: iterative cue selection gated by a model-reported
//! confidence threshold, with the next cue chosen by vote.
//!
//! Each iteration costs two completions (cue analysis + combined gate/vote).
//! When the gate passes and names a label, that completion is also the final
//! one; otherwise a dedicated judgment completion closes the run. The loop
//! always terminates: confidence reached, pool exhausted, or `max_cues`
//! selections made.

use super::{
    parse_confidence, require_text, with_prompt_away, Prediction, StrategyContext, StrategyError,
    StrategyTrace, TraceStep, VoteRecord,
};
use crate::backend::parse_label;
use crate::cues::{Cue, CueCategory, CuePool};
use crate::data::{Demonstrations, Sample};
use crate::types::StrategyKind;

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.95;
pub const DEFAULT_MAX_CUES: usize = 10;
pub const DEFAULT_START_CUE: &str = "keywords";

#[derive(Debug, Clone, PartialEq)]
pub struct GocOptions {
    pub threshold: f64,
    pub max_cues: usize,
    /// Start cue id; defaults to "keywords" when present, else the first
    /// pool cue.
    pub start_cue: Option<String>,
    /// Category being ablated; appends the prompt-away sentence to every
    /// prompt. The pool itself must already be ablated by the caller.
    pub prompt_away: Option<CueCategory>,
}

impl Default for GocOptions {
    fn default() -> Self {
        GocOptions {
            threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            max_cues: DEFAULT_MAX_CUES,
            start_cue: None,
            prompt_away: None,
        }
    }
}

pub fn run_goc(
    sample: &Sample,
    ctx: StrategyContext<'_>,
    pool: &CuePool,
    options: &GocOptions,
    demos: &Demonstrations,
) -> Result<(Prediction, StrategyTrace), StrategyError> {
    require_text(&sample.text)?;
    if pool.is_empty() {
        return Err(StrategyError::EmptyPool);
    }
    let start = match options.start_cue.as_deref() {
        Some(id) => pool
            .get(id)
            .ok_or_else(|| StrategyError::UnknownStartCue(id.to_string()))?,
        None => pool.get(DEFAULT_START_CUE).unwrap_or(&pool.cues()[0]),
    };

    let mut trace = StrategyTrace::new(StrategyKind::Goc, &sample.id);
    trace.votes = Some(Vec::new());
    let mut selected: Vec<&Cue> = vec![start];
    let mut analyses: Vec<(String, String)> = Vec::new();
    let threshold_pct = format!("{}", options.threshold * 100.0);
    let demo_block = ctx.prompts.render_demos(&demos.pairs())?;

    loop {
        // Analyze the most recently selected cue. Demonstrations ride on the
        // first prompt of the chain only.
        let cue = *selected.last().unwrap();
        let demos_here = if analyses.is_empty() { demo_block.as_str() } else { "" };
        let analyze_prompt = with_prompt_away(
            ctx.prompts.render(
                "goc_analyze",
                &[
                    ("demos", demos_here),
                    ("cue_name", cue.display_name.as_str()),
                    ("cue_description", cue.description.as_str()),
                    ("text", sample.text.as_str()),
                ],
            )?,
            ctx.prompts,
            options.prompt_away,
        )?;
        let analysis = ctx.complete_user(&analyze_prompt)?;
        trace.steps.push(TraceStep {
            prompt: analyze_prompt,
            response: analysis.text.clone(),
            artifact: format!("analysis:{}", cue.id),
        });
        analyses.push((cue.display_name.clone(), analysis.text));

        // Combined confidence gate and next-cue vote.
        let analyses_block = analyses
            .iter()
            .map(|(name, text)| format!("- {name}: {text}"))
            .collect::<Vec<_>>()
            .join("\n");
        let remaining: Vec<&Cue> = pool
            .cues()
            .iter()
            .filter(|c| !selected.iter().any(|s| s.id == c.id))
            .collect();
        let remaining_list = format!(
            "{{{}}}",
            remaining.iter().map(|c| c.id.as_str()).collect::<Vec<_>>().join(", ")
        );
        let gate_prompt = with_prompt_away(
            ctx.prompts.render(
                "goc_gate",
                &[
                    ("analyses", analyses_block.as_str()),
                    ("threshold_pct", threshold_pct.as_str()),
                    ("remaining", remaining_list.as_str()),
                    ("text", sample.text.as_str()),
                ],
            )?,
            ctx.prompts,
            options.prompt_away,
        )?;
        let gate = ctx.complete_user(&gate_prompt)?;
        let confidence = parse_confidence(&gate.text).unwrap_or(0.0);
        trace.confidence_readings.push(confidence);

        if confidence >= options.threshold {
            // The gate prompt asks for the result when confident, so this
            // completion usually doubles as the final judgment.
            if let Some(label) = parse_label(&gate.text).label() {
                trace.steps.push(TraceStep {
                    prompt: gate_prompt,
                    response: gate.text,
                    artifact: format!("confidence={confidence} label={label}"),
                });
                return finish(sample, ctx, trace, selected, &analyses_block, Some(label))
                    .map_err(Into::into);
            }
            trace.steps.push(TraceStep {
                prompt: gate_prompt,
                response: gate.text,
                artifact: format!("confidence={confidence} label=unparseable"),
            });
            return finish(sample, ctx, trace, selected, &analyses_block, None);
        }

        let exhausted = remaining.is_empty() || selected.len() >= options.max_cues;
        if exhausted {
            trace.steps.push(TraceStep {
                prompt: gate_prompt,
                response: gate.text,
                artifact: format!("confidence={confidence} exhausted"),
            });
            return finish(sample, ctx, trace, selected, &analyses_block, None);
        }

        // Resolve the vote; out-of-list answers map to the first unused cue
        // in pool order and flag the trace.
        let voted = find_cue_mention(&gate.text, &remaining);
        let (next, remapped) = match voted {
            Some(cue) => (cue, false),
            None => (remaining[0], true),
        };
        trace.steps.push(TraceStep {
            prompt: gate_prompt,
            response: gate.text,
            artifact: format!("confidence={confidence} vote={}", next.id),
        });
        trace.votes.as_mut().unwrap().push(VoteRecord {
            voted: voted.map(|c| c.id.clone()),
            resolved: next.id.clone(),
            remapped,
        });
        if remapped {
            trace.vote_remapped = true;
        }
        selected.push(next);
    }
}

fn finish(
    sample: &Sample,
    ctx: StrategyContext<'_>,
    mut trace: StrategyTrace,
    selected: Vec<&Cue>,
    analyses_block: &str,
    gate_label: Option<crate::types::Label>,
) -> Result<(Prediction, StrategyTrace), StrategyError> {
    trace.selected_cues = selected.iter().map(|c| c.id.clone()).collect();
    let (label, fallback) = match gate_label {
        Some(label) => (label, false),
        None => {
            let final_prompt = ctx.prompts.render(
                "goc_final",
                &[("analyses", analyses_block), ("text", sample.text.as_str())],
            )?;
            ctx.complete_label(&final_prompt, &mut trace.steps)?
        }
    };
    trace.unparseable = fallback;
    let prediction = Prediction {
        sample_id: sample.id.clone(),
        strategy: StrategyKind::Goc,
        label,
        unparseable_fallback: fallback,
    };
    Ok((prediction, trace))
}

/// Finds the earliest whole-word mention of any candidate cue (by id or
/// display name, case-insensitive).
fn find_cue_mention<'a>(text: &str, candidates: &[&'a Cue]) -> Option<&'a Cue> {
    let haystack = text.to_ascii_lowercase();
    let mut best: Option<(usize, &Cue)> = None;
    for cue in candidates {
        for needle in [cue.id.as_str(), cue.display_name.as_str()] {
            if let Some(pos) = find_word(&haystack, &needle.to_ascii_lowercase()) {
                if best.map_or(true, |(b, _)| pos < b) {
                    best = Some((pos, cue));
                }
            }
        }
    }
    best.map(|(_, cue)| cue)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn find_word(haystack: &str, needle: &str) -> Option<usize> {
    let mut from = 0;
    while let Some(rel) = haystack[from..].find(needle) {
        let start = from + rel;
        let end = start + needle.len();
        let before_ok = haystack[..start].chars().next_back().map_or(true, |c| !is_word_char(c));
        let after_ok = haystack[end..].chars().next().map_or(true, |c| !is_word_char(c));
        if before_ok && after_ok {
            return Some(start);
        }
        from = start + 1;
    }
    None
}
