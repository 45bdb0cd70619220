//! IO and generic chain-of-thought baselines.

use super::{require_text, Prediction, StrategyContext, StrategyError, StrategyTrace, TraceStep};
use crate::data::{Demonstrations, Sample};
use crate::types::StrategyKind;

/// Single completion asking directly for the label.
pub fn run_io(
    sample: &Sample,
    ctx: StrategyContext<'_>,
    demos: &Demonstrations,
) -> Result<(Prediction, StrategyTrace), StrategyError> {
    require_text(&sample.text)?;
    let demo_block = ctx.prompts.render_demos(&demos.pairs())?;
    let prompt = ctx
        .prompts
        .render("io", &[("demos", demo_block.as_str()), ("text", sample.text.as_str())])?;
    let mut trace = StrategyTrace::new(StrategyKind::Io, &sample.id);
    let (label, fallback) = ctx.complete_label(&prompt, &mut trace.steps)?;
    trace.unparseable = fallback;
    let prediction = Prediction {
        sample_id: sample.id.clone(),
        strategy: StrategyKind::Io,
        label,
        unparseable_fallback: fallback,
    };
    Ok((prediction, trace))
}

/// Two-turn reason-then-answer exchange.
pub fn run_cot(
    sample: &Sample,
    ctx: StrategyContext<'_>,
    demos: &Demonstrations,
) -> Result<(Prediction, StrategyTrace), StrategyError> {
    require_text(&sample.text)?;
    let demo_block = ctx.prompts.render_demos(&demos.pairs())?;
    let reason_prompt = ctx.prompts.render(
        "cot_reason",
        &[("demos", demo_block.as_str()), ("text", sample.text.as_str())],
    )?;
    let mut trace = StrategyTrace::new(StrategyKind::Cot, &sample.id);
    let reasoning = ctx.complete_user(&reason_prompt)?;
    trace.steps.push(TraceStep {
        prompt: reason_prompt,
        response: reasoning.text.clone(),
        artifact: "reasoning".to_string(),
    });

    let answer_prompt = ctx.prompts.render(
        "cot_answer",
        &[("text", sample.text.as_str()), ("reasoning", reasoning.text.as_str())],
    )?;
    let (label, fallback) = ctx.complete_label(&answer_prompt, &mut trace.steps)?;
    trace.unparseable = fallback;
    let prediction = Prediction {
        sample_id: sample.id.clone(),
        strategy: StrategyKind::Cot,
        label,
        unparseable_fallback: fallback,
    };
    Ok((prediction, trace))
}
