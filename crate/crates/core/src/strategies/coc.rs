//! Chain of contradiction: surface sentiment, true intention, consistency
//! verdict — exactly three sequential completions.

use super::{require_text, Prediction, StrategyContext, StrategyError, StrategyTrace, TraceStep};
use crate::data::{Demonstrations, Sample};
use crate::types::StrategyKind;

pub fn run_coc(
    sample: &Sample,
    ctx: StrategyContext<'_>,
    demos: &Demonstrations,
) -> Result<(Prediction, StrategyTrace), StrategyError> {
    require_text(&sample.text)?;
    let demo_block = ctx.prompts.render_demos(&demos.pairs())?;
    let mut trace = StrategyTrace::new(StrategyKind::Coc, &sample.id);

    // Step 1: surface sentiment.
    let p1 = ctx.prompts.render(
        "coc_step1",
        &[("demos", demo_block.as_str()), ("text", sample.text.as_str())],
    )?;
    let c1 = ctx.complete_user(&p1)?;
    trace.steps.push(TraceStep {
        prompt: p1,
        response: c1.text.clone(),
        artifact: "c1".to_string(),
    });

    // Step 2: true intention, conditioned on c1.
    let p2 = ctx.prompts.render(
        "coc_step2",
        &[("text", sample.text.as_str()), ("c1", c1.text.as_str())],
    )?;
    let c2 = ctx.complete_user(&p2)?;
    trace.steps.push(TraceStep {
        prompt: p2,
        response: c2.text.clone(),
        artifact: "c2".to_string(),
    });

    // Step 3: consistency verdict.
    let p3 = ctx.prompts.render(
        "coc_step3",
        &[
            ("text", sample.text.as_str()),
            ("c1", c1.text.as_str()),
            ("c2", c2.text.as_str()),
        ],
    )?;
    let (label, fallback) = ctx.complete_label(&p3, &mut trace.steps)?;
    trace.unparseable = fallback;

    let prediction = Prediction {
        sample_id: sample.id.clone(),
        strategy: StrategyKind::Coc,
        label,
        unparseable_fallback: fallback,
    };
    Ok((prediction, trace))
}
