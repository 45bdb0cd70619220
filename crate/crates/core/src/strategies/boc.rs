//! Bagging of cues: T independent predictions from random q-cue subsets,
//! aggregated by majority vote.

use super::{
    majority_vote, require_text, sample_subsets, with_prompt_away, Prediction, StrategyContext,
    StrategyError, StrategyTrace, SubsetPrediction,
};
use crate::cues::{CueCategory, CuePool};
use crate::data::{Demonstrations, Sample};
use crate::types::{Label, StrategyKind};

pub const DEFAULT_SUBSET_COUNT: usize = 5;
pub const DEFAULT_SUBSET_SIZE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct BocOptions {
    /// Number of subsets T. An odd count avoids ties.
    pub t: usize,
    /// Cues per subset q.
    pub q: usize,
    pub seed: u64,
    /// Category being ablated; appends the prompt-away sentence to every
    /// prompt. The pool itself must already be ablated by the caller.
    pub prompt_away: Option<CueCategory>,
}

impl Default for BocOptions {
    fn default() -> Self {
        BocOptions {
            t: DEFAULT_SUBSET_COUNT,
            q: DEFAULT_SUBSET_SIZE,
            seed: 0,
            prompt_away: None,
        }
    }
}

pub fn run_boc(
    sample: &Sample,
    ctx: StrategyContext<'_>,
    pool: &CuePool,
    options: &BocOptions,
    demos: &Demonstrations,
) -> Result<(Prediction, StrategyTrace), StrategyError> {
    require_text(&sample.text)?;
    let subsets = sample_subsets(pool, options.t, options.q, options.seed)?;
    let demo_block = ctx.prompts.render_demos(&demos.pairs())?;
    let mut trace = StrategyTrace::new(StrategyKind::Boc, &sample.id);
    let mut labels: Vec<Label> = Vec::with_capacity(options.t);
    let mut subset_predictions = Vec::with_capacity(options.t);

    for subset in subsets {
        let cues_block = subset
            .iter()
            .map(|id| {
                let cue = pool.get(id).expect("subset ids come from the pool");
                format!("- {}: {}", cue.display_name, cue.description)
            })
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = with_prompt_away(
            ctx.prompts.render(
                "boc_predict",
                &[
                    ("demos", demo_block.as_str()),
                    ("cues_block", cues_block.as_str()),
                    ("text", sample.text.as_str()),
                ],
            )?,
            ctx.prompts,
            options.prompt_away,
        )?;
        let (label, fallback) = ctx.complete_label(&prompt, &mut trace.steps)?;
        if fallback {
            trace.unparseable = true;
        }
        labels.push(label);
        subset_predictions.push(SubsetPrediction { cues: subset, label });
    }

    let (label, tie) = majority_vote(&labels)?;
    trace.tie = tie;
    trace.subset_predictions = Some(subset_predictions);
    let prediction = Prediction {
        sample_id: sample.id.clone(),
        strategy: StrategyKind::Boc,
        label,
        unparseable_fallback: trace.unparseable,
    };
    Ok((prediction, trace))
}
