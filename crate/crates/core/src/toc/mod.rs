//! Tensor of cues: per-category cue extraction, embedding projection,
//! tensor-product fusion with appended ones, and a trainable linear head
//! over the fused representation. The backend stays frozen throughout; only
//! the projections and the head ever learn.

pub mod train;

pub use train::{batch_gradients, batch_loss, build_features, fit, train_toc, EpochStats};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::cues::{CueCategory, CuePool};
use crate::data::Sample;
use crate::prompts::PromptError;
use crate::strategies::{
    require_text, CueTexts, Prediction, StrategyContext, StrategyError, StrategyTrace, TraceStep,
};
use crate::types::{Label, StrategyKind};

#[derive(Debug, Error)]
pub enum TocError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("truncation dim {d} exceeds fused length {fused}")]
    InvalidTruncation { d: usize, fused: usize },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("model file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Affine map out = W x + b with W stored row-major (out_dim x in_dim).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProjection {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearProjection {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        LinearProjection {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut p = Self::zeros(dim, dim);
        for i in 0..dim {
            p.weights[i * dim + i] = 1.0;
        }
        p
    }

    /// Uniform init in ±1/sqrt(in_dim), bias zero.
    pub fn random(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let scale = 1.0 / (in_dim as f64).sqrt();
        LinearProjection {
            in_dim,
            out_dim,
            weights: (0..in_dim * out_dim).map(|_| rng.gen_range(-scale..scale)).collect(),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn apply(&self, input: &[f64]) -> Result<Vec<f64>, TocError> {
        if input.len() != self.in_dim {
            return Err(TocError::DimensionMismatch { expected: self.in_dim, got: input.len() });
        }
        let mut out = self.bias.clone();
        for (o, out_val) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            *out_val += row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
        }
        Ok(out)
    }
}

/// The three per-category projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionWeights {
    pub lin: LinearProjection,
    pub con: LinearProjection,
    pub emo: LinearProjection,
}

/// Flattened tensor product of the three projected vectors with a 1 appended
/// to each factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedRepresentation {
    pub values: Vec<f64>,
    /// (d_l, d_c, d_e) before the appended ones.
    pub dims: (usize, usize, usize),
}

impl FusedRepresentation {
    /// Row-major flat index of tensor entry (a, b, g).
    pub fn index(&self, a: usize, b: usize, g: usize) -> usize {
        let (_, d_c, d_e) = self.dims;
        (a * (d_c + 1) + b) * (d_e + 1) + g
    }

    pub fn get(&self, a: usize, b: usize, g: usize) -> f64 {
        self.values[self.index(a, b, g)]
    }

    /// Keeps the first `d` entries of the row-major flattening.
    pub fn truncated(&self, d: Option<usize>) -> Result<Vec<f64>, TocError> {
        match d {
            None => Ok(self.values.clone()),
            Some(d) if d <= self.values.len() => Ok(self.values[..d].to_vec()),
            Some(d) => Err(TocError::InvalidTruncation { d, fused: self.values.len() }),
        }
    }
}

/// tensor[a][b][g] = [l;1][a] * [c;1][b] * [e;1][g], flattened row-major.
///
/// The appended ones make single-cue features and bi-cue interactions
/// explicit sub-blocks of the fused tensor.
pub fn fuse(l: &[f64], c: &[f64], e: &[f64]) -> FusedRepresentation {
    let dims = (l.len(), c.len(), e.len());
    let mut values = Vec::with_capacity((l.len() + 1) * (c.len() + 1) * (e.len() + 1));
    for a in 0..=l.len() {
        let lv = if a < l.len() { l[a] } else { 1.0 };
        for b in 0..=c.len() {
            let cv = if b < c.len() { c[b] } else { 1.0 };
            for g in 0..=e.len() {
                let ev = if g < e.len() { e[g] } else { 1.0 };
                values.push(lv * cv * ev);
            }
        }
    }
    FusedRepresentation { values, dims }
}

/// Linear head producing the sarcasm logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParameters {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl HeadParameters {
    pub fn zeros(dim: usize) -> Self {
        HeadParameters { weights: vec![0.0; dim], bias: 0.0 }
    }

    pub fn logit(&self, fused: &[f64]) -> Result<f64, TocError> {
        if fused.len() != self.weights.len() {
            return Err(TocError::DimensionMismatch {
                expected: self.weights.len(),
                got: fused.len(),
            });
        }
        Ok(self.bias + self.weights.iter().zip(fused).map(|(w, z)| w * z).sum::<f64>())
    }
}

/// Training hyperparameters and fused-space dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TocConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub d_l: usize,
    pub d_c: usize,
    pub d_e: usize,
    /// Optional truncation of the fused vector to its first `d` entries.
    pub truncate: Option<usize>,
}

impl Default for TocConfig {
    fn default() -> Self {
        TocConfig {
            learning_rate: 0.05,
            epochs: 200,
            early_stop_patience: 20,
            seed: 0,
            d_l: 7,
            d_c: 7,
            d_e: 7,
            truncate: None,
        }
    }
}

impl TocConfig {
    pub fn full_fused_len(&self) -> usize {
        (self.d_l + 1) * (self.d_c + 1) * (self.d_e + 1)
    }

    /// Fused length after optional truncation.
    pub fn fused_len(&self) -> usize {
        self.truncate.unwrap_or_else(|| self.full_fused_len())
    }

    pub fn validate(&self) -> Result<(), TocError> {
        if let Some(d) = self.truncate {
            if d > self.full_fused_len() || d == 0 {
                return Err(TocError::InvalidTruncation { d, fused: self.full_fused_len() });
            }
        }
        Ok(())
    }
}

/// One sample's three cue-text embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFeatures {
    pub lin: Vec<f64>,
    pub con: Vec<f64>,
    pub emo: Vec<f64>,
}

/// Projections + head, frozen after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TocModel {
    pub version: u32,
    pub embed_dim: usize,
    pub config: TocConfig,
    pub projections: ProjectionWeights,
    pub head: HeadParameters,
}

impl TocModel {
    /// Seeded init: projections uniform ±1/sqrt(embed_dim), head zeros.
    pub fn init(embed_dim: usize, config: TocConfig) -> Result<Self, TocError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let projections = ProjectionWeights {
            lin: LinearProjection::random(embed_dim, config.d_l, &mut rng),
            con: LinearProjection::random(embed_dim, config.d_c, &mut rng),
            emo: LinearProjection::random(embed_dim, config.d_e, &mut rng),
        };
        let head = HeadParameters::zeros(config.fused_len());
        Ok(TocModel { version: 1, embed_dim, config, projections, head })
    }

    /// Projected-and-fused feature vector for one sample.
    pub fn fused(&self, features: &SampleFeatures) -> Result<Vec<f64>, TocError> {
        let u = self.projections.lin.apply(&features.lin)?;
        let v = self.projections.con.apply(&features.con)?;
        let w = self.projections.emo.apply(&features.emo)?;
        fuse(&u, &v, &w).truncated(self.config.truncate)
    }

    pub fn logit(&self, features: &SampleFeatures) -> Result<f64, TocError> {
        self.head.logit(&self.fused(features)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), TocError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, TocError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Flattens all trainable parameters (projections then head).
    pub fn pack(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for p in [&self.projections.lin, &self.projections.con, &self.projections.emo] {
            out.extend_from_slice(&p.weights);
            out.extend_from_slice(&p.bias);
        }
        out.extend_from_slice(&self.head.weights);
        out.push(self.head.bias);
        out
    }

    /// Inverse of [`pack`]; the vector length must match exactly.
    pub fn unpack(&mut self, params: &[f64]) {
        let mut offset = 0;
        for p in [
            &mut self.projections.lin,
            &mut self.projections.con,
            &mut self.projections.emo,
        ] {
            let w = p.weights.len();
            p.weights.copy_from_slice(&params[offset..offset + w]);
            offset += w;
            let b = p.bias.len();
            p.bias.copy_from_slice(&params[offset..offset + b]);
            offset += b;
        }
        let h = self.head.weights.len();
        self.head.weights.copy_from_slice(&params[offset..offset + h]);
        offset += h;
        self.head.bias = params[offset];
        assert_eq!(offset + 1, params.len(), "parameter vector length mismatch");
    }
}

/// Three extraction completions, one per category, each naming only its own
/// category's cues. Empty responses become the literal "none"; an ablated
/// category skips its completion and is "none" outright.
pub fn extract_cue_texts(
    sample: &Sample,
    ctx: StrategyContext<'_>,
    pool: &CuePool,
    ablation: Option<CueCategory>,
) -> Result<(CueTexts, Vec<TraceStep>), TocError> {
    require_text(&sample.text)?;
    let mut steps = Vec::new();
    let mut texts = Vec::with_capacity(3);
    for category in CueCategory::ALL {
        if ablation == Some(category) {
            texts.push("none".to_string());
            continue;
        }
        let cue_list = pool.category_name_list(category);
        let prompt = ctx.prompts.render(
            "toc_extract",
            &[
                ("category", category.prompt_name()),
                ("cue_list", cue_list.as_str()),
                ("text", sample.text.as_str()),
            ],
        )?;
        let response = ctx.complete_user(&prompt)?;
        let text = if response.text.trim().is_empty() {
            "none".to_string()
        } else {
            response.text.clone()
        };
        steps.push(TraceStep {
            prompt,
            response: response.text,
            artifact: format!("extract:{}", category.prompt_name()),
        });
        texts.push(text);
    }
    let mut iter = texts.into_iter();
    let cue_texts = CueTexts {
        lin: iter.next().unwrap(),
        con: iter.next().unwrap(),
        emo: iter.next().unwrap(),
    };
    Ok((cue_texts, steps))
}

/// Embeds the three cue texts through the backend.
pub fn embed_cue_texts(
    ctx: StrategyContext<'_>,
    cue_texts: &CueTexts,
    expected_dim: Option<usize>,
) -> Result<SampleFeatures, TocError> {
    let embed = |text: &str| -> Result<Vec<f64>, TocError> {
        let vector = ctx.backend.embed(text)?;
        if let Some(expected) = expected_dim {
            if vector.dim() != expected {
                return Err(TocError::DimensionMismatch { expected, got: vector.dim() });
            }
        }
        Ok(vector.values)
    };
    Ok(SampleFeatures {
        lin: embed(&cue_texts.lin)?,
        con: embed(&cue_texts.con)?,
        emo: embed(&cue_texts.emo)?,
    })
}

/// Full ToC prediction: extract, embed, project, fuse, classify.
/// Sarcastic iff the head logit is positive.
pub fn predict_toc(
    sample: &Sample,
    ctx: StrategyContext<'_>,
    pool: &CuePool,
    model: &TocModel,
    ablation: Option<CueCategory>,
) -> Result<(Prediction, f64, StrategyTrace), TocError> {
    let (cue_texts, steps) = extract_cue_texts(sample, ctx, pool, ablation)?;
    let features = embed_cue_texts(ctx, &cue_texts, Some(model.embed_dim))?;
    let logit = model.logit(&features)?;
    let label = if logit > 0.0 { Label::Sarcastic } else { Label::NotSarcastic };
    let mut trace = StrategyTrace::new(StrategyKind::Toc, &sample.id);
    trace.steps = steps;
    trace.cue_texts = Some(cue_texts);
    let prediction = Prediction {
        sample_id: sample.id.clone(),
        strategy: StrategyKind::Toc,
        label,
        unparseable_fallback: false,
    };
    Ok((prediction, logit, trace))
}
