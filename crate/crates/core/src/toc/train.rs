//! Full-batch gradient descent for the ToC projections and head.
//!
//! Binary cross-entropy on the head logit; gradients flow through the fused
//! tensor into all three projections. The backend is never touched during
//! the descent: features are extracted and embedded once up front.

use super::{
    embed_cue_texts, extract_cue_texts, fuse, SampleFeatures, TocConfig, TocError, TocModel,
};
use crate::cues::{CueCategory, CuePool};
use crate::data::Sample;
use crate::metrics::macro_f1;
use crate::strategies::StrategyContext;
use crate::types::Label;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_macro_f1: Option<f64>,
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy of the head logits over the batch.
pub fn batch_loss(
    model: &TocModel,
    features: &[SampleFeatures],
    labels: &[Label],
) -> Result<f64, TocError> {
    let n = features.len() as f64;
    let mut total = 0.0;
    for (f, label) in features.iter().zip(labels) {
        let s = model.logit(f)?;
        let y = if label.is_sarcastic() { 1.0 } else { 0.0 };
        total += softplus(s) - y * s;
    }
    Ok(total / n)
}

/// Mean loss and its gradient in [`TocModel::pack`] order.
pub fn batch_gradients(
    model: &TocModel,
    features: &[SampleFeatures],
    labels: &[Label],
) -> Result<(f64, Vec<f64>), TocError> {
    let config = &model.config;
    let (d_l, d_c, d_e) = (config.d_l, config.d_c, config.d_e);
    let full_len = config.full_fused_len();
    let trunc_len = config.fused_len();
    let n = features.len() as f64;

    let mut loss = 0.0;
    let mut grad_w_lin = vec![0.0; model.projections.lin.weights.len()];
    let mut grad_b_lin = vec![0.0; d_l];
    let mut grad_w_con = vec![0.0; model.projections.con.weights.len()];
    let mut grad_b_con = vec![0.0; d_c];
    let mut grad_w_emo = vec![0.0; model.projections.emo.weights.len()];
    let mut grad_b_emo = vec![0.0; d_e];
    let mut grad_head_w = vec![0.0; trunc_len];
    let mut grad_head_b = 0.0;

    for (f, label) in features.iter().zip(labels) {
        let mut u = model.projections.lin.apply(&f.lin)?;
        let mut v = model.projections.con.apply(&f.con)?;
        let mut w = model.projections.emo.apply(&f.emo)?;
        let fused = fuse(&u, &v, &w);
        let z = fused.truncated(config.truncate)?;
        let s = model.head.logit(&z)?;
        let y = if label.is_sarcastic() { 1.0 } else { 0.0 };
        loss += softplus(s) - y * s;

        // d(mean loss)/ds for this sample
        let g = (sigmoid(s) - y) / n;
        grad_head_b += g;
        for (gw, zj) in grad_head_w.iter_mut().zip(&z) {
            *gw += g * zj;
        }

        // gradient w.r.t. the full fused tensor (zero past the truncation)
        u.push(1.0);
        v.push(1.0);
        w.push(1.0);
        let mut grad_u = vec![0.0; d_l];
        let mut grad_v = vec![0.0; d_c];
        let mut grad_w_vec = vec![0.0; d_e];
        for flat in 0..full_len {
            if flat >= trunc_len {
                break;
            }
            let gz = g * model.head.weights[flat];
            if gz == 0.0 {
                continue;
            }
            let gamma = flat % (d_e + 1);
            let rest = flat / (d_e + 1);
            let beta = rest % (d_c + 1);
            let alpha = rest / (d_c + 1);
            if alpha < d_l {
                grad_u[alpha] += gz * v[beta] * w[gamma];
            }
            if beta < d_c {
                grad_v[beta] += gz * u[alpha] * w[gamma];
            }
            if gamma < d_e {
                grad_w_vec[gamma] += gz * u[alpha] * v[beta];
            }
        }

        let in_dim = model.embed_dim;
        for a in 0..d_l {
            grad_b_lin[a] += grad_u[a];
            for i in 0..in_dim {
                grad_w_lin[a * in_dim + i] += grad_u[a] * f.lin[i];
            }
        }
        for b in 0..d_c {
            grad_b_con[b] += grad_v[b];
            for i in 0..in_dim {
                grad_w_con[b * in_dim + i] += grad_v[b] * f.con[i];
            }
        }
        for c in 0..d_e {
            grad_b_emo[c] += grad_w_vec[c];
            for i in 0..in_dim {
                grad_w_emo[c * in_dim + i] += grad_w_vec[c] * f.emo[i];
            }
        }
    }

    let mut packed = Vec::new();
    packed.extend(grad_w_lin);
    packed.extend(grad_b_lin);
    packed.extend(grad_w_con);
    packed.extend(grad_b_con);
    packed.extend(grad_w_emo);
    packed.extend(grad_b_emo);
    packed.extend(grad_head_w);
    packed.push(grad_head_b);
    Ok((loss / n, packed))
}

/// Core descent loop over precomputed features. Early-stops on dev Macro-F1
/// when a dev set is given and restores the best parameters seen.
pub fn fit(
    embed_dim: usize,
    config: TocConfig,
    train: &[(SampleFeatures, Label)],
    dev: &[(SampleFeatures, Label)],
) -> Result<(TocModel, Vec<EpochStats>), TocError> {
    if train.is_empty() {
        return Err(TocError::EmptyTrainSet);
    }
    config.validate()?;
    let mut model = TocModel::init(embed_dim, config)?;
    let train_features: Vec<SampleFeatures> = train.iter().map(|(f, _)| f.clone()).collect();
    let train_labels: Vec<Label> = train.iter().map(|(_, l)| *l).collect();

    let mut history = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=model.config.epochs {
        let (loss, grads) = batch_gradients(&model, &train_features, &train_labels)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(TocError::NonFiniteLoss { epoch });
        }
        let dev_f1 = if dev.is_empty() {
            None
        } else {
            let preds: Result<Vec<Label>, TocError> = dev
                .iter()
                .map(|(f, _)| {
                    Ok(if model.logit(f)? > 0.0 { Label::Sarcastic } else { Label::NotSarcastic })
                })
                .collect();
            let golds: Vec<Label> = dev.iter().map(|(_, l)| *l).collect();
            Some(macro_f1(&preds?, &golds).expect("dev set is non-empty"))
        };
        history.push(EpochStats { epoch, train_loss: loss, dev_macro_f1: dev_f1 });

        if let Some(f1) = dev_f1 {
            let improved = best.as_ref().map_or(true, |(b, _)| f1 > *b);
            if improved {
                best = Some((f1, model.pack()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > model.config.early_stop_patience {
                    break;
                }
            }
        }

        let lr = model.config.learning_rate;
        let mut params = model.pack();
        for (p, g) in params.iter_mut().zip(&grads) {
            *p -= lr * g;
        }
        model.unpack(&params);
    }

    if let Some((_, params)) = best {
        model.unpack(&params);
    }
    Ok((model, history))
}

/// Extracts and embeds features for a set of samples.
pub fn build_features(
    samples: &[Sample],
    ctx: StrategyContext<'_>,
    pool: &CuePool,
    ablation: Option<CueCategory>,
) -> Result<Vec<(SampleFeatures, Label)>, TocError> {
    let mut expected_dim = None;
    let mut out = Vec::with_capacity(samples.len());
    for sample in samples {
        let (cue_texts, _) = extract_cue_texts(sample, ctx, pool, ablation)?;
        let features = embed_cue_texts(ctx, &cue_texts, expected_dim)?;
        expected_dim = Some(features.lin.len());
        out.push((features, sample.label));
    }
    Ok(out)
}

/// End-to-end training: extract + embed the train and dev splits once, then
/// run the descent. The backend is frozen; it only serves extraction
/// completions and embeddings.
pub fn train_toc(
    train: &[Sample],
    dev: &[Sample],
    ctx: StrategyContext<'_>,
    pool: &CuePool,
    config: TocConfig,
    ablation: Option<CueCategory>,
) -> Result<(TocModel, Vec<EpochStats>), TocError> {
    if train.is_empty() {
        return Err(TocError::EmptyTrainSet);
    }
    let train_set = build_features(train, ctx, pool, ablation)?;
    let dev_set = build_features(dev, ctx, pool, ablation)?;
    let embed_dim = train_set[0].0.lin.len();
    fit(embed_dim, config, &train_set, &dev_set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_features(rng: &mut impl Rng, dim: usize) -> SampleFeatures {
        let mut gen = |dim: usize| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SampleFeatures { lin: gen(dim), con: gen(dim), emo: gen(dim) }
    }

    fn random_batch(seed: u64, n: usize, dim: usize) -> Vec<(SampleFeatures, Label)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Sarcastic } else { Label::NotSarcastic };
                (random_features(&mut rng, dim), label)
            })
            .collect()
    }

    /// Central-difference gradient check at several random parameter points.
    #[test]
    fn analytic_gradients_match_finite_differences() {
        let dim = 6;
        let config = TocConfig { d_l: 2, d_c: 2, d_e: 2, seed: 11, ..Default::default() };
        let batch = random_batch(3, 4, dim);
        let features: Vec<SampleFeatures> = batch.iter().map(|(f, _)| f.clone()).collect();
        let labels: Vec<Label> = batch.iter().map(|(_, l)| *l).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let eps = 1e-5;
        for point in 0..5 {
            let mut model = TocModel::init(dim, config.clone()).unwrap();
            // move to a random parameter point (head included)
            let mut params = model.pack();
            for p in params.iter_mut() {
                *p += rng.gen_range(-0.5..0.5);
            }
            model.unpack(&params);

            let (_, analytic) = batch_gradients(&model, &features, &labels).unwrap();
            let mut max_rel = 0.0f64;
            for j in 0..params.len() {
                let mut plus = model.clone();
                let mut p = params.clone();
                p[j] += eps;
                plus.unpack(&p);
                let mut minus = model.clone();
                p[j] -= 2.0 * eps;
                minus.unpack(&p);
                let numeric = (batch_loss(&plus, &features, &labels).unwrap()
                    - batch_loss(&minus, &features, &labels).unwrap())
                    / (2.0 * eps);
                let rel = (analytic[j] - numeric).abs()
                    / (analytic[j].abs() + numeric.abs()).max(1e-6);
                max_rel = max_rel.max(rel);
            }
            assert!(max_rel < 1e-4, "point {point}: max relative error {max_rel}");
        }
    }

    #[test]
    fn gradcheck_with_truncation() {
        let dim = 4;
        let config = TocConfig {
            d_l: 2,
            d_c: 1,
            d_e: 1,
            truncate: Some(7),
            seed: 2,
            ..Default::default()
        };
        let batch = random_batch(9, 3, dim);
        let features: Vec<SampleFeatures> = batch.iter().map(|(f, _)| f.clone()).collect();
        let labels: Vec<Label> = batch.iter().map(|(_, l)| *l).collect();
        let mut model = TocModel::init(dim, config).unwrap();
        let mut params = model.pack();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for p in params.iter_mut() {
            *p += rng.gen_range(-0.5..0.5);
        }
        model.unpack(&params);
        let (_, analytic) = batch_gradients(&model, &features, &labels).unwrap();
        let eps = 1e-5;
        for j in 0..params.len() {
            let mut p = params.clone();
            p[j] += eps;
            let mut plus = model.clone();
            plus.unpack(&p);
            p[j] -= 2.0 * eps;
            let mut minus = model.clone();
            minus.unpack(&p);
            let numeric = (batch_loss(&plus, &features, &labels).unwrap()
                - batch_loss(&minus, &features, &labels).unwrap())
                / (2.0 * eps);
            let rel =
                (analytic[j] - numeric).abs() / (analytic[j].abs() + numeric.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {j}: rel {rel}");
        }
    }

    /// Linearly separable 8-sample set: the lin embedding's first coordinate
    /// carries the label with a wide margin.
    fn separable_batch() -> Vec<(SampleFeatures, Label)> {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        (0..8)
            .map(|i| {
                let sarcastic = i % 2 == 0;
                let sign = if sarcastic { 3.0 } else { -3.0 };
                let mut noise = || rng.gen_range(-0.2..0.2);
                let f = SampleFeatures {
                    lin: vec![sign + noise(), noise(), noise()],
                    con: vec![noise(), noise(), noise()],
                    emo: vec![noise(), noise(), noise()],
                };
                (f, if sarcastic { Label::Sarcastic } else { Label::NotSarcastic })
            })
            .collect()
    }

    #[test]
    fn separable_fixture_reaches_full_train_accuracy() {
        let config = TocConfig { d_l: 3, d_c: 3, d_e: 3, seed: 1, ..Default::default() };
        let train = separable_batch();
        let (model, history) = fit(3, config, &train, &[]).unwrap();

        // loss strictly decreases over the first 10 epochs
        for w in history[..10].windows(2) {
            assert!(w[1].train_loss < w[0].train_loss, "{history:?}");
        }
        let correct = train
            .iter()
            .filter(|(f, label)| {
                let predicted = model.logit(f).unwrap() > 0.0;
                predicted == label.is_sarcastic()
            })
            .count();
        assert_eq!(correct, train.len(), "train accuracy must reach 1.0");
        assert!(history.len() <= 200);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let config = TocConfig {
            learning_rate: 0.0,
            epochs: 25,
            d_l: 2,
            d_c: 2,
            d_e: 2,
            seed: 7,
            ..Default::default()
        };
        let train = random_batch(5, 6, 4);
        let init = TocModel::init(4, config.clone()).unwrap();
        let (model, history) = fit(4, config, &train, &[]).unwrap();
        assert_eq!(model.pack(), init.pack());
        assert_eq!(history.len(), 25);
        // loss is constant too
        assert_eq!(history[0].train_loss, history[24].train_loss);
    }

    #[test]
    fn runaway_learning_rate_reports_non_finite_loss() {
        let config = TocConfig {
            learning_rate: 1e308,
            epochs: 10,
            d_l: 2,
            d_c: 2,
            d_e: 2,
            seed: 3,
            ..Default::default()
        };
        // unbalanced labels so the head gradient is nonzero
        let mut train = random_batch(13, 4, 4);
        for (_, label) in train.iter_mut().take(3) {
            *label = Label::Sarcastic;
        }
        let err = fit(4, config, &train, &[]).unwrap_err();
        assert!(matches!(err, TocError::NonFiniteLoss { .. }));
    }

    #[test]
    fn early_stopping_restores_best_parameters() {
        let config = TocConfig {
            epochs: 200,
            early_stop_patience: 5,
            d_l: 2,
            d_c: 2,
            d_e: 2,
            seed: 19,
            ..Default::default()
        };
        let train = separable_batch();
        let dev = separable_batch();
        let (model, history) = fit(3, config, &train, &dev).unwrap();
        // dev is separable too, so the restored parameters classify it well
        let correct = dev
            .iter()
            .filter(|(f, label)| (model.logit(f).unwrap() > 0.0) == label.is_sarcastic())
            .count();
        assert_eq!(correct, dev.len());
        assert!(history.iter().all(|e| e.dev_macro_f1.is_some()));
    }

    #[test]
    fn empty_train_set_rejected() {
        let config = TocConfig::default();
        assert!(matches!(fit(4, config, &[], &[]), Err(TocError::EmptyTrainSet)));
    }
}
