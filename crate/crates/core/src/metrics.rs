//! Classification metrics and the Welch unpaired t-test.

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::types::Label;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {preds} predictions vs {golds} golds")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("need at least two runs per side for a t-test")]
    InsufficientRuns,
    #[error("non-finite value in t-test input")]
    NonFiniteInput,
}

fn check_lengths(preds: &[Label], golds: &[Label]) -> Result<(), MetricsError> {
    if preds.is_empty() || golds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if preds.len() != golds.len() {
        return Err(MetricsError::LengthMismatch { preds: preds.len(), golds: golds.len() });
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn accuracy(preds: &[Label], golds: &[Label]) -> Result<f64, MetricsError> {
    check_lengths(preds, golds)?;
    let correct = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(correct as f64 / preds.len() as f64)
}

fn f1_for_class(preds: &[Label], golds: &[Label], class: Label) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (p, g) in preds.iter().zip(golds) {
        match (*p == class, *g == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    // a class absent from both predictions and golds contributes F1 = 0
    if 2 * tp + fp + fn_ == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Unweighted mean of per-class F1 over the two task classes.
pub fn macro_f1(preds: &[Label], golds: &[Label]) -> Result<f64, MetricsError> {
    check_lengths(preds, golds)?;
    let f1_sarcastic = f1_for_class(preds, golds, Label::Sarcastic);
    let f1_not = f1_for_class(preds, golds, Label::NotSarcastic);
    Ok((f1_sarcastic + f1_not) / 2.0)
}

/// True when the golds contain a single class only; Macro-F1 is still
/// computed but reports should flag it.
pub fn degenerate_golds(golds: &[Label]) -> bool {
    golds.iter().all(|g| *g == Label::Sarcastic) || golds.iter().all(|g| *g == Label::NotSarcastic)
}

/// Per-gold-class error rates. `fp_rate` = FP / #gold-NotSarcastic,
/// `fn_rate` = FN / #gold-Sarcastic; a rate with an empty gold class is None.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ErrorRates {
    pub fp_rate: Option<f64>,
    pub fn_rate: Option<f64>,
}

pub fn error_rates(preds: &[Label], golds: &[Label]) -> Result<ErrorRates, MetricsError> {
    check_lengths(preds, golds)?;
    let mut false_pos = 0usize;
    let mut false_neg = 0usize;
    let mut gold_pos = 0usize;
    let mut gold_neg = 0usize;
    for (p, g) in preds.iter().zip(golds) {
        match g {
            Label::Sarcastic => {
                gold_pos += 1;
                if *p == Label::NotSarcastic {
                    false_neg += 1;
                }
            }
            Label::NotSarcastic => {
                gold_neg += 1;
                if *p == Label::Sarcastic {
                    false_pos += 1;
                }
            }
        }
    }
    Ok(ErrorRates {
        fp_rate: (gold_neg > 0).then(|| false_pos as f64 / gold_neg as f64),
        fn_rate: (gold_pos > 0).then(|| false_neg as f64 / gold_pos as f64),
    })
}

/// Two-sided Welch (unequal-variance) t-test p-value.
///
/// Degenerate zero-variance inputs: equal means give p = 1, different means
/// give p = 0.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(MetricsError::InsufficientRuns);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFiniteInput);
    }
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    let mean1 = a.iter().sum::<f64>() / n1;
    let mean2 = b.iter().sum::<f64>() / n2;
    let var1 = a.iter().map(|x| (x - mean1).powi(2)).sum::<f64>() / (n1 - 1.0);
    let var2 = b.iter().map(|x| (x - mean2).powi(2)).sum::<f64>() / (n2 - 1.0);
    let se1 = var1 / n1;
    let se2 = var2 / n2;
    let se = (se1 + se2).sqrt();
    if se == 0.0 {
        return Ok(if mean1 == mean2 { 1.0 } else { 0.0 });
    }
    let t = (mean1 - mean2) / se;
    if t == 0.0 {
        return Ok(1.0);
    }
    // Welch–Satterthwaite degrees of freedom
    let df = (se1 + se2).powi(2) / (se1.powi(2) / (n1 - 1.0) + se2.powi(2) / (n2 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid t distribution");
    Ok(2.0 * dist.cdf(-t.abs()))
}
