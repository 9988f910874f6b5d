//! Accuracy and SQuAD-style EM/F1, per language.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::data::{Bags, LanguageBag};
use crate::error::{Error, Result};
use crate::example::{Example, Label};
use crate::model::{Model, Prediction};
use crate::par;
use crate::params::ParamSet;

/// Exact match and token-overlap F1 between two token sequences.
///
/// Overlap counts shared tokens with multiplicity. F1 is 0 when nothing
/// overlaps; two empty sequences score `(1, 1)`.
pub fn compute_em_f1<T: Eq + Hash>(pred: &[T], gold: &[T]) -> (f64, f64) {
    let em = if pred == gold { 1.0 } else { 0.0 };
    if pred.is_empty() || gold.is_empty() {
        return (em, em);
    }
    let mut counts: HashMap<&T, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return (em, 0.0);
    }
    // harmonic mean of precision c/|p| and recall c/|g|
    (em, 2.0 * common as f64 / (pred.len() + gold.len()) as f64)
}

/// EM/F1 of two inclusive position spans, over the positions they cover.
pub fn span_em_f1(pred: (usize, usize), gold: (usize, usize)) -> (f64, f64) {
    let cover = |(s, e): (usize, usize)| (s..=e).collect::<Vec<_>>();
    compute_em_f1(&cover(pred), &cover(gold))
}

/// Per-language evaluation summary. Classification fills `accuracy`; span
/// extraction fills `em` and `f1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageMetrics {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub em: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f1: Option<f64>,
}

impl LanguageMetrics {
    /// Accuracy for classification, F1 for spans.
    pub fn primary(&self) -> f64 {
        self.accuracy.or(self.f1).unwrap_or(f64::NAN)
    }

    pub fn primary_name(&self) -> &'static str {
        if self.accuracy.is_some() {
            "accuracy"
        } else {
            "f1"
        }
    }
}

pub type Results = BTreeMap<String, LanguageMetrics>;

/// Scores predictions against gold labels.
pub fn score(predictions: &[Prediction], examples: &[&Example]) -> Result<LanguageMetrics> {
    if predictions.len() != examples.len() || examples.is_empty() {
        return Err(Error::InvalidInput(format!("{} predictions for {} examples", predictions.len(), examples.len())));
    }
    let n = examples.len();
    match examples[0].y {
        Label::Class(_) => {
            let mut correct = 0usize;
            for (p, ex) in predictions.iter().zip(examples) {
                match (p, ex.y) {
                    (Prediction::Class(a), Label::Class(b)) => correct += usize::from(*a == b),
                    _ => return Err(Error::InvalidInput("mixed prediction and label kinds".into())),
                }
            }
            Ok(LanguageMetrics { n, accuracy: Some(correct as f64 / n as f64), em: None, f1: None })
        }
        Label::Span { .. } => {
            let (mut em, mut f1) = (0.0, 0.0);
            for (p, ex) in predictions.iter().zip(examples) {
                match (p, ex.y) {
                    (Prediction::Span { start, end }, Label::Span { start: gs, end: ge }) => {
                        let (e, f) = span_em_f1((*start, *end), (gs, ge));
                        em += e;
                        f1 += f;
                    }
                    _ => return Err(Error::InvalidInput("mixed prediction and label kinds".into())),
                }
            }
            Ok(LanguageMetrics { n, accuracy: None, em: Some(em / n as f64), f1: Some(f1 / n as f64) })
        }
    }
}

pub fn evaluate_bag(model: &Model, params: &ParamSet, bag: &LanguageBag) -> Result<LanguageMetrics> {
    if bag.is_empty() {
        return Err(Error::InvalidInput(format!("test bag `{}` is empty", bag.language)));
    }
    let examples: Vec<&Example> = bag.examples.iter().collect();
    score(&model.predict(params, &examples)?, &examples)
}

/// Metrics for every bag, evaluated concurrently, keyed by language code.
pub fn zero_shot_eval(model: &Model, params: &ParamSet, test: &Bags) -> Result<Results> {
    let bags: Vec<&LanguageBag> = test.values().collect();
    let metrics = par::try_map(&bags, |bag| evaluate_bag(model, params, bag))?;
    Ok(test.keys().cloned().zip(metrics).collect())
}

/// Mean primary metric over `langs`.
pub fn mean_primary(results: &Results, langs: &[String]) -> Result<f64> {
    if langs.is_empty() {
        return Err(Error::InvalidInput("mean over no languages".into()));
    }
    let mut total = 0.0;
    for l in langs {
        total += results.get(l).ok_or_else(|| Error::InvalidInput(format!("no results for `{l}`")))?.primary();
    }
    Ok(total / langs.len() as f64)
}
