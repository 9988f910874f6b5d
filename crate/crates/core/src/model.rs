//! The base learner: a small tanh encoder with a classification head or an
//! extractive span head.
//!
//! Encoder: input layer (linear map or embedding lookup, plus bias) followed
//! by `layers` blocks of `h ← tanh(h)·W + b`. With every weight zero the
//! output is the last bias. Token inputs are encoded position by position
//! and mean-pooled; the pooled vector stands in for a `[CLS]` representation.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::example::{Example, Input, Label};
use crate::params::{ParamSet, ParamVars};
use crate::tensor::{Shape, Tensor};

pub const SPAN_BEAM: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InputKind {
    Features { dim: usize },
    Tokens { vocab: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input: InputKind,
    /// Hidden width `H`.
    pub hidden: usize,
    pub layers: usize,
}

impl EncoderConfig {
    pub fn features(dim: usize) -> Self {
        EncoderConfig { input: InputKind::Features { dim }, hidden: 16, layers: 2 }
    }

    pub fn tokens(vocab: usize) -> Self {
        EncoderConfig { input: InputKind::Tokens { vocab }, hidden: 16, layers: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::InvalidInput("hidden width must be at least 1".into()));
        }
        match self.input {
            InputKind::Features { dim: 0 } => Err(Error::InvalidInput("feature dim must be at least 1".into())),
            InputKind::Tokens { vocab: 0 } => Err(Error::InvalidInput("vocab size must be at least 1".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum HeadConfig {
    Classify { classes: usize },
    Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub head: HeadConfig,
}

/// Hidden states of one encoded input.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    /// `L×H`, one row per position (a single row in feature mode).
    pub positions: Var,
    /// `1×H`.
    pub pooled: Var,
}

/// Start/end vectors of the span head, each `H×1`.
#[derive(Clone, Debug)]
pub struct SpanHead {
    pub start: Var,
    pub end: Var,
}

/// Output layer over pooled vectors: `H×C` weights and `1×C` bias.
#[derive(Clone, Debug)]
pub struct ClassifierHead {
    pub weight: Var,
    pub bias: Var,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Prediction {
    Class(usize),
    Span { start: usize, end: usize },
}

const IN_W: &str = "enc.in.w";
const EMBED: &str = "enc.embed";
const IN_B: &str = "enc.in.b";
const CLS_W: &str = "head.cls.w";
const CLS_B: &str = "head.cls.b";
const SPAN_S: &str = "head.span.start";
const SPAN_E: &str = "head.span.end";

fn layer_names(i: usize) -> (String, String) {
    (format!("enc.l{i}.w"), format!("enc.l{i}.b"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.encoder.validate()?;
        match (config.encoder.input, config.head) {
            (_, HeadConfig::Classify { classes: 0 }) => {
                Err(Error::InvalidInput("classifier needs at least one class".into()))
            }
            (InputKind::Features { .. }, HeadConfig::Span) => {
                Err(Error::InvalidInput("span head needs token inputs".into()))
            }
            _ => Ok(Model { config }),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn hidden(&self) -> usize {
        self.config.encoder.hidden
    }

    /// Expected parameter names and shapes.
    pub fn param_shapes(&self) -> BTreeMap<String, Shape> {
        let h = self.hidden();
        let mut out = BTreeMap::new();
        match self.config.encoder.input {
            InputKind::Features { dim } => out.insert(IN_W.into(), Shape::new(dim, h)),
            InputKind::Tokens { vocab } => out.insert(EMBED.into(), Shape::new(vocab, h)),
        };
        out.insert(IN_B.into(), Shape::new(1, h));
        for i in 1..=self.config.encoder.layers {
            let (w, b) = layer_names(i);
            out.insert(w, Shape::new(h, h));
            out.insert(b, Shape::new(1, h));
        }
        match self.config.head {
            HeadConfig::Classify { classes } => {
                out.insert(CLS_W.into(), Shape::new(h, classes));
                out.insert(CLS_B.into(), Shape::new(1, classes));
            }
            HeadConfig::Span => {
                out.insert(SPAN_S.into(), Shape::new(h, 1));
                out.insert(SPAN_E.into(), Shape::new(h, 1));
            }
        }
        out
    }

    /// Normal(0, 1/fan_in) weights, zero biases.
    pub fn init<R: Rng>(&self, rng: &mut R) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, shape) in self.param_shapes() {
            let is_bias = name.ends_with(".b");
            let data = if is_bias {
                vec![0.0; shape.numel()]
            } else {
                let fan_in = if name == EMBED { 1 } else { shape.rows };
                let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("positive std");
                (0..shape.numel()).map(|_| normal.sample(rng)).collect()
            };
            out.insert(name, Tensor::new(shape, data).expect("shape matches data"));
        }
        out
    }

    /// Zero weights and biases everywhere.
    pub fn zeros(&self) -> ParamSet {
        self.param_shapes().into_iter().map(|(n, s)| (n, Tensor::zeros(s))).collect()
    }

    fn layers(&self, mut h: Var, params: &ParamVars) -> Result<Var> {
        for i in 1..=self.config.encoder.layers {
            let (w, b) = layer_names(i);
            h = h.tanh().matmul(params.get(&w)?)?.add_row(params.get(&b)?)?;
        }
        Ok(h)
    }

    fn check_tokens(&self, ids: &[usize]) -> Result<()> {
        if let InputKind::Tokens { vocab } = self.config.encoder.input {
            if let Some(bad) = ids.iter().find(|&&t| t >= vocab) {
                return Err(Error::InvalidInput(format!("token id {bad} >= vocab size {vocab}")));
            }
        }
        Ok(())
    }

    pub fn encode(&self, x: &Input, params: &ParamVars) -> Result<EncoderOutput> {
        match (x, self.config.encoder.input) {
            (Input::Features(v), InputKind::Features { dim }) => {
                if v.len() != dim {
                    return Err(Error::InvalidInput(format!("expected {dim} features, got {}", v.len())));
                }
                let pooled = self.encode_features(&[v.as_slice()], params)?;
                Ok(EncoderOutput { positions: pooled.clone(), pooled })
            }
            (Input::Tokens(ids), InputKind::Tokens { .. }) => {
                if ids.is_empty() {
                    return Err(Error::InvalidInput("empty token sequence".into()));
                }
                self.check_tokens(ids)?;
                let h0 = params.get(EMBED)?.gather_rows(ids)?.add_row(params.get(IN_B)?)?;
                let positions = self.layers(h0, params)?;
                let pooled = positions.sum_cols().scale(1.0 / ids.len() as f64);
                Ok(EncoderOutput { positions, pooled })
            }
            _ => Err(Error::InvalidInput("input kind does not match encoder".into())),
        }
    }

    /// Batched feature-mode encoding, `B×H`.
    fn encode_features(&self, rows: &[&[f64]], params: &ParamVars) -> Result<Var> {
        let dim = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::InvalidInput("ragged feature batch".into()));
            }
            data.extend_from_slice(r);
        }
        let x = Var::constant(Tensor::new(Shape::new(rows.len(), dim), data)?);
        let h0 = x.matmul(params.get(IN_W)?)?.add_row(params.get(IN_B)?)?;
        self.layers(h0, params)
    }

    pub fn classifier_head(&self, params: &ParamVars) -> Result<ClassifierHead> {
        Ok(ClassifierHead { weight: params.get(CLS_W)?.clone(), bias: params.get(CLS_B)?.clone() })
    }

    pub fn span_head(&self, params: &ParamVars) -> Result<SpanHead> {
        Ok(SpanHead { start: params.get(SPAN_S)?.clone(), end: params.get(SPAN_E)?.clone() })
    }

    /// Mean task loss over `batch`.
    pub fn loss(&self, params: &ParamVars, batch: &[&Example]) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("loss over an empty batch".into()));
        }
        match (self.config.encoder.input, self.config.head) {
            (InputKind::Features { .. }, HeadConfig::Classify { classes }) => {
                let mut rows = Vec::with_capacity(batch.len());
                let mut labels = Vec::with_capacity(batch.len());
                for ex in batch {
                    let (Input::Features(v), Label::Class(c)) = (&ex.x, ex.y) else {
                        return Err(Error::InvalidInput("expected feature input with class label".into()));
                    };
                    check_class(c, classes)?;
                    rows.push(v.as_slice());
                    labels.push(c);
                }
                let logp = classify(&self.encode_features(&rows, params)?, &self.classifier_head(params)?)?;
                Ok(logp.gather_cols(&labels)?.mean()?.neg())
            }
            (InputKind::Tokens { .. }, head) => {
                let mut total: Option<Var> = None;
                for ex in batch {
                    let enc = self.encode(&ex.x, params)?;
                    let l = match (head, ex.y) {
                        (HeadConfig::Classify { classes }, Label::Class(c)) => {
                            check_class(c, classes)?;
                            classify(&enc.pooled, &self.classifier_head(params)?)?.gather_cols(&[c])?.neg()
                        }
                        (HeadConfig::Span, Label::Span { start, end }) => {
                            let (ls, le) = span_log_scores(&enc, &self.span_head(params)?)?;
                            span_nll(&ls, &le, start, end)?
                        }
                        _ => return Err(Error::InvalidInput("label kind does not match head".into())),
                    };
                    total = Some(match total {
                        Some(t) => t.add(&l)?,
                        None => l,
                    });
                }
                Ok(total.expect("non-empty batch").scale(1.0 / batch.len() as f64))
            }
            (InputKind::Features { .. }, HeadConfig::Span) => unreachable!("rejected in Model::new"),
        }
    }

    pub fn predict(&self, params: &ParamSet, examples: &[&Example]) -> Result<Vec<Prediction>> {
        let vars = params.to_constants();
        match (self.config.encoder.input, self.config.head) {
            (InputKind::Features { .. }, HeadConfig::Classify { .. }) => {
                if examples.is_empty() {
                    return Ok(Vec::new());
                }
                let rows: Vec<&[f64]> = examples
                    .iter()
                    .map(|ex| match &ex.x {
                        Input::Features(v) => Ok(v.as_slice()),
                        Input::Tokens(_) => Err(Error::InvalidInput("expected feature input".into())),
                    })
                    .collect::<Result<_>>()?;
                let logp = classify(&self.encode_features(&rows, &vars)?, &self.classifier_head(&vars)?)?;
                Ok((0..rows.len()).map(|r| Prediction::Class(argmax(logp.value().row_slice(r)))).collect())
            }
            (InputKind::Tokens { .. }, HeadConfig::Classify { .. }) => examples
                .iter()
                .map(|ex| {
                    let enc = self.encode(&ex.x, &vars)?;
                    let logp = classify(&enc.pooled, &self.classifier_head(&vars)?)?;
                    Ok(Prediction::Class(argmax(logp.value().data())))
                })
                .collect(),
            (InputKind::Tokens { .. }, HeadConfig::Span) => examples
                .iter()
                .map(|ex| {
                    let enc = self.encode(&ex.x, &vars)?;
                    let head = self.span_head(&vars)?;
                    let s = enc.positions.matmul(&head.start)?;
                    let e = enc.positions.matmul(&head.end)?;
                    let (start, end, _) = decode_span(s.value().data(), e.value().data(), SPAN_BEAM)?;
                    Ok(Prediction::Span { start, end })
                })
                .collect(),
            (InputKind::Features { .. }, HeadConfig::Span) => unreachable!("rejected in Model::new"),
        }
    }
}

fn check_class(c: usize, classes: usize) -> Result<()> {
    if c >= classes {
        return Err(Error::InvalidInput(format!("class label {c} >= class count {classes}")));
    }
    Ok(())
}

/// First index of the maximum; NaN never wins.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] || xs[best].is_nan() {
            best = i;
        }
    }
    best
}

/// Log-probabilities over classes for each pooled row, `B×C`.
pub fn classify(pooled: &Var, head: &ClassifierHead) -> Result<Var> {
    pooled.matmul(&head.weight)?.add_row(&head.bias)?.row_log_softmax()
}

/// Start and end log-distributions over positions, each `1×L`.
fn span_log_scores(enc: &EncoderOutput, head: &SpanHead) -> Result<(Var, Var)> {
    let s = enc.positions.matmul(&head.start)?.t().row_log_softmax()?;
    let e = enc.positions.matmul(&head.end)?.t().row_log_softmax()?;
    Ok((s, e))
}

/// `P(i = start) = softmax_i(S·T_i)` and likewise for the end, each `1×L`.
pub fn span_scores(enc: &EncoderOutput, head: &SpanHead) -> Result<(Var, Var)> {
    let s = enc.positions.matmul(&head.start)?.t().row_softmax()?;
    let e = enc.positions.matmul(&head.end)?.t().row_softmax()?;
    Ok((s, e))
}

fn check_gold(len: usize, start: usize, end: usize) -> Result<()> {
    if start >= len || end >= len || end < start {
        return Err(Error::InvalidInput(format!("gold span ({start}, {end}) invalid for {len} positions")));
    }
    Ok(())
}

fn span_nll(start_logp: &Var, end_logp: &Var, start: usize, end: usize) -> Result<Var> {
    check_gold(start_logp.shape().cols, start, end)?;
    Ok(start_logp.gather_cols(&[start])?.add(&end_logp.gather_cols(&[end])?)?.neg())
}

/// `−(log P(start = gold_start) + log P(end = gold_end))` from `1×L` distributions.
pub fn span_loss(start_dist: &Var, end_dist: &Var, gold_start: usize, gold_end: usize) -> Result<Var> {
    span_nll(&start_dist.ln(), &end_dist.ln(), gold_start, gold_end)
}

/// Best valid span `(i, j, score)` with `j ≥ i`, maximising `start[i] + end[j]`.
///
/// Walks the `k` best unconstrained pairs and returns the first valid one;
/// if all `k` are invalid it searches every valid pair. Ties go to the
/// smaller `i`, then the smaller `j`.
pub fn decode_span(start: &[f64], end: &[f64], k: usize) -> Result<(usize, usize, f64)> {
    if start.is_empty() || start.len() != end.len() {
        return Err(Error::InvalidInput(format!(
            "span logits must be non-empty and equal length (got {} and {})",
            start.len(),
            end.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidInput("beam size must be at least 1".into()));
    }
    let n = start.len();
    let better =
        |a: &(usize, usize, f64), b: &(usize, usize, f64)| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1));
    let mut pairs: Vec<(usize, usize, f64)> =
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j, start[i] + end[j]))).collect();
    let k = k.min(pairs.len());
    pairs.select_nth_unstable_by(k - 1, better);
    pairs.truncate(k);
    pairs.sort_by(better);
    if let Some(&best) = pairs.iter().find(|(i, j, _)| j >= i) {
        return Ok(best);
    }
    let mut best = (0, 0, start[0] + end[0]);
    for i in 0..n {
        for j in i..n {
            let cand = (i, j, start[i] + end[j]);
            if better(&cand, &best).is_lt() {
                best = cand;
            }
        }
    }
    Ok(best)
}
