//! High-resource finetuning, the cross-lingual meta-training loop and its
//! ablations, and zero-/few-shot evaluation.

mod eval;

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::data::{Bags, LanguageBag};
use crate::episodes::{Episode, EpisodeSampler, SamplerConfig};
use crate::error::{Error, Result};
use crate::example::Example;
use crate::model::Model;
use crate::optim::{linear_lr, sgd_functional_step, AdamW, AdamWConfig};
use crate::params::{ParamSet, ParamVars};
use crate::seed;

pub use eval::{
    compute_em_f1, evaluate_bag, mean_primary, score, span_em_f1, zero_shot_eval, LanguageMetrics, Results,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// High-resource finetuning only.
    Baseline,
    /// Support and query from the same auxiliary languages.
    XMaml,
    /// Support and query from different language pools.
    #[default]
    XlaMaml,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::XMaml => "x-maml",
            Mode::XlaMaml => "xla-maml",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "x-maml" => Ok(Mode::XMaml),
            "xla-maml" => Ok(Mode::XlaMaml),
            other => Err(Error::config("mode", format!("expected baseline, x-maml or xla-maml, got `{other}`"))),
        }
    }
}

/// Supervised AdamW training with a linear schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
}

impl Default for FinetuneConfig {
    /// Batch 32, 3 epochs, AdamW at 2e-5 with decay 0.01.
    fn default() -> Self {
        FinetuneConfig { lr: 2e-5, batch_size: 32, epochs: 3, weight_decay: 0.01 }
    }
}

impl FinetuneConfig {
    /// Same optimizer, a single epoch.
    pub fn few_shot() -> Self {
        FinetuneConfig { epochs: 1, ..Self::default() }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::config(format!("{field}.lr"), "must be a finite value >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config(format!("{field}.batch_size"), "must be >= 1"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config(format!("{field}.weight_decay"), "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Inner SGD step size.
    pub alpha: f64,
    pub inner_steps: usize,
    /// Base meta learning rate, decayed linearly to zero.
    pub beta: f64,
    pub weight_decay: f64,
    /// Total meta iterations are this times the number of query languages.
    pub iters_per_lang: usize,
    pub episodes_per_update: usize,
    /// Detach inner gradients (first-order approximation).
    pub first_order: bool,
    pub sampler: SamplerConfig,
    pub finetune: FinetuneConfig,
    pub few_shot: FinetuneConfig,
}

impl Default for TrainConfig {
    /// Published NLI settings: α = β = 1e-5, decay 0.01, 500 iterations per
    /// meta language, batch 8 for both sets.
    fn default() -> Self {
        TrainConfig {
            mode: Mode::XlaMaml,
            alpha: 1e-5,
            inner_steps: 1,
            beta: 1e-5,
            weight_decay: 0.01,
            iters_per_lang: 500,
            episodes_per_update: 1,
            first_order: false,
            sampler: SamplerConfig::default(),
            finetune: FinetuneConfig::default(),
            few_shot: FinetuneConfig::few_shot(),
        }
    }
}

impl TrainConfig {
    /// Span-task variant: 100 iterations per meta language; finetuning at
    /// 3e-5, batch 12, 2 epochs.
    pub fn span_default() -> Self {
        TrainConfig {
            iters_per_lang: 100,
            finetune: FinetuneConfig { lr: 3e-5, batch_size: 12, epochs: 2, weight_decay: 0.01 },
            few_shot: FinetuneConfig { lr: 3e-5, batch_size: 12, epochs: 1, weight_decay: 0.01 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode != Mode::Baseline {
            if !(self.alpha > 0.0) {
                return Err(Error::config("alpha", "must be > 0"));
            }
            if !(self.beta > 0.0) {
                return Err(Error::config("beta", "must be > 0"));
            }
        }
        if self.inner_steps == 0 {
            return Err(Error::config("inner_steps", "must be >= 1"));
        }
        if self.episodes_per_update == 0 {
            return Err(Error::config("episodes_per_update", "must be >= 1"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be >= 0"));
        }
        self.finetune.validate("finetune")?;
        self.few_shot.validate("few_shot")
    }

    /// Sampler settings with the mode's language roles applied.
    pub fn effective_sampler(&self) -> SamplerConfig {
        let mut s = self.sampler.clone();
        s.tied = self.mode == Mode::XMaml;
        if s.tied {
            s.support_subset = s.query_subset;
        }
        s
    }

    pub fn total_iterations(&self) -> usize {
        match self.mode {
            Mode::Baseline => 0,
            _ => self.iters_per_lang * self.sampler.query_pool.len(),
        }
    }
}

fn check_finite(v: f64, what: &'static str, context: impl FnOnce() -> String) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { what, context: context() })
    }
}

/// Supervised training on `examples`. Zero epochs return `params` unchanged.
pub fn finetune(
    model: &Model,
    params: &ParamSet,
    examples: &[&Example],
    config: &FinetuneConfig,
    seed: u64,
) -> Result<ParamSet> {
    config.validate("finetune")?;
    if examples.is_empty() {
        return Err(Error::InvalidInput("finetuning on an empty bag".into()));
    }
    let mut theta = params.clone();
    let batches_per_epoch = examples.len().div_ceil(config.batch_size);
    let total = batches_per_epoch * config.epochs;
    let mut opt = AdamW::new(AdamWConfig::default().with_weight_decay(config.weight_decay));
    let mut rng = seed::rng(seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut step = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| examples[i]).collect();
            let vars = theta.to_vars();
            let loss = model.loss(&vars, &batch)?;
            let l = loss.item()?;
            check_finite(l, "finetuning loss", || format!("epoch {epoch}, step {step}"))?;
            let grads = vars.grad(&loss, false)?.values();
            opt.step(&mut theta, &grads, linear_lr(step, total, config.lr))?;
            step += 1;
        }
    }
    if !theta.all_finite() {
        return Err(Error::NonFinite { what: "parameters", context: "after finetuning".into() });
    }
    Ok(theta)
}

/// `steps` functional SGD steps on `support_loss`, starting from `params`.
///
/// With `track_meta_graph` the result stays differentiable with respect to
/// `params` through the inner gradients; without it the inner gradients are
/// constants (first-order). Returns `θ′` and the loss before the first step.
pub fn inner_adapt<F>(
    params: &ParamVars,
    support_loss: F,
    alpha: f64,
    steps: usize,
    track_meta_graph: bool,
) -> Result<(ParamVars, f64)>
where
    F: Fn(&ParamVars) -> Result<Var>,
{
    let mut theta = params.clone();
    let mut first = None;
    for s in 0..steps {
        let loss = support_loss(&theta)?;
        let l = loss.item()?;
        check_finite(l, "inner loss", || format!("inner step {s}"))?;
        first.get_or_insert(l);
        let grads = theta.grad(&loss, track_meta_graph)?;
        theta = sgd_functional_step(&theta, &grads, alpha)?;
    }
    Ok((theta, first.unwrap_or(f64::NAN)))
}

/// Meta gradient of one or more tasks.
#[derive(Clone, Debug)]
pub struct MetaGradient {
    pub grads: ParamSet,
    /// Mean inner loss over tasks.
    pub inner_loss: f64,
    /// Summed query loss at the adapted parameters.
    pub meta_loss: f64,
}

/// `∇_θ Σ_i L1_i(θ′_i)` with `θ′_i` from [`inner_adapt`] on `L0_i`,
/// differentiated through the inner steps.
pub fn meta_gradient<S, Q>(
    params: &ParamSet,
    tasks: &[(S, Q)],
    alpha: f64,
    steps: usize,
    first_order: bool,
) -> Result<MetaGradient>
where
    S: Fn(&ParamVars) -> Result<Var>,
    Q: Fn(&ParamVars) -> Result<Var>,
{
    if tasks.is_empty() {
        return Err(Error::InvalidInput("meta step needs at least one task".into()));
    }
    let theta = params.to_vars();
    let mut total: Option<Var> = None;
    let mut inner = 0.0;
    for (support, query) in tasks {
        let (adapted, l0) = inner_adapt(&theta, support, alpha, steps, !first_order)?;
        inner += l0;
        let l1 = query(&adapted)?;
        total = Some(match total {
            Some(t) => t.add(&l1)?,
            None => l1,
        });
    }
    let total = total.expect("nonempty tasks");
    let meta_loss = total.item()?;
    check_finite(meta_loss, "meta loss", || "meta step".into())?;
    let grads = theta.grad(&total, false)?.values();
    Ok(MetaGradient { grads, inner_loss: inner / tasks.len() as f64, meta_loss })
}

/// Loss closures for an episode: support loss and query loss on `model`.
pub fn episode_tasks<'a>(
    model: &'a Model,
    episodes: &'a [Episode],
) -> Vec<(impl Fn(&ParamVars) -> Result<Var> + 'a, impl Fn(&ParamVars) -> Result<Var> + 'a)> {
    episodes
        .iter()
        .map(move |ep| {
            let s = ep.support_examples();
            let q = ep.query_examples();
            (move |p: &ParamVars| model.loss(p, &s), move |p: &ParamVars| model.loss(p, &q))
        })
        .collect()
}

/// One meta update: meta gradient over `episodes`, then AdamW at `lr_t`.
pub fn meta_step(
    model: &Model,
    params: &mut ParamSet,
    episodes: &[Episode],
    config: &TrainConfig,
    optimizer: &mut AdamW,
    lr_t: f64,
) -> Result<MetaGradient> {
    let tasks = episode_tasks(model, episodes);
    let mg = meta_gradient(params, &tasks, config.alpha, config.inner_steps, config.first_order)?;
    optimizer.step(params, &mg.grads, lr_t)?;
    if !params.all_finite() {
        return Err(Error::NonFinite { what: "parameters", context: "after meta step".into() });
    }
    Ok(mg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub inner_loss: f64,
    pub meta_loss: f64,
    pub lr: f64,
    pub support_languages: Vec<Vec<String>>,
    pub query_languages: Vec<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eval: Option<Results>,
}

/// Meta-trains from `theta0` on the language bags in `bags`.
///
/// `on_iteration` sees every record (it may attach evaluation results), the
/// updated parameters and the optimizer. Baseline mode returns `theta0`.
pub fn run_meta_training<F>(
    model: &Model,
    config: &TrainConfig,
    bags: &Bags,
    theta0: &ParamSet,
    sampler_seed: u64,
    mut on_iteration: F,
) -> Result<(ParamSet, Vec<MetricsRecord>)>
where
    F: FnMut(&mut MetricsRecord, &ParamSet, &AdamW) -> Result<()>,
{
    config.validate()?;
    let mut theta = theta0.clone();
    let total = config.total_iterations();
    if total == 0 {
        return Ok((theta, Vec::new()));
    }
    let mut sampler = EpisodeSampler::new(bags, config.effective_sampler(), sampler_seed)?;
    let mut optimizer = AdamW::new(AdamWConfig::default().with_weight_decay(config.weight_decay));
    let mut log = Vec::with_capacity(total);
    for it in 0..total {
        let episodes: Vec<Episode> =
            (0..config.episodes_per_update).map(|_| sampler.next_episode()).collect::<Result<_>>()?;
        let lr = linear_lr(it, total, config.beta);
        let mg = meta_step(model, &mut theta, &episodes, config, &mut optimizer, lr).map_err(|e| annotate(e, it))?;
        let mut record = MetricsRecord {
            iteration: it + 1,
            inner_loss: mg.inner_loss,
            meta_loss: mg.meta_loss,
            lr,
            support_languages: episodes.iter().map(|e| e.support_languages.clone()).collect(),
            query_languages: episodes.iter().map(|e| e.query_languages.clone()).collect(),
            eval: None,
        };
        on_iteration(&mut record, &theta, &optimizer)?;
        log.push(record);
    }
    Ok((theta, log))
}

fn annotate(e: Error, it: usize) -> Error {
    match e {
        Error::NonFinite { what, context } => Error::NonFinite { what, context: format!("iteration {it}, {context}") },
        other => other,
    }
}

/// Finetunes a copy of `params` on the target dev bag, then evaluates on
/// the target test bag. `params` is not modified.
pub fn few_shot_eval(
    model: &Model,
    params: &ParamSet,
    dev: &LanguageBag,
    test: &LanguageBag,
    config: &FinetuneConfig,
    seed: u64,
) -> Result<LanguageMetrics> {
    let examples: Vec<&Example> = dev.examples.iter().collect();
    let adapted = finetune(model, params, &examples, config, seed)?;
    evaluate_bag(model, &adapted, test)
}

/// [`few_shot_eval`] for every language in `langs`, merged in code order.
pub fn few_shot_eval_all(
    model: &Model,
    params: &ParamSet,
    dev: &Bags,
    test: &Bags,
    langs: &[String],
    config: &FinetuneConfig,
    seed: u64,
) -> Result<Results> {
    let pick = |b: &'_ Bags, l: &str| b.get(l).cloned().ok_or_else(|| Error::InvalidInput(format!("no bag for `{l}`")));
    let jobs: Vec<(String, LanguageBag, LanguageBag)> =
        langs.iter().map(|l| Ok((l.clone(), pick(dev, l)?, pick(test, l)?))).collect::<Result<_>>()?;
    let out = crate::par::try_map(&jobs, |(l, d, t)| {
        Ok((l.clone(), few_shot_eval(model, params, d, t, config, seed::derive(seed, l))?))
    })?;
    Ok(out.into_iter().collect::<BTreeMap<_, _>>())
}
