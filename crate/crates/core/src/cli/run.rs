//! The experiment pipeline: data → high-resource finetuning → meta-training
//! → evaluation → artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{self, Bags, Corpus, CorpusLayout, FamilyTask, JsonlSchema, LanguageBag, Split};
use crate::error::{Error, Result};
use crate::example::{Example, Input, Label};
use crate::metatrain::{self, mean_primary, zero_shot_eval, Mode, Results};
use crate::model::{EncoderConfig, HeadConfig, InputKind, Model, ModelConfig};
use crate::optim::AdamW;
use crate::params::ParamSet;
use crate::seed::{self, RunSeeds};

use super::config::ExperimentConfig;

pub const CONFIG_ECHO: &str = "config.echo";
pub const METRICS: &str = "metrics.jsonl";
pub const CHECKPOINTS: &str = "checkpoints";
pub const RESULTS: &str = "results.json";

/// Everything shared by runs that differ only in meta-training settings.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub corpus: Corpus,
    pub model: Model,
    pub seeds: RunSeeds,
    /// Parameters after high-resource finetuning.
    pub finetuned: ParamSet,
    /// Zero-shot results of `finetuned` on every test bag.
    pub baseline: Results,
    pub targets: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub name: String,
    pub mode: Mode,
    pub seed: u64,
    pub metric: String,
    pub iterations: usize,
    pub targets: Vec<String>,
    pub zero_shot: Results,
    pub baseline_zero_shot: Results,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub few_shot: Option<Results>,
    /// Mean target metric of this run and of the baseline.
    pub target_mean: f64,
    pub baseline_target_mean: f64,
}

impl RunResults {
    pub fn delta(&self) -> f64 {
        self.target_mean - self.baseline_target_mean
    }
}

fn infer_model(config: &ExperimentConfig, bags: &[&LanguageBag]) -> Result<ModelConfig> {
    let first = bags
        .iter()
        .flat_map(|b| b.examples.first())
        .next()
        .ok_or_else(|| Error::config("data.path", "dataset has no examples"))?;
    let head = match first.y {
        Label::Span { .. } => HeadConfig::Span,
        Label::Class(_) => {
            let classes = match &config.data.label_names {
                Some(names) => names.len(),
                None => {
                    let max = bags
                        .iter()
                        .flat_map(|b| &b.examples)
                        .filter_map(|e| match e.y {
                            Label::Class(c) => Some(c),
                            Label::Span { .. } => None,
                        })
                        .max()
                        .unwrap_or(0);
                    max + 1
                }
            };
            HeadConfig::Classify { classes }
        }
    };
    let input = match &first.x {
        Input::Features(v) => InputKind::Features { dim: v.len() },
        Input::Tokens(_) => {
            let vocab = bags
                .iter()
                .flat_map(|b| &b.examples)
                .filter_map(|e| match &e.x {
                    Input::Tokens(t) => t.iter().max().copied(),
                    Input::Features(_) => None,
                })
                .max()
                .unwrap_or(0)
                + 1;
            InputKind::Tokens { vocab }
        }
    };
    Ok(ModelConfig { encoder: EncoderConfig { input, hidden: config.model.hidden, layers: config.model.layers }, head })
}

fn synthetic_model(config: &ExperimentConfig) -> ModelConfig {
    let (input, head) = match config.family.task {
        FamilyTask::Classification { dim, classes, .. } => {
            (InputKind::Features { dim }, HeadConfig::Classify { classes })
        }
        FamilyTask::Span { vocab, .. } => (InputKind::Tokens { vocab }, HeadConfig::Span),
    };
    ModelConfig { encoder: EncoderConfig { input, hidden: config.model.hidden, layers: config.model.layers }, head }
}

/// The synthetic corpus and matching model shape for `config`.
pub fn synthetic_corpus(config: &ExperimentConfig, seeds: &RunSeeds) -> Result<(Corpus, ModelConfig)> {
    let family = data::gen_language_family(&config.family, seeds.data)?;
    let layout =
        CorpusLayout::uniform(&config.family, config.data.train_size, config.data.dev_size, config.data.test_size);
    Ok((data::gen_corpus(&layout, &family, seeds.data)?, synthetic_model(config)))
}

/// Reads `train.jsonl`, `dev.jsonl` and `test.jsonl` from `dir`.
pub fn load_corpus(config: &ExperimentConfig, dir: &Path) -> Result<(Corpus, ModelConfig)> {
    let read = |name: &str, split: Split, tokens: bool| {
        let schema = JsonlSchema { label_names: config.data.label_names.clone(), ..JsonlSchema::standard(tokens) };
        data::load_jsonl(&dir.join(name), &schema, split)
    };
    // the task kind in the family section says how to read `x`
    let tokens = matches!(config.family.task, FamilyTask::Span { .. });
    let mut train = read("train.jsonl", Split::Train, tokens)?.bags;
    let dev = read("dev.jsonl", Split::Dev, tokens)?.bags;
    let test = read("test.jsonl", Split::Test, tokens)?.bags;
    let hr = &config.family.high_resource;
    let train = train
        .remove(hr)
        .ok_or_else(|| Error::config("family.high_resource", format!("train.jsonl has no `{hr}` examples")))?;
    let all: Vec<&LanguageBag> = std::iter::once(&train).chain(dev.values()).chain(test.values()).collect();
    let model = infer_model(config, &all)?;
    Ok((Corpus { train, dev, test }, model))
}

/// Data, model, high-resource finetuning and the baseline evaluation.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let seeds = config.seeds();
    let (corpus, model_config) = match &config.data.path {
        Some(dir) => load_corpus(config, dir)?,
        None => synthetic_corpus(config, &seeds)?,
    };
    let model = Model::new(model_config)?;
    for t in &config.family.targets {
        if !corpus.test.contains_key(t) {
            return Err(Error::config("family.targets", format!("no test data for `{t}`")));
        }
    }
    let theta0 = model.init(&mut seed::rng(seeds.init));
    let train: Vec<&Example> = corpus.train.examples.iter().collect();
    let finetuned = metatrain::finetune(&model, &theta0, &train, &config.train.finetune, seeds.finetune)?;
    let baseline = zero_shot_eval(&model, &finetuned, &corpus.test)?;
    Ok(Prepared { corpus, model, seeds, finetuned, baseline, targets: config.family.targets.clone() })
}

/// Target test bags only.
fn target_bags(prepared: &Prepared) -> Bags {
    prepared.targets.iter().filter_map(|t| prepared.corpus.test.get(t).map(|b| (t.clone(), b.clone()))).collect()
}

struct Artifacts {
    dir: PathBuf,
    metrics: fs::File,
}

impl Artifacts {
    fn create(dir: &Path, config: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(dir.join(CHECKPOINTS)).map_err(|e| Error::io(dir, e))?;
        let seeds = config.seeds();
        let echo = format!(
            "{}\n[seeds]\nmaster = \"{}\"\ndata = \"{:#018x}\"\nsampler = \"{:#018x}\"\ninit = \"{:#018x}\"\nfinetune = \"{:#018x}\"\n",
            config.to_toml()?.trim_end(),
            seeds.master,
            seeds.data,
            seeds.sampler,
            seeds.init,
            seeds.finetune
        );
        write_file(&dir.join(CONFIG_ECHO), echo.as_bytes())?;
        let path = dir.join(METRICS);
        let metrics = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Artifacts { dir: dir.to_path_buf(), metrics })
    }

    fn line<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let mut text = serde_json::to_string(value)?;
        text.push('\n');
        self.metrics.write_all(text.as_bytes()).map_err(|e| Error::io(self.dir.join(METRICS), e))
    }

    fn checkpoint(&self, step: usize, params: &ParamSet, optimizer: Option<&AdamW>) -> Result<()> {
        let value = serde_json::json!({
            "step": step,
            "params": params.to_json(),
            "optimizer": optimizer.map(AdamW::to_json),
        });
        let path = self.dir.join(CHECKPOINTS).join(format!("step-{step}.json"));
        write_file(&path, serde_json::to_string(&value)?.as_bytes())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Meta-trains from the prepared finetuned parameters and evaluates.
/// Writes artifacts to `out` when given.
pub fn run_prepared(
    config: &ExperimentConfig,
    prepared: &Prepared,
    out: Option<&Path>,
) -> Result<(ParamSet, RunResults)> {
    let train = config.resolved_train();
    let mut artifacts = out.map(|dir| Artifacts::create(dir, config)).transpose()?;
    let targets = target_bags(prepared);
    let model = &prepared.model;
    let mut last_optimizer: Option<AdamW> = None;
    let (theta, _) = metatrain::run_meta_training(
        model,
        &train,
        &prepared.corpus.dev,
        &prepared.finetuned,
        prepared.seeds.sampler,
        |record, theta, opt| {
            if config.eval_every > 0 && record.iteration % config.eval_every == 0 {
                record.eval = Some(zero_shot_eval(model, theta, &targets)?);
            }
            if let Some(a) = artifacts.as_mut() {
                a.line(record)?;
                if config.checkpoint_every > 0 && record.iteration % config.checkpoint_every == 0 {
                    a.checkpoint(record.iteration, theta, Some(opt))?;
                }
            }
            last_optimizer = Some(opt.clone());
            Ok(())
        },
    )?;
    let zero_shot = zero_shot_eval(model, &theta, &prepared.corpus.test)?;
    let few_shot = if config.few_shot {
        Some(metatrain::few_shot_eval_all(
            model,
            &theta,
            &prepared.corpus.dev,
            &prepared.corpus.test,
            &prepared.targets,
            &train.few_shot,
            seed::derive(prepared.seeds.finetune, "few-shot"),
        )?)
    } else {
        None
    };
    let metric = zero_shot.values().next().map_or("accuracy", |m| m.primary_name()).to_string();
    let results = RunResults {
        name: config.name.clone(),
        mode: train.mode,
        seed: config.seed,
        metric,
        iterations: train.total_iterations(),
        targets: prepared.targets.clone(),
        target_mean: mean_primary(&zero_shot, &prepared.targets)?,
        baseline_target_mean: mean_primary(&prepared.baseline, &prepared.targets)?,
        zero_shot,
        baseline_zero_shot: prepared.baseline.clone(),
        few_shot,
    };
    if let Some(a) = artifacts.as_mut() {
        a.line(&serde_json::json!({ "final": &results }))?;
        a.checkpoint(results.iterations, &theta, last_optimizer.as_ref())?;
        write_file(&a.dir.join(RESULTS), serde_json::to_string_pretty(&results)?.as_bytes())?;
    }
    Ok((theta, results))
}

/// Full pipeline for one config.
pub fn run(config: &ExperimentConfig, out: Option<&Path>) -> Result<RunResults> {
    let prepared = prepare(config)?;
    Ok(run_prepared(config, &prepared, out)?.1)
}

/// Writes the synthetic corpus of `config` as JSONL into `dir`.
pub fn gen_data(config: &ExperimentConfig, dir: &Path) -> Result<BTreeMap<String, usize>> {
    let (corpus, _) = synthetic_corpus(config, &config.seeds())?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    data::write_jsonl([&corpus.train], &dir.join("train.jsonl"))?;
    data::write_jsonl(corpus.dev.values(), &dir.join("dev.jsonl"))?;
    data::write_jsonl(corpus.test.values(), &dir.join("test.jsonl"))?;
    let mut counts = BTreeMap::new();
    counts.insert("train".to_string(), corpus.train.len());
    counts.insert("dev".to_string(), corpus.dev.values().map(LanguageBag::len).sum());
    counts.insert("test".to_string(), corpus.test.values().map(LanguageBag::len).sum());
    Ok(counts)
}
