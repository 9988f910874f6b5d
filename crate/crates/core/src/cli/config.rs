//! Experiment configuration: TOML file layered over defaults, then
//! command-line overrides on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::FamilyConfig;
use crate::episodes::{SamplerConfig, Strategy};
use crate::error::{Error, Result};
use crate::metatrain::{FinetuneConfig, Mode, TrainConfig};
use crate::seed::RunSeeds;

pub const OUTPUT_ROOT_ENV: &str = "XLAMAML_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding `train.jsonl`, `dev.jsonl` and `test.jsonl`; a
    /// synthetic family is generated when unset.
    pub path: Option<PathBuf>,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    /// String label vocabulary for loaded data.
    pub label_names: Option<Vec<String>>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { path: None, train_size: 2000, dev_size: 250, test_size: 500, label_names: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: usize,
    pub layers: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { hidden: 16, layers: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Write a checkpoint every this many meta iterations (0: final only).
    pub checkpoint_every: usize,
    /// Evaluate on target test bags every this many meta iterations (0: never).
    pub eval_every: usize,
    /// Also run few-shot evaluation on the targets.
    pub few_shot: bool,
    pub data: DataConfig,
    /// Language roles, and the generator settings for synthetic data.
    pub family: FamilyConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            seed: 0,
            output: None,
            checkpoint_every: 0,
            eval_every: 0,
            few_shot: false,
            data: DataConfig::default(),
            family: FamilyConfig::default(),
            model: ModelSection::default(),
            train: desk_train_config(),
        }
    }
}

/// Training settings sized for the synthetic families: the published
/// learning rates are tuned for a pretrained transformer and barely move a
/// freshly initialised encoder, so rates and budgets are scaled up here.
pub fn desk_train_config() -> TrainConfig {
    TrainConfig {
        mode: Mode::XlaMaml,
        alpha: 0.3,
        inner_steps: 1,
        beta: 1e-3,
        weight_decay: 0.01,
        iters_per_lang: 50,
        finetune: FinetuneConfig { lr: 1e-2, batch_size: 32, epochs: 3, weight_decay: 0.01 },
        few_shot: FinetuneConfig { lr: 3e-3, batch_size: 32, epochs: 1, weight_decay: 0.01 },
        sampler: SamplerConfig { support_pool: Vec::new(), ..SamplerConfig::default() },
        ..TrainConfig::default()
    }
}

impl ExperimentConfig {
    /// Support pool, defaulting to the high-resource language.
    pub fn support_pool(&self) -> Vec<String> {
        if self.train.sampler.support_pool.is_empty() {
            vec![self.family.high_resource.clone()]
        } else {
            self.train.sampler.support_pool.clone()
        }
    }

    /// Query pool, defaulting to the auxiliary languages.
    pub fn query_pool(&self) -> Vec<String> {
        if self.train.sampler.query_pool.is_empty() {
            self.family.auxiliary.clone()
        } else {
            self.train.sampler.query_pool.clone()
        }
    }

    /// Training config with language pools resolved.
    pub fn resolved_train(&self) -> TrainConfig {
        let mut t = self.train.clone();
        t.sampler.support_pool = self.support_pool();
        t.sampler.query_pool = self.query_pool();
        t
    }

    pub fn seeds(&self) -> RunSeeds {
        RunSeeds::from_master(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.data.path {
            if !p.is_dir() {
                return Err(Error::config("data.path", format!("dataset directory `{}` does not exist", p.display())));
            }
        } else {
            self.family.validate()?;
        }
        if self.data.train_size == 0 || self.data.dev_size == 0 || self.data.test_size == 0 {
            return Err(Error::config("data", "split sizes must be >= 1"));
        }
        if self.model.hidden == 0 {
            return Err(Error::config("model.hidden", "must be >= 1"));
        }
        if self.family.targets.is_empty() {
            return Err(Error::config("family.targets", "at least one target language is required"));
        }
        self.resolved_train().validate()
    }

    /// Output directory: explicit setting, else `$XLAMAML_OUTPUT_ROOT/<name>`,
    /// else `runs/<name>`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(p) = &self.output {
            return p.clone();
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root).join(&self.name),
            _ => PathBuf::from("runs").join(&self.name),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }
}

/// A `key=value` override. The key is a dotted path into the config
/// (`train.sampler.k`); the value is parsed as TOML, falling back to a
/// bare string.
#[derive(Clone, Debug, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: toml::Value,
}

impl Override {
    pub fn new(key: impl Into<String>, value: toml::Value) -> Self {
        Override { key: key.into(), value }
    }

    pub fn parse(spec: &str) -> Result<Self> {
        let (key, raw) =
            spec.split_once('=').ok_or_else(|| Error::config(spec, "override must look like key=value"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::config(spec, "override key is empty"));
        }
        Ok(Override { key: key.to_string(), value: parse_value(raw.trim()) })
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Comma-separated language codes.
pub fn language_list(raw: &str) -> toml::Value {
    toml::Value::Array(
        raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| toml::Value::String(s.into())).collect(),
    )
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(Error::config(key, format!("`{p}` is not a section"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Field path named by a TOML deserialization error, when it can tell.
fn field_of(err: &toml::de::Error) -> String {
    let msg = err.message();
    for marker in ["unknown field `", "missing field `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    "config".into()
}

/// Defaults, then the file (if any), then `overrides` in order.
pub fn load(path: Option<&Path>, overrides: &[Override]) -> Result<ExperimentConfig> {
    let mut table =
        toml::Table::try_from(ExperimentConfig::default()).map_err(|e| Error::config("config", e.to_string()))?;
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: toml::Table = toml::from_str(&text)
            .map_err(|e| Error::config("config", format!("{}: {}", path.display(), e.message())))?;
        merge(&mut table, file);
    }
    for o in overrides {
        set_path(&mut table, &o.key, o.value.clone())?;
    }
    let text = toml::to_string(&table).map_err(|e| Error::config("config", e.to_string()))?;
    let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::config(field_of(&e), e.message()))?;
    Ok(cfg)
}

/// Overrides for the named command-line flags.
#[derive(Clone, Debug, Default)]
pub struct FlagOverrides {
    pub mode: Option<Mode>,
    pub strategy: Option<Strategy>,
    pub parallel: bool,
    pub support_langs: Option<String>,
    pub query_langs: Option<String>,
    pub seed: Option<u64>,
    pub iters_per_lang: Option<usize>,
    pub inner_steps: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub out: Option<PathBuf>,
}

impl FlagOverrides {
    pub fn to_overrides(&self) -> Vec<Override> {
        let mut out = Vec::new();
        let int = |v: usize| toml::Value::Integer(v as i64);
        if let Some(m) = self.mode {
            out.push(Override::new("train.mode", toml::Value::String(m.to_string())));
        }
        if let Some(s) = self.strategy {
            let name = match s {
                Strategy::Random => "random",
                Strategy::Covering => "covering",
            };
            out.push(Override::new("train.sampler.strategy", toml::Value::String(name.into())));
        }
        if self.parallel {
            out.push(Override::new("train.sampler.parallel", toml::Value::Boolean(true)));
        }
        if let Some(l) = &self.support_langs {
            out.push(Override::new("train.sampler.support_pool", language_list(l)));
        }
        if let Some(l) = &self.query_langs {
            out.push(Override::new("train.sampler.query_pool", language_list(l)));
        }
        if let Some(s) = self.seed {
            out.push(Override::new("seed", toml::Value::Integer(s as i64)));
        }
        if let Some(v) = self.iters_per_lang {
            out.push(Override::new("train.iters_per_lang", int(v)));
        }
        if let Some(v) = self.inner_steps {
            out.push(Override::new("train.inner_steps", int(v)));
        }
        if let Some(v) = self.alpha {
            out.push(Override::new("train.alpha", toml::Value::Float(v)));
        }
        if let Some(v) = self.beta {
            out.push(Override::new("train.beta", toml::Value::Float(v)));
        }
        if let Some(p) = &self.out {
            out.push(Override::new("output", toml::Value::String(p.display().to_string())));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_cli_over_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, "seed = 4\n[train]\nalpha = 0.25\niters_per_lang = 7\n").unwrap();
        let cfg = load(Some(&path), &[Override::parse("train.alpha=0.125").unwrap()]).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.train.alpha, 0.125);
        assert_eq!(cfg.train.iters_per_lang, 7);
        assert_eq!(cfg.train.beta, desk_train_config().beta);
    }

    #[test]
    fn unknown_keys_name_the_field() {
        let err = load(None, &[Override::parse("train.alhpa=1").unwrap()]).unwrap_err();
        assert!(err.to_string().contains("alhpa"), "{err}");
    }

    #[test]
    fn flags_map_to_keys() {
        let flags = FlagOverrides {
            mode: Some(Mode::XMaml),
            strategy: Some(Strategy::Covering),
            parallel: true,
            query_langs: Some("hi, de".into()),
            ..FlagOverrides::default()
        };
        let cfg = load(None, &flags.to_overrides()).unwrap();
        assert_eq!(cfg.train.mode, Mode::XMaml);
        assert_eq!(cfg.train.sampler.strategy, Strategy::Covering);
        assert!(cfg.train.sampler.parallel);
        assert_eq!(cfg.query_pool(), vec!["hi".to_string(), "de".to_string()]);
    }

    #[test]
    fn missing_dataset_names_field() {
        let cfg = load(None, &[Override::parse("data.path=\"/nonexistent/xyz\"").unwrap()]).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("data.path"), "{err}");
    }

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = ExperimentConfig::default();
        assert_eq!(toml::from_str::<ExperimentConfig>(&cfg.to_toml().unwrap()).unwrap(), cfg);
        assert!(cfg.validate().is_ok());
    }
}
